#pragma once

// Mean-centred linear regression through latent components: the iterative
// deflation PLS procedure and the single-eigendecomposition Bridge PLS.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "hrm/error.hpp"
#include "hrm/random.hpp"

namespace hrm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class FitMethod { kPls, kBridgePls };

/// A fitted model: Y~ = X~ B + R on mean-centred data.
///
/// `ridge == 0` marks an iterative PLS fit; Bridge PLS fits record their alpha.
struct RegressionModel {
  Matrix weights;       // W, cols_x x c
  Matrix scores;        // T, n x c
  Matrix coefficients;  // B, cols_x x cols_y
  Matrix residual;      // R, n x cols_y
  Vector mean_x;
  Vector mean_y;
  Index components = 0;
  double ridge = 0.0;

  Index input_dim() const { return coefficients.rows(); }
  Index output_dim() const { return coefficients.cols(); }

  friend bool operator==(const RegressionModel&, const RegressionModel&) = default;
};

struct LatentConfig {
  Index components = 100;
  double ridge = 1e-10;
  FitMethod method = FitMethod::kBridgePls;
  int cv_folds = 5;
  std::vector<Index> cv_candidates;
  std::uint64_t cv_seed = 0;
};

struct Centered {
  Matrix centered;
  Vector mean;
};

struct EigenPairs {
  Vector values;   // descending
  Matrix vectors;  // unit-norm columns, matching `values`
};

namespace detail {

inline thread_local std::size_t eigensolver_calls = 0;

// Singular systems are reported once the condition estimate passes this.
inline constexpr double kMaxCondition = 1e12;

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) fail(ErrorCode::kInvalidInput, std::string(what) + " has non-finite entries");
}

inline void require_nonempty(const Matrix& m, const char* what) {
  if (m.rows() < 1 || m.cols() < 1) fail(ErrorCode::kInvalidInput, std::string(what) + " is empty");
}

// Flip each column so that its largest-magnitude entry is positive.
inline void fix_signs(Matrix& vectors) {
  for (Index k = 0; k < vectors.cols(); ++k) {
    Index arg = 0;
    vectors.col(k).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, k) < 0.0) vectors.col(k) *= -1.0;
  }
}

// Solves A X = rhs, rejecting A whose 2-norm condition exceeds kMaxCondition.
inline Matrix solve_conditioned(const Matrix& a, const Matrix& rhs, const char* what) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) <= 0.0 || s(0) / s(s.size() - 1) > kMaxCondition) {
    fail(ErrorCode::kDegenerateFit, std::string(what) + " is singular or ill-conditioned");
  }
  return a.colPivHouseholderQr().solve(rhs);
}

inline void check_fit_shapes(const Matrix& x, const Matrix& y) {
  require_nonempty(x, "X");
  require_nonempty(y, "Y");
  require_finite(x, "X");
  require_finite(y, "Y");
  if (x.rows() != y.rows()) fail(ErrorCode::kInvalidInput, "X and Y row counts differ");
}

}  // namespace detail

/// Number of `dominant_eigenvectors` calls made on this thread.
inline std::size_t eigensolver_call_count() { return detail::eigensolver_calls; }
inline void reset_eigensolver_call_count() { detail::eigensolver_calls = 0; }

inline Centered mean_center(const Matrix& x) {
  detail::require_nonempty(x, "matrix");
  Centered out;
  out.mean = x.colwise().mean().transpose();
  out.centered = x.rowwise() - out.mean.transpose();
  return out;
}

/// The first `count` eigenpairs of a symmetric matrix, by descending eigenvalue.
/// Each eigenvector is signed so its largest-magnitude entry is positive.
inline EigenPairs dominant_eigenvectors(const Matrix& m, Index count) {
  if (m.rows() != m.cols() || m.rows() == 0) fail(ErrorCode::kInvalidInput, "matrix must be square and nonempty");
  if (count < 1 || count > m.rows()) fail(ErrorCode::kInvalidComponents, "eigenvector count out of range");
  detail::require_finite(m, "matrix");
  const double scale = m.cwiseAbs().maxCoeff();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    fail(ErrorCode::kInvalidInput, "matrix is not symmetric");
  }
  ++detail::eigensolver_calls;

  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) fail(ErrorCode::kDegenerateFit, "eigensolver did not converge");
  EigenPairs out;
  out.values = solver.eigenvalues().tail(count).reverse();
  out.vectors = solver.eigenvectors().rightCols(count).rowwise().reverse();
  detail::fix_signs(out.vectors);
  return out;
}

/// Iterative PLS: one dominant eigenvector of E'F F'E per component, then
/// projection deflation of E and F by the new score vector.
inline RegressionModel pls_fit(const Matrix& x, const Matrix& y, Index components) {
  detail::check_fit_shapes(x, y);
  if (components < 1 || components > std::min(x.rows() - 1, x.cols())) {
    fail(ErrorCode::kInvalidComponents,
         "c=" + std::to_string(components) + " exceeds min(n-1, cols_x)=" +
             std::to_string(std::min(x.rows() - 1, x.cols())));
  }
  auto [xc, mean_x] = mean_center(x);
  auto [yc, mean_y] = mean_center(y);

  Matrix e = xc;
  Matrix f = yc;
  Matrix w(x.cols(), components);
  Matrix t(x.rows(), components);
  double first_value = 0.0;
  for (Index k = 0; k < components; ++k) {
    const Matrix cross = e.transpose() * f;  // cols_x x cols_y
    const Matrix s = cross * cross.transpose();
    const EigenPairs top = dominant_eigenvectors(s, 1);
    const double value = top.values(0);
    if (k == 0) first_value = value;
    if (!(value > 1e-14 * first_value) || !(value > 0.0)) {
      fail(ErrorCode::kDegenerateFit, "cross-covariance vanished at component " + std::to_string(k + 1));
    }
    w.col(k) = top.vectors.col(0);
    const Vector score = e * w.col(k);
    const double norm2 = score.squaredNorm();
    if (!(norm2 > 0.0)) fail(ErrorCode::kDegenerateFit, "zero score vector at component " + std::to_string(k + 1));
    t.col(k) = score;
    const Eigen::RowVectorXd e_load = score.transpose() * e / norm2;
    const Eigen::RowVectorXd f_load = score.transpose() * f / norm2;
    e.noalias() -= score * e_load;
    f.noalias() -= score * f_load;
  }

  RegressionModel model;
  const Matrix inner = t.transpose() * (xc * w);
  model.coefficients = w * detail::solve_conditioned(inner, t.transpose() * yc, "T'X~W");
  model.residual = yc - xc * model.coefficients;
  model.weights = std::move(w);
  model.scores = std::move(t);
  model.mean_x = std::move(mean_x);
  model.mean_y = std::move(mean_y);
  model.components = components;
  model.ridge = 0.0;
  return model;
}

/// The ridge-bridged matrix X~'(alpha I + (1 - alpha) Y~Y~')X~ for centred inputs.
inline Matrix bridge_matrix(const Matrix& xc, const Matrix& yc, double alpha) {
  const Index d = xc.cols();
  Matrix m = Matrix::Zero(d, d);
  if (alpha > 0.0) m.selfadjointView<Eigen::Lower>().rankUpdate(xc.transpose(), alpha);
  const Matrix cross = xc.transpose() * yc;
  if (alpha < 1.0) m.selfadjointView<Eigen::Lower>().rankUpdate(cross, 1.0 - alpha);
  m.triangularView<Eigen::StrictlyUpper>() = m.transpose().eval();
  return m;
}

/// Bridge PLS: all c weight vectors from one eigendecomposition of the
/// bridge matrix, then B = W (T'T)^-1 T'Y~ with T = X~W.
inline RegressionModel bpls_fit(const Matrix& x, const Matrix& y, Index components, double alpha) {
  detail::check_fit_shapes(x, y);
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::kInvalidInput, "alpha must lie in [0, 1]");
  if (components < 1 || components > std::min(x.rows(), x.cols())) {
    fail(ErrorCode::kInvalidComponents,
         "c=" + std::to_string(components) + " exceeds min(n, cols_x)=" + std::to_string(std::min(x.rows(), x.cols())));
  }
  auto [xc, mean_x] = mean_center(x);
  auto [yc, mean_y] = mean_center(y);

  EigenPairs pairs = dominant_eigenvectors(bridge_matrix(xc, yc, alpha), components);
  RegressionModel model;
  model.scores = xc * pairs.vectors;
  const Matrix gram = model.scores.transpose() * model.scores;
  model.coefficients = pairs.vectors * detail::solve_conditioned(gram, model.scores.transpose() * yc, "T'T");
  model.residual = yc - xc * model.coefficients;
  model.weights = std::move(pairs.vectors);
  model.mean_x = std::move(mean_x);
  model.mean_y = std::move(mean_y);
  model.components = components;
  model.ridge = alpha;
  return model;
}

inline RegressionModel fit(const Matrix& x, const Matrix& y, Index components, FitMethod method, double alpha) {
  return method == FitMethod::kPls ? pls_fit(x, y, components) : bpls_fit(x, y, components, alpha);
}

inline Vector predict(const RegressionModel& model, const Eigen::Ref<const Vector>& x) {
  if (x.size() != model.input_dim()) {
    fail(ErrorCode::kInvalidInput, "input has " + std::to_string(x.size()) + " entries, model expects " +
                                       std::to_string(model.input_dim()));
  }
  return model.mean_y + model.coefficients.transpose() * (x - model.mean_x);
}

/// Row-wise prediction for a batch of samples.
inline Matrix predict_rows(const RegressionModel& model, const Matrix& x) {
  if (x.cols() != model.input_dim()) fail(ErrorCode::kInvalidInput, "input width does not match model");
  Matrix out = (x.rowwise() - model.mean_x.transpose()) * model.coefficients;
  out.rowwise() += model.mean_y.transpose();
  return out;
}

/// Mean held-out squared error of each candidate, in candidate order.
inline std::vector<double> cross_validation_errors(const Matrix& x, const Matrix& y, const LatentConfig& cfg) {
  detail::check_fit_shapes(x, y);
  if (cfg.cv_folds < 2) fail(ErrorCode::kInvalidInput, "cv_folds must be at least 2");
  if (cfg.cv_candidates.empty()) fail(ErrorCode::kInvalidInput, "no candidate component counts");
  const Index n = x.rows();
  const Index folds = cfg.cv_folds;
  if (n < folds) fail(ErrorCode::kInvalidInput, "fewer samples than folds");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(cfg.cv_seed);
  shuffle(std::span<Index>(order), rng);

  std::vector<double> errors(cfg.cv_candidates.size(), 0.0);
  Index begin = 0;
  for (Index f = 0; f < folds; ++f) {
    const Index size = n / folds + (f < n % folds ? 1 : 0);
    const Index end = begin + size;
    Matrix x_train(n - size, x.cols()), y_train(n - size, y.cols());
    Matrix x_test(size, x.cols()), y_test(size, y.cols());
    Index tr = 0, te = 0;
    for (Index i = 0; i < n; ++i) {
      const Index row = order[static_cast<std::size_t>(i)];
      if (i >= begin && i < end) {
        x_test.row(te) = x.row(row);
        y_test.row(te++) = y.row(row);
      } else {
        x_train.row(tr) = x.row(row);
        y_train.row(tr++) = y.row(row);
      }
    }
    for (std::size_t k = 0; k < cfg.cv_candidates.size(); ++k) {
      const RegressionModel model = fit(x_train, y_train, cfg.cv_candidates[k], cfg.method, cfg.ridge);
      errors[k] += (predict_rows(model, x_test) - y_test).squaredNorm() / static_cast<double>(y_test.size());
    }
    begin = end;
  }
  for (double& e : errors) e /= static_cast<double>(folds);
  return errors;
}

/// k-fold selection of the latent component count; ties go to the smallest c.
inline Index cross_validate_components(const Matrix& x, const Matrix& y, const LatentConfig& cfg) {
  const std::vector<double> errors = cross_validation_errors(x, y, cfg);
  std::size_t best = 0;
  for (std::size_t k = 1; k < errors.size(); ++k) {
    const double tol = 1e-12 * std::max(errors[best], errors[k]);
    if (errors[k] < errors[best] - tol ||
        (std::abs(errors[k] - errors[best]) <= tol && cfg.cv_candidates[k] < cfg.cv_candidates[best])) {
      best = k;
    }
  }
  return cfg.cv_candidates[best];
}

}  // namespace hrm
