#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>

#include "hrm/random.hpp"

namespace hrm::test {

inline Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = standard_normal(rng);
  return m;
}

/// A regression problem whose predictors have exact latent rank `rank`.
struct LatentProblem {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  Eigen::MatrixXd x_test;
};

inline LatentProblem latent_problem(Rng& rng, Eigen::Index n, Eigen::Index dims, Eigen::Index rank, Eigen::Index outputs,
                                    double noise) {
  const Eigen::MatrixXd loadings = gaussian(rng, rank, dims);
  const Eigen::MatrixXd coef = gaussian(rng, rank, outputs);
  const Eigen::RowVectorXd offset = gaussian(rng, 1, dims);
  LatentProblem p;
  const Eigen::MatrixXd factors = gaussian(rng, n, rank);
  p.x = (factors * loadings).rowwise() + offset;
  p.y = factors * coef + noise * gaussian(rng, n, outputs);
  p.x_test = (gaussian(rng, 10, rank) * loadings).rowwise() + offset;
  return p;
}

inline double max_relative_difference(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / (scale > 0.0 ? scale : 1.0);
}

template <typename F>
double seconds(F&& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace hrm::test
