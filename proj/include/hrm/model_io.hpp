#pragma once

// Binary model file. All integers and floats are little-endian; matrices are
// stored as (u64 rows, u64 cols, rows*cols f64 row-major).
//
//   "HRMB" u32 format_version u32 extractor_version u32 derivative_kernel
//   u32 patch_size u32 m (i32 dx, i32 dy) * m
//   f64 train_scale f64 reference_width f64 reference_height
//   u32 method u64 components f64 alpha
//   (model hrm_j, model lrm_j) * (m+1)
//   model = u64 components f64 ridge, matrices W T B R mean_x mean_y

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "hrm/atomic_file.hpp"
#include "hrm/error.hpp"
#include "hrm/training.hpp"

namespace hrm {

inline constexpr char kModelMagic[4] = {'H', 'R', 'M', 'B'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v), 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  void matrix(const Matrix& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
  const std::string& bytes() const { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : in_(std::move(bytes)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  void raw(char* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  Matrix matrix() {
    const std::uint64_t rows = u64(), cols = u64();
    if (cols != 0 && rows > (remaining() / 8) / cols) fail(ErrorCode::kCorruptModel, "model file truncated");
    need(rows * cols * 8);
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
    return m;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > remaining()) fail(ErrorCode::kCorruptModel, "model file truncated");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string in_;
  std::size_t pos_ = 0;
};

inline void write_model(Writer& w, const RegressionModel& m) {
  w.u64(static_cast<std::uint64_t>(m.components));
  w.f64(m.ridge);
  w.matrix(m.weights);
  w.matrix(m.scores);
  w.matrix(m.coefficients);
  w.matrix(m.residual);
  w.matrix(m.mean_x);
  w.matrix(m.mean_y);
}

inline RegressionModel read_model(Reader& r) {
  RegressionModel m;
  m.components = static_cast<Index>(r.u64());
  m.ridge = r.f64();
  m.weights = r.matrix();
  m.scores = r.matrix();
  m.coefficients = r.matrix();
  m.residual = r.matrix();
  const Matrix mx = r.matrix(), my = r.matrix();
  if (mx.cols() != 1 || my.cols() != 1 || mx.rows() != m.coefficients.rows() || my.rows() != m.coefficients.cols()) {
    fail(ErrorCode::kCorruptModel, "inconsistent regression model shapes");
  }
  m.mean_x = mx.col(0);
  m.mean_y = my.col(0);
  return m;
}

}  // namespace detail

inline std::string serialize(const ModelBank& bank) {
  if (bank.hrms.size() != bank.lrms.size() || bank.size() != bank.geometry.neighbors() + 1) {
    fail(ErrorCode::kInvalidInput, "bank does not hold m+1 HRMs and LRMs");
  }
  detail::Writer w;
  w.raw(kModelMagic, 4);
  w.u32(kModelFormatVersion);
  w.u32(bank.extractor_version);
  w.u32(static_cast<std::uint32_t>(bank.kernel));
  w.u32(static_cast<std::uint32_t>(bank.geometry.patch_size));
  w.u32(static_cast<std::uint32_t>(bank.geometry.neighbors()));
  for (const Offset& o : bank.geometry.neighbor_offsets) {
    w.i32(o.dx);
    w.i32(o.dy);
  }
  w.f64(bank.train_scale);
  w.f64(bank.reference_width);
  w.f64(bank.reference_height);
  w.u32(bank.method == FitMethod::kPls ? 0u : 1u);
  w.u64(static_cast<std::uint64_t>(bank.components));
  w.f64(bank.alpha);
  for (int j = 0; j < bank.size(); ++j) {
    detail::write_model(w, bank.hrms[static_cast<std::size_t>(j)]);
    detail::write_model(w, bank.lrms[static_cast<std::size_t>(j)]);
  }
  return w.bytes();
}

inline ModelBank deserialize(std::string bytes) {
  detail::Reader r(std::move(bytes));
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kModelMagic, 4) != 0) fail(ErrorCode::kCorruptModel, "not a model file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion) {
    fail(ErrorCode::kIncompatibleModel, "model format version " + std::to_string(version) + ", expected " +
                                            std::to_string(kModelFormatVersion));
  }
  ModelBank bank;
  bank.extractor_version = r.u32();
  if (bank.extractor_version != kExtractorVersion) {
    fail(ErrorCode::kIncompatibleModel, "model built for feature extractor version " +
                                            std::to_string(bank.extractor_version) + ", this build has " +
                                            std::to_string(kExtractorVersion));
  }
  const std::uint32_t kernel = r.u32();
  if (kernel > 1) fail(ErrorCode::kCorruptModel, "unknown derivative kernel");
  bank.kernel = static_cast<DerivativeKernel>(kernel);
  bank.geometry.patch_size = static_cast<int>(r.u32());
  const std::uint32_t m = r.u32();
  if (m > r.remaining() / 8) fail(ErrorCode::kCorruptModel, "model file truncated");
  for (std::uint32_t k = 0; k < m; ++k) {
    const int dx = r.i32(), dy = r.i32();
    bank.geometry.neighbor_offsets.push_back({dx, dy});
  }
  bank.train_scale = r.f64();
  bank.reference_width = r.f64();
  bank.reference_height = r.f64();
  const std::uint32_t method = r.u32();
  if (method > 1) fail(ErrorCode::kCorruptModel, "unknown fit method");
  bank.method = method == 0 ? FitMethod::kPls : FitMethod::kBridgePls;
  bank.components = static_cast<Index>(r.u64());
  bank.alpha = r.f64();
  for (std::uint32_t j = 0; j <= m; ++j) {
    bank.hrms.push_back(detail::read_model(r));
    bank.lrms.push_back(detail::read_model(r));
  }
  if (r.remaining() != 0) fail(ErrorCode::kCorruptModel, "trailing bytes after model data");
  const Index d = bank.geometry.vector_length();
  for (int j = 0; j < bank.size(); ++j) {
    const auto& h = bank.hrms[static_cast<std::size_t>(j)];
    const auto& l = bank.lrms[static_cast<std::size_t>(j)];
    if (h.input_dim() != d || l.input_dim() != d || h.output_dim() != 2 || l.output_dim() != 1) {
      fail(ErrorCode::kCorruptModel, "regression model " + std::to_string(j) + " does not match the patch geometry");
    }
  }
  return bank;
}

inline void save_model(const std::filesystem::path& path, const ModelBank& bank) { atomic_write(path, serialize(bank)); }

inline ModelBank load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kMissingAsset, "cannot open model " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(std::move(bytes));
}

}  // namespace hrm
