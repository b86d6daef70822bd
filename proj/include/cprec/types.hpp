#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cprec {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

/// Dense row-major matrix of doubles. Bias vectors are stored as n x 1.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// out = m * x
inline void matvec(const Matrix& m, std::span<const double> x, std::span<double> out) {
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), x);
}

// out += m^T * x
inline void add_matvec_transposed(const Matrix& m, std::span<const double> x, double scale,
                                  std::span<double> out) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double xr = scale * x[r];
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += xr * row[c];
  }
}

// m += scale * a b^T
inline void add_outer(Matrix& m, std::span<const double> a, std::span<const double> b, double scale) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double ar = scale * a[r];
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += ar * b[c];
  }
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += alpha * x[k];
}

enum class ErrorCode {
  kMissingProducer,
  kMalformedRecord,
  kEmptyAfterFilter,
  kSamplerStarved,
  kNonFiniteLoss,
  kNoTestItem,
  kEmptyCandidateSet,
  kDimensionMismatch,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

class MissingProducer : public Error {
 public:
  explicit MissingProducer(std::string item_token)
      : Error(ErrorCode::kMissingProducer, "no producer recorded for item '" + item_token + "'"),
        item_token_(std::move(item_token)) {}
  const std::string& item_token() const { return item_token_; }

 private:
  std::string item_token_;
};

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::string line, const std::string& reason)
      : Error(ErrorCode::kMalformedRecord, "malformed record (" + reason + "): '" + line + "'"),
        line_(std::move(line)) {}
  const std::string& line() const { return line_; }

 private:
  std::string line_;
};

class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(std::size_t epoch)
      : Error(ErrorCode::kNonFiniteLoss, "non-finite training loss at epoch " + std::to_string(epoch)),
        epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace cprec
