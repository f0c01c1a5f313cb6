#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mp/common.hpp"

namespace mp {

/// Dense 2-D tensor, row-major. The scalar type selects the precision mode:
/// double for test/oracle work, float for training.
template <class S>
class Tensor {
 public:
  using Scalar = S;
  using EigenMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<EigenMat>;
  using ConstMap = Eigen::Map<const EigenMat>;

  Tensor() = default;
  Tensor(std::int64_t rows, std::int64_t cols)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), S(0)) {
    if (rows < 0 || cols < 0) throw ConfigError("tensor dimensions must be non-negative");
  }

  static Tensor full(std::int64_t rows, std::int64_t cols, S value) {
    Tensor t(rows, cols);
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<S>> rows) {
    const std::int64_t r = static_cast<std::int64_t>(rows.size());
    const std::int64_t c = r == 0 ? 0 : static_cast<std::int64_t>(rows.begin()->size());
    Tensor t(r, c);
    std::int64_t i = 0;
    for (const auto& row : rows) {
      if (static_cast<std::int64_t>(row.size()) != c) throw ConfigError("ragged row list");
      std::int64_t j = 0;
      for (S v : row) t(i, j++) = v;
      ++i;
    }
    return t;
  }

  static Tensor row_vector(std::span<const S> values) {
    Tensor t(1, static_cast<std::int64_t>(values.size()));
    std::copy(values.begin(), values.end(), t.data_.begin());
    return t;
  }

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  S& operator()(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  const S& operator()(std::int64_t r, std::int64_t c) const {
    return data_[static_cast<std::size_t>(r * cols_ + c)];
  }

  std::vector<S>& raw() { return data_; }
  const std::vector<S>& raw() const { return data_; }

  Map map() { return Map(data_.data(), rows_, cols_); }
  ConstMap map() const { return ConstMap(data_.data(), rows_, cols_); }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool all_finite() const {
    for (S v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  bool operator==(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.raw()[i] = static_cast<T>(data_[i]);
    return out;
  }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

 private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::vector<S> data_;
};

namespace detail {
template <class S>
void require_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ConfigError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}
}  // namespace detail

/// C = A * B.
template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.cols() != b.rows()) {
    throw ConfigError("matmul: inner dimensions differ, " + a.shape_str() + " * " + b.shape_str());
  }
  Tensor<S> c(a.rows(), b.cols());
  c.map().noalias() = a.map() * b.map();
  return c;
}

/// C = A * B^T.
template <class S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.cols() != b.cols()) {
    throw ConfigError("matmul_nt: inner dimensions differ, " + a.shape_str() + " * " + b.shape_str() + "^T");
  }
  Tensor<S> c(a.rows(), b.rows());
  c.map().noalias() = a.map() * b.map().transpose();
  return c;
}

/// C = A^T * B.
template <class S>
Tensor<S> matmul_tn(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rows() != b.rows()) {
    throw ConfigError("matmul_tn: inner dimensions differ");
  }
  Tensor<S> c(a.cols(), b.cols());
  c.map().noalias() = a.map().transpose() * b.map();
  return c;
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_shape(a, b, "add");
  Tensor<S> c(a.rows(), a.cols());
  c.map() = a.map() + b.map();
  return c;
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_shape(a, b, "sub");
  Tensor<S> c(a.rows(), a.cols());
  c.map() = a.map() - b.map();
  return c;
}

template <class S>
Tensor<S> hadamard(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_shape(a, b, "hadamard");
  Tensor<S> c(a.rows(), a.cols());
  c.map() = a.map().cwiseProduct(b.map());
  return c;
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S s) {
  Tensor<S> c(a.rows(), a.cols());
  c.map() = a.map() * s;
  return c;
}

/// Adds a 1xD row vector to every row of a NxD tensor.
template <class S>
Tensor<S> add_rowvec(const Tensor<S>& a, const Tensor<S>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ConfigError("add_rowvec: expected 1x" + std::to_string(a.cols()) + ", got " + row.shape_str());
  }
  Tensor<S> c(a.rows(), a.cols());
  c.map() = a.map().rowwise() + row.map().row(0);
  return c;
}

/// Sums all rows into a 1xD row vector.
template <class S>
Tensor<S> colsum(const Tensor<S>& a) {
  Tensor<S> c(1, a.cols());
  c.map().row(0) = a.map().colwise().sum();
  return c;
}

/// Row-wise softmax with row-max subtraction for stability. Each output row
/// is non-negative and sums to 1.
template <class S>
Tensor<S> softmax_rows(const Tensor<S>& a) {
  Tensor<S> out(a.rows(), a.cols());
  for (std::int64_t r = 0; r < a.rows(); ++r) {
    S mx = a(r, 0);
    for (std::int64_t c = 1; c < a.cols(); ++c) mx = std::max(mx, a(r, c));
    S sum = 0;
    for (std::int64_t c = 0; c < a.cols(); ++c) {
      const S e = std::exp(a(r, c) - mx);
      out(r, c) = e;
      sum += e;
    }
    for (std::int64_t c = 0; c < a.cols(); ++c) out(r, c) /= sum;
  }
  return out;
}

template <class S>
Tensor<S> concat_rows(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.cols() != b.cols()) {
    throw ConfigError("concat_rows: column mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor<S> c(a.rows() + b.rows(), a.cols());
  std::copy(a.raw().begin(), a.raw().end(), c.raw().begin());
  std::copy(b.raw().begin(), b.raw().end(), c.raw().begin() + a.raw().size());
  return c;
}

template <class S>
Tensor<S> slice_rows(const Tensor<S>& a, std::int64_t start, std::int64_t count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ConfigError("slice_rows: range out of bounds");
  }
  Tensor<S> c(count, a.cols());
  std::copy(a.raw().begin() + start * a.cols(), a.raw().begin() + (start + count) * a.cols(),
            c.raw().begin());
  return c;
}

template <class S>
Tensor<S> slice_cols(const Tensor<S>& a, std::int64_t start, std::int64_t count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ConfigError("slice_cols: range out of bounds");
  }
  Tensor<S> c(a.rows(), count);
  c.map() = a.map().middleCols(start, count);
  return c;
}

template <class S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rows() != b.rows()) throw ConfigError("concat_cols: row mismatch");
  Tensor<S> c(a.rows(), a.cols() + b.cols());
  c.map().leftCols(a.cols()) = a.map();
  c.map().rightCols(b.cols()) = b.map();
  return c;
}

/// Exact GELU, x * Phi(x) with the Gaussian CDF.
template <class S>
S gelu_scalar(S x) {
  return static_cast<S>(0.5) * x * (static_cast<S>(1) + std::erf(x * static_cast<S>(0.70710678118654752440)));
}

/// d/dx of exact GELU: Phi(x) + x * phi(x).
template <class S>
S gelu_grad_scalar(S x) {
  const S phi = std::exp(static_cast<S>(-0.5) * x * x) * static_cast<S>(0.39894228040143267794);
  const S cdf = static_cast<S>(0.5) * (static_cast<S>(1) + std::erf(x * static_cast<S>(0.70710678118654752440)));
  return cdf + x * phi;
}

template <class S>
Tensor<S> gelu(const Tensor<S>& a) {
  Tensor<S> c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.raw()[i] = gelu_scalar(a.raw()[i]);
  return c;
}

/// Z-score normalization of one vector: mean 0, population std 1. Inputs
/// whose population variance is below 1e-8 normalize to the zero vector
/// (constant embedding slices occur in real transcripts).
template <class S>
std::vector<S> zscore_normalize(std::span<const S> v) {
  if (v.empty()) throw DataError("zscore_normalize: empty vector");
  const double n = static_cast<double>(v.size());
  double mean = 0;
  for (S x : v) mean += static_cast<double>(x);
  mean /= n;
  double var = 0;
  for (S x : v) {
    const double d = static_cast<double>(x) - mean;
    var += d * d;
  }
  var /= n;
  std::vector<S> out(v.size());
  if (var < 1e-8) {
    return out;
  }
  const double inv = 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<S>((static_cast<double>(v[i]) - mean) * inv);
  }
  return out;
}

template <class S>
std::vector<S> zscore_normalize(const std::vector<S>& v) {
  return zscore_normalize(std::span<const S>(v.data(), v.size()));
}

}  // namespace mp
