#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pabee/errors.hpp"

namespace pabee {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto src = b.row(k);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

/// out = w * x + b, with w stored out_dim x in_dim.
inline void affine_apply(const Matrix& w, std::span<const double> b, std::span<const double> x,
                         std::span<double> out) {
  if (w.cols() != x.size() || w.rows() != out.size() || b.size() != out.size()) {
    throw ShapeError("affine: weight " + std::to_string(w.rows()) + "x" +
                     std::to_string(w.cols()) + " applied to input of length " +
                     std::to_string(x.size()));
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto wi = w.row(i);
    out[i] = b[i] + std::inner_product(wi.begin(), wi.end(), x.begin(), 0.0);
  }
}

/// Probability distribution over class labels.
class ProbVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  ProbVector() = default;

  /// Validates the simplex invariants; throws NumericError on violation.
  explicit ProbVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) throw NumericError("probability vector needs at least 2 classes");
    double sum = 0.0;
    for (double v : values_) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw NumericError("probability entry out of [0,1]: " + std::to_string(v));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      throw NumericError("probabilities sum to " + std::to_string(sum));
    }
  }
  ProbVector(std::initializer_list<double> values) : ProbVector(std::vector<double>(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  std::vector<double> values_;
};

inline void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite input");
  }
}

inline double log_sum_exp(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double l : logits) s += std::exp(l - mx);
  return mx + std::log(s);
}

inline ProbVector softmax(std::span<const double> logits) {
  if (logits.size() < 2) throw NumericError("softmax needs at least 2 logits");
  check_finite(logits, "softmax");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    s += p[i];
  }
  for (double& v : p) v /= s;
  return ProbVector(std::move(p));
}

inline ProbVector softmax(std::initializer_list<double> logits) {
  return softmax(std::span<const double>(logits.begin(), logits.size()));
}

/// Shannon entropy in nats, with 0 ln 0 taken as 0.
inline double entropy(const ProbVector& p) {
  double h = 0.0;
  for (double v : p.values()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::max(h, 0.0);
}

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::size_t argmax(const ProbVector& p) { return argmax(p.values()); }

/// Central-difference gradient of f at x. f takes std::span<const double>.
template <class F>
std::vector<double> finite_diff_grad(F&& f, std::vector<double> x, double eps) {
  if (!(eps > 0.0)) throw ArgumentError("finite_diff_grad: eps must be positive");
  std::vector<double> grad(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + eps;
    const double fp = f(std::span<const double>(x));
    x[k] = orig - eps;
    const double fm = f(std::span<const double>(x));
    x[k] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                         std::to_string(k));
    }
    grad[k] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

}  // namespace pabee
