#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

namespace tblab {

// Dense row-major tensor of doubles. Computation runs in double; files store f32.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::initializer_list<std::size_t> dims) {
    Tensor t;
    t.shape.assign(dims);
    t.data.assign(t.count(), 0.0);
    return t;
  }

  static Tensor zeros(const std::vector<std::size_t>& dims) {
    Tensor t;
    t.shape = dims;
    t.data.assign(t.count(), 0.0);
    return t;
  }

  std::size_t count() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  double* row(std::size_t r) { return data.data() + r * cols(); }
  const double* row(std::size_t r) const { return data.data() + r * cols(); }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double l2() const {
    double s = 0.0;
    for (double v : data) s += v * v;
    return std::sqrt(s);
  }
};

// y += a * x, over whole tensors
inline void axpy(double a, const Tensor& x, Tensor& y) {
  const double* __restrict xp = x.ptr();
  double* __restrict yp = y.ptr();
  std::size_t n = x.data.size();
  for (std::size_t i = 0; i < n; ++i) yp[i] += a * xp[i];
}

// Eight fixed accumulator lanes with a fixed combine order: fast (the lanes
// vectorize and break the serial add chain) yet bit-reproducible run to run.
inline double dot(const double* __restrict a, const double* __restrict b, std::size_t n) {
  double acc[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8)
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[k + j] * b[k + j];
  double s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; k < n; ++k) s += a[k] * b[k];
  return s;
}

// out[r] = W[r,:] . x  for W [rows x cols]
inline void matvec(const Tensor& w, const double* x, double* out) {
  std::size_t r = w.rows(), c = w.cols();
  const double* wp = w.ptr();
  for (std::size_t i = 0; i < r; ++i) out[i] = dot(wp + i * c, x, c);
}

// out += W^T . g  (accumulate input-gradient for matvec)
inline void matvec_t_acc(const Tensor& w, const double* __restrict g,
                         double* __restrict out) {
  std::size_t r = w.rows(), c = w.cols();
  const double* wp = w.ptr();
  for (std::size_t i = 0; i < r; ++i) {
    double gi = g[i];
    if (gi == 0.0) continue;
    const double* __restrict row = wp + i * c;
    for (std::size_t j = 0; j < c; ++j) out[j] += gi * row[j];
  }
}

// dW += g outer x  (weight-gradient for matvec)
inline void outer_acc(const double* __restrict g, const double* __restrict x, Tensor& dw) {
  std::size_t r = dw.rows(), c = dw.cols();
  double* dp = dw.ptr();
  for (std::size_t i = 0; i < r; ++i) {
    double gi = g[i];
    if (gi == 0.0) continue;
    double* __restrict row = dp + i * c;
    for (std::size_t j = 0; j < c; ++j) row[j] += gi * x[j];
  }
}

}  // namespace tblab
