#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace mme {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const {
    return data.data() + static_cast<size_t>(i) * cols;
  }
  double& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const {
    return data[static_cast<size_t>(i) * cols + j];
  }
  bool empty() const { return rows == 0 || cols == 0; }
  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

// Builds a matrix from rows; throws on mixed dimensions.
Mat mat_from_rows(const std::vector<Vec>& rows);

inline double dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const double* a, int n) { return std::sqrt(dot(a, a, n)); }

inline void axpy(double alpha, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Reference kernels, single threaded. The parallel kernels in kernels.hpp
// must produce bit-identical results (each output slot is computed by the
// same serial summation order).
namespace reference {

// out = W x
inline void matvec(const Mat& w, const double* x, double* out) {
  for (int i = 0; i < w.rows; ++i) out[i] = dot(w.row(i), x, w.cols);
}

// out = W^T g  (column-wise accumulation so the parallel version matches)
inline void matvec_t(const Mat& w, const double* g, double* out) {
  for (int j = 0; j < w.cols; ++j) {
    double s = 0.0;
    for (int i = 0; i < w.rows; ++i) s += w.at(i, j) * g[i];
    out[j] = s;
  }
}

// W += g x^T
inline void add_outer(Mat& w, const double* g, const double* x) {
  for (int i = 0; i < w.rows; ++i) axpy(g[i], x, w.row(i), w.cols);
}

}  // namespace reference

}  // namespace mme
