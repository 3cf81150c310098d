#pragma once

#include "mme/mat.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mme {

// OpenMP kernels. Every parallel loop writes disjoint output slots and each
// slot is reduced serially in a fixed order, so results are bit-identical to
// the reference:: versions regardless of thread count.
namespace kernels {

inline void matvec(const Mat& w, const double* x, double* out) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < w.rows; ++i) out[i] = dot(w.row(i), x, w.cols);
}

inline void matvec_t(const Mat& w, const double* g, double* out) {
#pragma omp parallel for schedule(static)
  for (int j = 0; j < w.cols; ++j) {
    double s = 0.0;
    for (int i = 0; i < w.rows; ++i) s += w.at(i, j) * g[i];
    out[j] = s;
  }
}

inline void add_outer(Mat& w, const double* g, const double* x) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < w.rows; ++i) axpy(g[i], x, w.row(i), w.cols);
}

}  // namespace kernels

}  // namespace mme
