#include "kehrl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kehrl::kernels {

namespace {

void check_mm(const Tensor& a, const Tensor& b, const Tensor& c, int m, int k, int n) {
  if (a.rows * a.cols == 0 || b.rows * b.cols == 0)
    throw std::invalid_argument("matmul: empty operand");
  if (c.rows != m || c.cols != n)
    throw std::invalid_argument("matmul: bad output shape " + c.shape_str());
  (void)k;
}

inline void mm_row(const Tensor& a, const Tensor& b, Tensor& c, int i, bool accumulate) {
  // One row of C = A*B; serial over k then j, identical in both variants.
  double* crow = c.row_ptr(i);
  if (!accumulate) std::fill(crow, crow + c.cols, 0.0);
  const double* arow = a.row_ptr(i);
  for (int k = 0; k < a.cols; ++k) {
    const double aik = arow[k];
    if (aik == 0.0) continue;
    const double* brow = b.row_ptr(k);
    for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
  }
}

inline void mm_tn_row(const Tensor& a, const Tensor& b, Tensor& c, int i, bool accumulate) {
  // Row i of C = A^T*B, i indexes columns of A.
  double* crow = c.row_ptr(i);
  if (!accumulate) std::fill(crow, crow + c.cols, 0.0);
  for (int k = 0; k < a.rows; ++k) {
    const double aki = a.at(k, i);
    if (aki == 0.0) continue;
    const double* brow = b.row_ptr(k);
    for (int j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
  }
}

inline void mm_nt_row(const Tensor& a, const Tensor& b, Tensor& c, int i, bool accumulate) {
  double* crow = c.row_ptr(i);
  const double* arow = a.row_ptr(i);
  for (int j = 0; j < b.rows; ++j) {
    const double* brow = b.row_ptr(j);
    double acc = 0.0;
    for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
    if (accumulate)
      crow[j] += acc;
    else
      crow[j] = acc;
  }
}

inline void softmax_row(const Tensor& x, Tensor& out, int i) {
  const double* xr = x.row_ptr(i);
  double* orow = out.row_ptr(i);
  double mx = xr[0];
  for (int j = 1; j < x.cols; ++j) mx = std::max(mx, xr[j]);
  double sum = 0.0;
  for (int j = 0; j < x.cols; ++j) {
    orow[j] = std::exp(xr[j] - mx);
    sum += orow[j];
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < x.cols; ++j) orow[j] *= inv;
}

bool use_parallel(std::size_t work) {
#ifdef _OPENMP
  if (omp_in_parallel()) return false;
  return work >= 64 * 64 * 64 && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}

}  // namespace

namespace serial {

void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dims " + a.shape_str() + " " + b.shape_str());
  check_mm(a, b, c, a.rows, a.cols, b.cols);
  for (int i = 0; i < a.rows; ++i) mm_row(a, b, c, i, accumulate);
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: inner dims " + a.shape_str() + " " + b.shape_str());
  check_mm(a, b, c, a.cols, a.rows, b.cols);
  for (int i = 0; i < a.cols; ++i) mm_tn_row(a, b, c, i, accumulate);
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: inner dims " + a.shape_str() + " " + b.shape_str());
  check_mm(a, b, c, a.rows, a.cols, b.rows);
  for (int i = 0; i < a.rows; ++i) mm_nt_row(a, b, c, i, accumulate);
}

void softmax_rows(const Tensor& x, Tensor& out) {
  if (!out.same_shape(x)) throw std::invalid_argument("softmax_rows: shape mismatch");
  for (int i = 0; i < x.rows; ++i) softmax_row(x, out, i);
}

}  // namespace serial

namespace omp {

void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dims " + a.shape_str() + " " + b.shape_str());
  check_mm(a, b, c, a.rows, a.cols, b.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) mm_row(a, b, c, i, accumulate);
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: inner dims " + a.shape_str() + " " + b.shape_str());
  check_mm(a, b, c, a.cols, a.rows, b.cols);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.cols; ++i) mm_tn_row(a, b, c, i, accumulate);
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: inner dims " + a.shape_str() + " " + b.shape_str());
  check_mm(a, b, c, a.rows, a.cols, b.rows);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < a.rows; ++i) mm_nt_row(a, b, c, i, accumulate);
}

void softmax_rows(const Tensor& x, Tensor& out) {
  if (!out.same_shape(x)) throw std::invalid_argument("softmax_rows: shape mismatch");
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.rows; ++i) softmax_row(x, out, i);
}

}  // namespace omp

void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  std::size_t work = std::size_t(a.rows) * a.cols * b.cols;
  if (use_parallel(work))
    omp::matmul(a, b, c, accumulate);
  else
    serial::matmul(a, b, c, accumulate);
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  std::size_t work = std::size_t(a.rows) * a.cols * b.cols;
  if (use_parallel(work))
    omp::matmul_tn(a, b, c, accumulate);
  else
    serial::matmul_tn(a, b, c, accumulate);
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  std::size_t work = std::size_t(a.rows) * a.cols * b.rows;
  if (use_parallel(work))
    omp::matmul_nt(a, b, c, accumulate);
  else
    serial::matmul_nt(a, b, c, accumulate);
}

void softmax_rows(const Tensor& x, Tensor& out) {
  if (use_parallel(std::size_t(x.rows) * x.cols * 64))
    omp::softmax_rows(x, out);
  else
    serial::softmax_rows(x, out);
}

int worker_count() {
#ifdef _OPENMP
  if (omp_in_parallel()) return 1;
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace kehrl::kernels
