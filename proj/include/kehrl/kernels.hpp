#pragma once
// Dense compute kernels. Every kernel has a serial reference implementation
// (kernels::serial) and an OpenMP variant (kernels::omp). The parallel
// variants split work so that each output element is written by exactly one
// thread with the same serial inner-loop order as the reference, so results
// are bitwise identical for any thread count. kernels::matmul etc. dispatch
// between the two based on problem size and nesting.

#include "kehrl/tensor.hpp"

namespace kehrl::kernels {

namespace serial {
// C = A * B (+ C if accumulate)
void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
// C = A^T * B
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
// C = A * B^T
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
// Row-wise softmax with max subtraction.
void softmax_rows(const Tensor& x, Tensor& out);
}  // namespace serial

namespace omp {
void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void softmax_rows(const Tensor& x, Tensor& out);
}  // namespace omp

// Dispatching entry points used by the autodiff graph.
void matmul(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void softmax_rows(const Tensor& x, Tensor& out);

// Number of threads the omp variants would use right now (1 when nested or
// OpenMP is unavailable).
int worker_count();

}  // namespace kehrl::kernels
