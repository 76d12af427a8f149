#pragma once
// Dense row-major 2-D tensor of doubles. Vectors are 1 x n. All model state
// (parameters, activations, gradients) uses this one type.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace kehrl {

struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {
    if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative shape");
  }

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, double x) {
    Tensor t(r, c);
    for (double& e : t.v) e = x;
    return t;
  }
  static Tensor row(const std::vector<double>& d) {
    Tensor t(1, static_cast<int>(d.size()));
    t.v = d;
    return t;
  }

  std::size_t size() const { return v.size(); }
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  double* row_ptr(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const double* row_ptr(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
  }

  bool finite() const {
    for (double e : v)
      if (!std::isfinite(e)) return false;
    return true;
  }
};

}  // namespace kehrl
