#include "kehrl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kehrl/kernels.hpp"

namespace kehrl {

const Tensor Graph::kEmpty{};

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double norm_cdf(double x) { return 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }
double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

}  // namespace

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::check_id(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("graph: bad node id " + std::to_string(id));
}

int Graph::input(Tensor t) {
  Node n;
  n.op = Op::Input;
  n.val = std::move(t);
  return push(std::move(n));
}

int Graph::input(const std::vector<double>& row) { return input(Tensor::row(row)); }

int Graph::param(const Tensor& t, int param_id) {
  if (param_id < 0) throw std::invalid_argument("graph: param_id must be >= 0");
  Node n;
  n.op = Op::Param;
  n.vref = &t;
  n.param_id = param_id;
  return push(std::move(n));
}

int Graph::matmul(int a, int b) {
  check_id(a);
  check_id(b);
  Node n;
  n.op = Op::MatMul;
  n.a = a;
  n.b = b;
  n.val = Tensor(val(a).rows, val(b).cols);
  kernels::matmul(val(a), val(b), n.val);
  return push(std::move(n));
}

int Graph::matmul_nt(int a, int b) {
  check_id(a);
  check_id(b);
  Node n;
  n.op = Op::MatMulNT;
  n.a = a;
  n.b = b;
  n.val = Tensor(val(a).rows, val(b).rows);
  kernels::matmul_nt(val(a), val(b), n.val);
  return push(std::move(n));
}

int Graph::add(int a, int b) {
  check_id(a);
  check_id(b);
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    throw std::invalid_argument("graph add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  n.val = ta;
  for (std::size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] += tb.v[i];
  return push(std::move(n));
}

int Graph::sub(int a, int b) {
  check_id(a);
  check_id(b);
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    throw std::invalid_argument("graph sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Node n;
  n.op = Op::Sub;
  n.a = a;
  n.b = b;
  n.val = ta;
  for (std::size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] -= tb.v[i];
  return push(std::move(n));
}

int Graph::mul(int a, int b) {
  check_id(a);
  check_id(b);
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    throw std::invalid_argument("graph mul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Node n;
  n.op = Op::Mul;
  n.a = a;
  n.b = b;
  n.val = ta;
  for (std::size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] *= tb.v[i];
  return push(std::move(n));
}

int Graph::scale(int a, double c) {
  check_id(a);
  Node n;
  n.op = Op::Scale;
  n.a = a;
  n.x0 = c;
  n.val = val(a);
  for (double& x : n.val.v) x *= c;
  return push(std::move(n));
}

int Graph::add_scaled(const std::vector<int>& xs, const std::vector<double>& coeffs) {
  if (xs.empty() || xs.size() != coeffs.size())
    throw std::invalid_argument("graph add_scaled: need equally many nodes and coefficients");
  for (int id : xs) check_id(id);
  const Tensor& t0 = val(xs[0]);
  Node n;
  n.op = Op::AddScaled;
  n.list = xs;
  n.dlist = coeffs;
  n.val = Tensor(t0.rows, t0.cols);
  for (std::size_t j = 1; j < xs.size(); ++j)
    if (!val(xs[j]).same_shape(t0))
      throw std::invalid_argument("graph add_scaled: shape mismatch " + val(xs[j]).shape_str() + " vs " + t0.shape_str());
  // Extended-precision accumulation: the weighted sum is faithfully rounded,
  // so e.g. 0.3*1 - 0.35*2 - 0.35*3 lands on -1.45 exactly.
  for (std::size_t i = 0; i < n.val.v.size(); ++i) {
    long double acc = 0.0L;
    for (std::size_t j = 0; j < xs.size(); ++j)
      acc += static_cast<long double>(coeffs[j]) * val(xs[j]).v[i];
    n.val.v[i] = static_cast<double>(acc);
  }
  return push(std::move(n));
}

int Graph::add_row_broadcast(int x, int bias) {
  check_id(x);
  check_id(bias);
  const Tensor& tx = val(x);
  const Tensor& tb = val(bias);
  if (tb.rows != 1 || tb.cols != tx.cols)
    throw std::invalid_argument("graph add_row_broadcast: bias must be 1x" + std::to_string(tx.cols));
  Node n;
  n.op = Op::AddRowBroadcast;
  n.a = x;
  n.b = bias;
  n.val = tx;
  for (int r = 0; r < tx.rows; ++r) {
    double* out = n.val.row_ptr(r);
    for (int c = 0; c < tx.cols; ++c) out[c] += tb.v[static_cast<std::size_t>(c)];
  }
  return push(std::move(n));
}

int Graph::tanh_(int a) {
  check_id(a);
  Node n;
  n.op = Op::Tanh;
  n.a = a;
  n.val = val(a);
  for (double& x : n.val.v) x = std::tanh(x);
  return push(std::move(n));
}

int Graph::sigmoid(int a) {
  check_id(a);
  Node n;
  n.op = Op::Sigmoid;
  n.a = a;
  n.val = val(a);
  for (double& x : n.val.v) x = 1.0 / (1.0 + std::exp(-x));
  return push(std::move(n));
}

int Graph::gelu(int a) {
  check_id(a);
  Node n;
  n.op = Op::Gelu;
  n.a = a;
  n.val = val(a);
  for (double& x : n.val.v) x = x * norm_cdf(x);
  return push(std::move(n));
}

int Graph::layer_norm(int x, int gain, int bias, double eps) {
  check_id(x);
  check_id(gain);
  check_id(bias);
  const Tensor& tx = val(x);
  const Tensor& tg = val(gain);
  const Tensor& tb = val(bias);
  if (tg.rows != 1 || tg.cols != tx.cols || tb.rows != 1 || tb.cols != tx.cols)
    throw std::invalid_argument("graph layer_norm: gain/bias must be 1x" + std::to_string(tx.cols));
  if (eps <= 0.0) throw std::invalid_argument("graph layer_norm: eps must be positive");
  Node n;
  n.op = Op::LayerNorm;
  n.a = x;
  n.b = gain;
  n.c = bias;
  n.x0 = eps;
  n.val = Tensor(tx.rows, tx.cols);
  n.aux = Tensor(tx.rows, tx.cols);  // normalized rows
  n.aux2 = Tensor(tx.rows, 1);       // 1/sqrt(var+eps) per row
  for (int r = 0; r < tx.rows; ++r) {
    const double* in = tx.row_ptr(r);
    double mean = 0.0;
    for (int c = 0; c < tx.cols; ++c) mean += in[c];
    mean /= tx.cols;
    double var = 0.0;
    for (int c = 0; c < tx.cols; ++c) {
      const double d = in[c] - mean;
      var += d * d;
    }
    var /= tx.cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    n.aux2.at(r, 0) = inv;
    double* xhat = n.aux.row_ptr(r);
    double* out = n.val.row_ptr(r);
    for (int c = 0; c < tx.cols; ++c) {
      xhat[c] = (in[c] - mean) * inv;
      out[c] = tg.v[static_cast<std::size_t>(c)] * xhat[c] + tb.v[static_cast<std::size_t>(c)];
    }
  }
  return push(std::move(n));
}

int Graph::softmax_rows(int x) {
  check_id(x);
  Node n;
  n.op = Op::SoftmaxRows;
  n.a = x;
  n.val = Tensor(val(x).rows, val(x).cols);
  kernels::softmax_rows(val(x), n.val);
  return push(std::move(n));
}

int Graph::rows_gather(int table, const std::vector<int>& ids) {
  check_id(table);
  const Tensor& tt = val(table);
  if (ids.empty()) throw std::invalid_argument("graph rows_gather: empty id list");
  Node n;
  n.op = Op::RowsGather;
  n.a = table;
  n.list = ids;
  n.val = Tensor(static_cast<int>(ids.size()), tt.cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int r = ids[i];
    if (r < 0 || r >= tt.rows)
      throw std::invalid_argument("graph rows_gather: row " + std::to_string(r) + " out of range for " + tt.shape_str());
    const double* src = tt.row_ptr(r);
    double* dst = n.val.row_ptr(static_cast<int>(i));
    for (int c = 0; c < tt.cols; ++c) dst[c] = src[c];
  }
  return push(std::move(n));
}

int Graph::replace_rows(int x, const std::vector<int>& positions, const std::vector<int>& vec_nodes) {
  check_id(x);
  if (positions.size() != vec_nodes.size())
    throw std::invalid_argument("graph replace_rows: positions/vectors length mismatch");
  const Tensor& tx = val(x);
  Node n;
  n.op = Op::ReplaceRows;
  n.a = x;
  n.list = positions;
  n.list2 = vec_nodes;
  n.val = tx;
  std::vector<char> seen(static_cast<std::size_t>(tx.rows), 0);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int p = positions[i];
    if (p < 0 || p >= tx.rows)
      throw std::invalid_argument("graph replace_rows: position " + std::to_string(p) + " out of range");
    if (seen[static_cast<std::size_t>(p)])
      throw std::invalid_argument("graph replace_rows: duplicate position " + std::to_string(p));
    seen[static_cast<std::size_t>(p)] = 1;
    check_id(vec_nodes[i]);
    const Tensor& tv = val(vec_nodes[i]);
    if (tv.rows != 1 || tv.cols != tx.cols)
      throw std::invalid_argument("graph replace_rows: replacement must be 1x" + std::to_string(tx.cols));
    double* dst = n.val.row_ptr(p);
    for (int c = 0; c < tx.cols; ++c) dst[c] = tv.v[static_cast<std::size_t>(c)];
  }
  return push(std::move(n));
}

int Graph::slice_cols(int x, int c0, int c1) {
  check_id(x);
  const Tensor& tx = val(x);
  if (c0 < 0 || c1 > tx.cols || c0 >= c1)
    throw std::invalid_argument("graph slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) + ") for " + tx.shape_str());
  Node n;
  n.op = Op::SliceCols;
  n.a = x;
  n.i0 = c0;
  n.i1 = c1;
  n.val = Tensor(tx.rows, c1 - c0);
  for (int r = 0; r < tx.rows; ++r) {
    const double* src = tx.row_ptr(r);
    double* dst = n.val.row_ptr(r);
    for (int c = c0; c < c1; ++c) dst[c - c0] = src[c];
  }
  return push(std::move(n));
}

int Graph::concat_cols(const std::vector<int>& xs) {
  if (xs.empty()) throw std::invalid_argument("graph concat_cols: empty list");
  int cols = 0;
  const int rows = val(xs[0]).rows;
  for (int id : xs) {
    check_id(id);
    if (val(id).rows != rows) throw std::invalid_argument("graph concat_cols: row mismatch");
    cols += val(id).cols;
  }
  Node n;
  n.op = Op::ConcatCols;
  n.list = xs;
  n.val = Tensor(rows, cols);
  int off = 0;
  for (int id : xs) {
    const Tensor& t = val(id);
    for (int r = 0; r < rows; ++r) {
      const double* src = t.row_ptr(r);
      double* dst = n.val.row_ptr(r) + off;
      for (int c = 0; c < t.cols; ++c) dst[c] = src[c];
    }
    off += t.cols;
  }
  return push(std::move(n));
}

int Graph::mean_rows(int x, int r0, int r1) {
  check_id(x);
  const Tensor& tx = val(x);
  if (r0 < 0 || r1 > tx.rows || r0 >= r1)
    throw std::invalid_argument("graph mean_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) + ") for " + tx.shape_str());
  Node n;
  n.op = Op::MeanRows;
  n.a = x;
  n.i0 = r0;
  n.i1 = r1;
  n.val = Tensor(1, tx.cols);
  const double inv = 1.0 / (r1 - r0);
  for (int r = r0; r < r1; ++r) {
    const double* src = tx.row_ptr(r);
    for (int c = 0; c < tx.cols; ++c) n.val.v[static_cast<std::size_t>(c)] += inv * src[c];
  }
  return push(std::move(n));
}

int Graph::dot(int a, int b) {
  check_id(a);
  check_id(b);
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    throw std::invalid_argument("graph dot: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Node n;
  n.op = Op::Dot;
  n.a = a;
  n.b = b;
  n.val = Tensor(1, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < ta.v.size(); ++i) s += ta.v[i] * tb.v[i];
  n.val.v[0] = s;
  return push(std::move(n));
}

int Graph::stack_scalars(const std::vector<int>& scalars) {
  if (scalars.empty()) throw std::invalid_argument("graph stack_scalars: empty list");
  Node n;
  n.op = Op::StackScalars;
  n.list = scalars;
  n.val = Tensor(1, static_cast<int>(scalars.size()));
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    check_id(scalars[i]);
    const Tensor& t = val(scalars[i]);
    if (t.rows != 1 || t.cols != 1) throw std::invalid_argument("graph stack_scalars: node " + std::to_string(scalars[i]) + " is not 1x1");
    n.val.v[i] = t.v[0];
  }
  return push(std::move(n));
}

int Graph::weighted_sum(int weights, const std::vector<int>& vecs) {
  check_id(weights);
  const Tensor& tw = val(weights);
  if (tw.rows != 1 || tw.cols != static_cast<int>(vecs.size()))
    throw std::invalid_argument("graph weighted_sum: weights must be 1x" + std::to_string(vecs.size()));
  if (vecs.empty()) throw std::invalid_argument("graph weighted_sum: empty vector list");
  const int d = val(vecs[0]).cols;
  Node n;
  n.op = Op::WeightedSum;
  n.a = weights;
  n.list = vecs;
  n.val = Tensor(1, d);
  for (std::size_t j = 0; j < vecs.size(); ++j) {
    check_id(vecs[j]);
    const Tensor& tv = val(vecs[j]);
    if (tv.rows != 1 || tv.cols != d) throw std::invalid_argument("graph weighted_sum: vectors must be 1x" + std::to_string(d));
    const double w = tw.v[j];
    for (int c = 0; c < d; ++c) n.val.v[static_cast<std::size_t>(c)] += w * tv.v[static_cast<std::size_t>(c)];
  }
  return push(std::move(n));
}

int Graph::cross_entropy_mean(int logits, const std::vector<int>& positions, const std::vector<int>& golds) {
  check_id(logits);
  if (positions.empty() || positions.size() != golds.size())
    throw std::invalid_argument("graph cross_entropy_mean: need equal non-empty positions/golds");
  const Tensor& tl = val(logits);
  Node n;
  n.op = Op::CrossEntropyMean;
  n.a = logits;
  n.list = positions;
  n.list2 = golds;
  n.aux = Tensor(static_cast<int>(positions.size()), tl.cols);  // softmax rows
  double loss = 0.0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int r = positions[i];
    const int g = golds[i];
    if (r < 0 || r >= tl.rows) throw std::invalid_argument("graph cross_entropy_mean: position " + std::to_string(r) + " out of range");
    if (g < 0 || g >= tl.cols) throw std::invalid_argument("graph cross_entropy_mean: gold id " + std::to_string(g) + " out of range");
    const double* row = tl.row_ptr(r);
    double mx = row[0];
    for (int c = 1; c < tl.cols; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    double* prow = n.aux.row_ptr(static_cast<int>(i));
    for (int c = 0; c < tl.cols; ++c) {
      prow[c] = std::exp(row[c] - mx);
      denom += prow[c];
    }
    const double inv = 1.0 / denom;
    for (int c = 0; c < tl.cols; ++c) prow[c] *= inv;
    loss += mx + std::log(denom) - row[g];
  }
  n.val = Tensor(1, 1);
  n.val.v[0] = loss / static_cast<double>(positions.size());
  return push(std::move(n));
}

int Graph::bernoulli_logprob(int probs, const std::vector<int>& bits) {
  check_id(probs);
  const Tensor& tp = val(probs);
  if (tp.rows != 1 || tp.cols != static_cast<int>(bits.size()))
    throw std::invalid_argument("graph bernoulli_logprob: probs must be 1x" + std::to_string(bits.size()));
  Node n;
  n.op = Op::BernoulliLogProb;
  n.a = probs;
  n.list = bits;
  n.val = Tensor(1, 1);
  double s = 0.0;
  for (std::size_t j = 0; j < bits.size(); ++j) {
    const int b = bits[j];
    if (b != 0 && b != 1) throw std::invalid_argument("graph bernoulli_logprob: bits must be 0/1");
    const double p = tp.v[j];
    if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("graph bernoulli_logprob: probabilities must lie strictly in (0,1)");
    s += b ? std::log(p) : std::log1p(-p);
  }
  n.val.v[0] = s;
  return push(std::move(n));
}

int Graph::clamp(int a, double lo, double hi) {
  check_id(a);
  if (!(lo < hi)) throw std::invalid_argument("graph clamp: lo must be < hi");
  Node n;
  n.op = Op::Clamp;
  n.a = a;
  n.x0 = lo;
  n.x1 = hi;
  n.val = val(a);
  for (double& x : n.val.v) x = std::min(std::max(x, lo), hi);
  return push(std::move(n));
}

int Graph::mul_scalar_node(int x, int scalar_node) {
  check_id(x);
  check_id(scalar_node);
  const Tensor& ts = val(scalar_node);
  if (ts.rows != 1 || ts.cols != 1) throw std::invalid_argument("graph mul_scalar_node: scalar node must be 1x1");
  Node n;
  n.op = Op::MulScalarNode;
  n.a = x;
  n.b = scalar_node;
  n.val = val(x);
  const double s = ts.v[0];
  for (double& v : n.val.v) v *= s;
  return push(std::move(n));
}

const Tensor& Graph::value(int id) const {
  check_id(id);
  return val(id);
}

double Graph::scalar(int id) const {
  const Tensor& t = value(id);
  if (t.rows != 1 || t.cols != 1) throw std::invalid_argument("graph scalar: node is " + t.shape_str() + ", not 1x1");
  return t.v[0];
}

const Tensor& Graph::grad(int id) const {
  check_id(id);
  return has_grad(id) ? at(id).grad : kEmpty;
}

void Graph::refresh() {
  for (Node& n : nodes_) {
    switch (n.op) {
      case Op::Input:
      case Op::Param:
        break;
      case Op::MatMul:
        kernels::matmul(val(n.a), val(n.b), n.val);
        break;
      case Op::MatMulNT:
        kernels::matmul_nt(val(n.a), val(n.b), n.val);
        break;
      case Op::Add: {
        const Tensor& tb = val(n.b);
        n.val = val(n.a);
        for (std::size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] += tb.v[i];
        break;
      }
      case Op::Sub: {
        const Tensor& tb = val(n.b);
        n.val = val(n.a);
        for (std::size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] -= tb.v[i];
        break;
      }
      case Op::Mul: {
        const Tensor& tb = val(n.b);
        n.val = val(n.a);
        for (std::size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] *= tb.v[i];
        break;
      }
      case Op::Scale:
        n.val = val(n.a);
        for (double& x : n.val.v) x *= n.x0;
        break;
      case Op::AddScaled:
        // Mirrors the builder: faithfully rounded long double accumulation.
        for (std::size_t i = 0; i < n.val.v.size(); ++i) {
          long double acc = 0.0L;
          for (std::size_t j = 0; j < n.list.size(); ++j)
            acc += static_cast<long double>(n.dlist[j]) * val(n.list[j]).v[i];
          n.val.v[i] = static_cast<double>(acc);
        }
        break;
      case Op::AddRowBroadcast: {
        const Tensor& tb = val(n.b);
        n.val = val(n.a);
        for (int r = 0; r < n.val.rows; ++r) {
          double* out = n.val.row_ptr(r);
          for (int c = 0; c < n.val.cols; ++c) out[c] += tb.v[static_cast<std::size_t>(c)];
        }
        break;
      }
      case Op::Tanh:
        n.val = val(n.a);
        for (double& x : n.val.v) x = std::tanh(x);
        break;
      case Op::Sigmoid:
        n.val = val(n.a);
        for (double& x : n.val.v) x = 1.0 / (1.0 + std::exp(-x));
        break;
      case Op::Gelu:
        n.val = val(n.a);
        for (double& x : n.val.v) x = x * norm_cdf(x);
        break;
      case Op::LayerNorm: {
        const Tensor& tx = val(n.a);
        const Tensor& tg = val(n.b);
        const Tensor& tb = val(n.c);
        for (int r = 0; r < tx.rows; ++r) {
          const double* in = tx.row_ptr(r);
          double mean = 0.0;
          for (int c = 0; c < tx.cols; ++c) mean += in[c];
          mean /= tx.cols;
          double var = 0.0;
          for (int c = 0; c < tx.cols; ++c) {
            const double d = in[c] - mean;
            var += d * d;
          }
          var /= tx.cols;
          const double inv = 1.0 / std::sqrt(var + n.x0);
          n.aux2.at(r, 0) = inv;
          double* xhat = n.aux.row_ptr(r);
          double* out = n.val.row_ptr(r);
          for (int c = 0; c < tx.cols; ++c) {
            xhat[c] = (in[c] - mean) * inv;
            out[c] = tg.v[static_cast<std::size_t>(c)] * xhat[c] + tb.v[static_cast<std::size_t>(c)];
          }
        }
        break;
      }
      case Op::SoftmaxRows:
        kernels::softmax_rows(val(n.a), n.val);
        break;
      case Op::RowsGather: {
        const Tensor& tt = val(n.a);
        for (std::size_t i = 0; i < n.list.size(); ++i) {
          const double* src = tt.row_ptr(n.list[i]);
          double* dst = n.val.row_ptr(static_cast<int>(i));
          for (int c = 0; c < tt.cols; ++c) dst[c] = src[c];
        }
        break;
      }
      case Op::ReplaceRows: {
        n.val = val(n.a);
        for (std::size_t i = 0; i < n.list.size(); ++i) {
          const Tensor& tv = val(n.list2[i]);
          double* dst = n.val.row_ptr(n.list[i]);
          for (int c = 0; c < n.val.cols; ++c) dst[c] = tv.v[static_cast<std::size_t>(c)];
        }
        break;
      }
      case Op::SliceCols: {
        const Tensor& tx = val(n.a);
        for (int r = 0; r < tx.rows; ++r) {
          const double* src = tx.row_ptr(r);
          double* dst = n.val.row_ptr(r);
          for (int c = n.i0; c < n.i1; ++c) dst[c - n.i0] = src[c];
        }
        break;
      }
      case Op::ConcatCols: {
        int off = 0;
        for (int id : n.list) {
          const Tensor& t = val(id);
          for (int r = 0; r < t.rows; ++r) {
            const double* src = t.row_ptr(r);
            double* dst = n.val.row_ptr(r) + off;
            for (int c = 0; c < t.cols; ++c) dst[c] = src[c];
          }
          off += t.cols;
        }
        break;
      }
      case Op::MeanRows: {
        const Tensor& tx = val(n.a);
        std::fill(n.val.v.begin(), n.val.v.end(), 0.0);
        const double inv = 1.0 / (n.i1 - n.i0);
        for (int r = n.i0; r < n.i1; ++r) {
          const double* src = tx.row_ptr(r);
          for (int c = 0; c < tx.cols; ++c) n.val.v[static_cast<std::size_t>(c)] += inv * src[c];
        }
        break;
      }
      case Op::Dot: {
        const Tensor& ta = val(n.a);
        const Tensor& tb = val(n.b);
        double s = 0.0;
        for (std::size_t i = 0; i < ta.v.size(); ++i) s += ta.v[i] * tb.v[i];
        n.val.v[0] = s;
        break;
      }
      case Op::StackScalars:
        for (std::size_t i = 0; i < n.list.size(); ++i) n.val.v[i] = val(n.list[i]).v[0];
        break;
      case Op::WeightedSum: {
        const Tensor& tw = val(n.a);
        std::fill(n.val.v.begin(), n.val.v.end(), 0.0);
        for (std::size_t j = 0; j < n.list.size(); ++j) {
          const Tensor& tv = val(n.list[j]);
          const double w = tw.v[j];
          for (int c = 0; c < n.val.cols; ++c)
            n.val.v[static_cast<std::size_t>(c)] += w * tv.v[static_cast<std::size_t>(c)];
        }
        break;
      }
      case Op::CrossEntropyMean: {
        const Tensor& tl = val(n.a);
        double loss = 0.0;
        for (std::size_t i = 0; i < n.list.size(); ++i) {
          const int r = n.list[i];
          const int g = n.list2[i];
          const double* row = tl.row_ptr(r);
          double mx = row[0];
          for (int c = 1; c < tl.cols; ++c) mx = std::max(mx, row[c]);
          double denom = 0.0;
          double* prow = n.aux.row_ptr(static_cast<int>(i));
          for (int c = 0; c < tl.cols; ++c) {
            prow[c] = std::exp(row[c] - mx);
            denom += prow[c];
          }
          const double inv = 1.0 / denom;
          for (int c = 0; c < tl.cols; ++c) prow[c] *= inv;
          loss += mx + std::log(denom) - row[g];
        }
        n.val.v[0] = loss / static_cast<double>(n.list.size());
        break;
      }
      case Op::BernoulliLogProb: {
        const Tensor& tp = val(n.a);
        double s = 0.0;
        for (std::size_t j = 0; j < n.list.size(); ++j) {
          const double p = tp.v[j];
          if (p <= 0.0 || p >= 1.0)
            throw std::runtime_error("graph refresh: probability left (0,1) under new leaf values");
          s += n.list[j] ? std::log(p) : std::log1p(-p);
        }
        n.val.v[0] = s;
        break;
      }
      case Op::Clamp:
        n.val = val(n.a);
        for (double& x : n.val.v) x = std::min(std::max(x, n.x0), n.x1);
        break;
      case Op::MulScalarNode: {
        const double s = val(n.b).v[0];
        n.val = val(n.a);
        for (double& v : n.val.v) v *= s;
        break;
      }
    }
  }
}

Tensor& Graph::ensure_grad(int id) {
  Node& n = at(id);
  if (n.grad.rows == 0) {
    const Tensor& v = val(id);
    n.grad = Tensor(v.rows, v.cols);
  }
  return n.grad;
}

bool Graph::has_grad(int id) const { return at(id).grad.rows != 0; }

void Graph::backward(int loss) {
  check_id(loss);
  if (backward_done_)
    throw std::runtime_error("graph backward: gradients already consumed; build a new forward pass first");
  const Tensor& tl = val(loss);
  if (tl.rows != 1 || tl.cols != 1)
    throw std::invalid_argument("graph backward: loss must be 1x1, got " + tl.shape_str());
  backward_done_ = true;
  ensure_grad(loss).v[0] = 1.0;
  for (int id = loss; id >= 0; --id) {
    if (has_grad(id)) backprop_node(id);
  }
}

void Graph::backprop_node(int id) {
  Node& n = at(id);
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::Input:
    case Op::Param:
      break;
    case Op::MatMul: {
      kernels::matmul_nt(g, val(n.b), ensure_grad(n.a), true);
      kernels::matmul_tn(val(n.a), g, ensure_grad(n.b), true);
      break;
    }
    case Op::MatMulNT: {
      kernels::matmul(g, val(n.b), ensure_grad(n.a), true);
      kernels::matmul_tn(g, val(n.a), ensure_grad(n.b), true);
      break;
    }
    case Op::Add: {
      Tensor& ga = ensure_grad(n.a);
      Tensor& gb = ensure_grad(n.b);
      for (std::size_t i = 0; i < g.v.size(); ++i) {
        ga.v[i] += g.v[i];
        gb.v[i] += g.v[i];
      }
      break;
    }
    case Op::Sub: {
      Tensor& ga = ensure_grad(n.a);
      Tensor& gb = ensure_grad(n.b);
      for (std::size_t i = 0; i < g.v.size(); ++i) {
        ga.v[i] += g.v[i];
        gb.v[i] -= g.v[i];
      }
      break;
    }
    case Op::Mul: {
      Tensor& ga = ensure_grad(n.a);
      Tensor& gb = ensure_grad(n.b);
      const Tensor& ta = val(n.a);
      const Tensor& tb = val(n.b);
      for (std::size_t i = 0; i < g.v.size(); ++i) {
        ga.v[i] += g.v[i] * tb.v[i];
        gb.v[i] += g.v[i] * ta.v[i];
      }
      break;
    }
    case Op::Scale: {
      Tensor& ga = ensure_grad(n.a);
      for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += n.x0 * g.v[i];
      break;
    }
    case Op::AddScaled: {
      for (std::size_t j = 0; j < n.list.size(); ++j) {
        Tensor& gj = ensure_grad(n.list[j]);
        const double c = n.dlist[j];
        for (std::size_t i = 0; i < g.v.size(); ++i) gj.v[i] += c * g.v[i];
      }
      break;
    }
    case Op::AddRowBroadcast: {
      Tensor& gx = ensure_grad(n.a);
      Tensor& gb = ensure_grad(n.b);
      for (std::size_t i = 0; i < g.v.size(); ++i) gx.v[i] += g.v[i];
      for (int r = 0; r < g.rows; ++r) {
        const double* grow = g.row_ptr(r);
        for (int c = 0; c < g.cols; ++c) gb.v[static_cast<std::size_t>(c)] += grow[c];
      }
      break;
    }
    case Op::Tanh: {
      Tensor& ga = ensure_grad(n.a);
      for (std::size_t i = 0; i < g.v.size(); ++i) {
        const double y = n.val.v[i];
        ga.v[i] += g.v[i] * (1.0 - y * y);
      }
      break;
    }
    case Op::Sigmoid: {
      Tensor& ga = ensure_grad(n.a);
      for (std::size_t i = 0; i < g.v.size(); ++i) {
        const double y = n.val.v[i];
        ga.v[i] += g.v[i] * y * (1.0 - y);
      }
      break;
    }
    case Op::Gelu: {
      Tensor& ga = ensure_grad(n.a);
      const Tensor& tx = val(n.a);
      for (std::size_t i = 0; i < g.v.size(); ++i) {
        const double x = tx.v[i];
        ga.v[i] += g.v[i] * (norm_cdf(x) + x * norm_pdf(x));
      }
      break;
    }
    case Op::LayerNorm: {
      Tensor& gx = ensure_grad(n.a);
      Tensor& gg = ensure_grad(n.b);
      Tensor& gb = ensure_grad(n.c);
      const Tensor& tg = val(n.b);
      const int cols = g.cols;
      for (int r = 0; r < g.rows; ++r) {
        const double* grow = g.row_ptr(r);
        const double* xhat = n.aux.row_ptr(r);
        const double inv = n.aux2.at(r, 0);
        double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat * xhat)
        for (int c = 0; c < cols; ++c) {
          const double dxh = grow[c] * tg.v[static_cast<std::size_t>(c)];
          m1 += dxh;
          m2 += dxh * xhat[c];
        }
        m1 /= cols;
        m2 /= cols;
        double* gxr = gx.row_ptr(r);
        for (int c = 0; c < cols; ++c) {
          const double dxh = grow[c] * tg.v[static_cast<std::size_t>(c)];
          gxr[c] += inv * (dxh - m1 - xhat[c] * m2);
          gg.v[static_cast<std::size_t>(c)] += grow[c] * xhat[c];
          gb.v[static_cast<std::size_t>(c)] += grow[c];
        }
      }
      break;
    }
    case Op::SoftmaxRows: {
      Tensor& gx = ensure_grad(n.a);
      for (int r = 0; r < g.rows; ++r) {
        const double* grow = g.row_ptr(r);
        const double* y = n.val.row_ptr(r);
        double dotgy = 0.0;
        for (int c = 0; c < g.cols; ++c) dotgy += grow[c] * y[c];
        double* gxr = gx.row_ptr(r);
        for (int c = 0; c < g.cols; ++c) gxr[c] += y[c] * (grow[c] - dotgy);
      }
      break;
    }
    case Op::RowsGather: {
      Tensor& gt = ensure_grad(n.a);
      for (std::size_t i = 0; i < n.list.size(); ++i) {
        const double* grow = g.row_ptr(static_cast<int>(i));
        double* dst = gt.row_ptr(n.list[i]);
        for (int c = 0; c < g.cols; ++c) dst[c] += grow[c];
      }
      break;
    }
    case Op::ReplaceRows: {
      Tensor& gx = ensure_grad(n.a);
      std::vector<char> replaced(static_cast<std::size_t>(g.rows), 0);
      for (std::size_t i = 0; i < n.list.size(); ++i) {
        const int p = n.list[i];
        replaced[static_cast<std::size_t>(p)] = 1;
        Tensor& gv = ensure_grad(n.list2[i]);
        const double* grow = g.row_ptr(p);
        for (int c = 0; c < g.cols; ++c) gv.v[static_cast<std::size_t>(c)] += grow[c];
      }
      for (int r = 0; r < g.rows; ++r) {
        if (replaced[static_cast<std::size_t>(r)]) continue;
        const double* grow = g.row_ptr(r);
        double* dst = gx.row_ptr(r);
        for (int c = 0; c < g.cols; ++c) dst[c] += grow[c];
      }
      break;
    }
    case Op::SliceCols: {
      Tensor& gx = ensure_grad(n.a);
      for (int r = 0; r < g.rows; ++r) {
        const double* grow = g.row_ptr(r);
        double* dst = gx.row_ptr(r) + n.i0;
        for (int c = 0; c < g.cols; ++c) dst[c] += grow[c];
      }
      break;
    }
    case Op::ConcatCols: {
      int off = 0;
      for (int id2 : n.list) {
        Tensor& gx = ensure_grad(id2);
        for (int r = 0; r < g.rows; ++r) {
          const double* grow = g.row_ptr(r) + off;
          double* dst = gx.row_ptr(r);
          for (int c = 0; c < gx.cols; ++c) dst[c] += grow[c];
        }
        off += gx.cols;
      }
      break;
    }
    case Op::MeanRows: {
      Tensor& gx = ensure_grad(n.a);
      const double inv = 1.0 / (n.i1 - n.i0);
      for (int r = n.i0; r < n.i1; ++r) {
        double* dst = gx.row_ptr(r);
        for (int c = 0; c < g.cols; ++c) dst[c] += inv * g.v[static_cast<std::size_t>(c)];
      }
      break;
    }
    case Op::Dot: {
      Tensor& ga = ensure_grad(n.a);
      Tensor& gb = ensure_grad(n.b);
      const Tensor& ta = val(n.a);
      const Tensor& tb = val(n.b);
      const double d = g.v[0];
      for (std::size_t i = 0; i < ta.v.size(); ++i) {
        ga.v[i] += d * tb.v[i];
        gb.v[i] += d * ta.v[i];
      }
      break;
    }
    case Op::StackScalars: {
      for (std::size_t i = 0; i < n.list.size(); ++i) ensure_grad(n.list[i]).v[0] += g.v[i];
      break;
    }
    case Op::WeightedSum: {
      Tensor& gw = ensure_grad(n.a);
      const Tensor& tw = val(n.a);
      for (std::size_t j = 0; j < n.list.size(); ++j) {
        const Tensor& tv = val(n.list[j]);
        Tensor& gv = ensure_grad(n.list[j]);
        double s = 0.0;
        for (std::size_t c = 0; c < tv.v.size(); ++c) {
          s += g.v[c] * tv.v[c];
          gv.v[c] += tw.v[j] * g.v[c];
        }
        gw.v[j] += s;
      }
      break;
    }
    case Op::CrossEntropyMean: {
      Tensor& gl = ensure_grad(n.a);
      const double d = g.v[0] / static_cast<double>(n.list.size());
      for (std::size_t i = 0; i < n.list.size(); ++i) {
        const double* prow = n.aux.row_ptr(static_cast<int>(i));
        double* dst = gl.row_ptr(n.list[i]);
        for (int c = 0; c < gl.cols; ++c) dst[c] += d * prow[c];
        dst[n.list2[i]] -= d;
      }
      break;
    }
    case Op::BernoulliLogProb: {
      Tensor& gp = ensure_grad(n.a);
      const Tensor& tp = val(n.a);
      const double d = g.v[0];
      for (std::size_t j = 0; j < n.list.size(); ++j) {
        const double p = tp.v[j];
        gp.v[j] += d * (n.list[j] ? 1.0 / p : -1.0 / (1.0 - p));
      }
      break;
    }
    case Op::Clamp: {
      Tensor& ga = ensure_grad(n.a);
      const Tensor& tx = val(n.a);
      for (std::size_t i = 0; i < g.v.size(); ++i) {
        if (tx.v[i] > n.x0 && tx.v[i] < n.x1) ga.v[i] += g.v[i];
      }
      break;
    }
    case Op::MulScalarNode: {
      Tensor& gx = ensure_grad(n.a);
      Tensor& gs = ensure_grad(n.b);
      const Tensor& tx = val(n.a);
      const double s = val(n.b).v[0];
      double acc = 0.0;
      for (std::size_t i = 0; i < g.v.size(); ++i) {
        gx.v[i] += s * g.v[i];
        acc += g.v[i] * tx.v[i];
      }
      gs.v[0] += acc;
      break;
    }
  }
}

void Graph::for_each_param_grad(const std::function<void(int, const Tensor&)>& fn) const {
  for (const Node& n : nodes_) {
    if (n.op == Op::Param && n.grad.rows != 0) fn(n.param_id, n.grad);
  }
}

}  // namespace kehrl
