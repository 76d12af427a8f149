#pragma once
// Reverse-mode autodiff over dense tensors, define-by-run. One Graph per
// rollout; nodes store values eagerly and a tape of typed ops is replayed
// in reverse for gradients. Parameters are bound by reference (read-only
// during the rollout); their gradients are read back per graph, so rollouts
// for different sentences can run concurrently against shared parameters.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kehrl/tensor.hpp"

namespace kehrl {

enum class Op : std::uint8_t {
  Input,
  Param,
  MatMul,
  MatMulNT,  // a * b^T
  Add,
  Sub,
  Mul,
  Scale,
  AddScaled,  // sum_i coeff_i * x_i, same shapes
  AddRowBroadcast,
  Tanh,
  Sigmoid,
  Gelu,
  LayerNorm,
  SoftmaxRows,
  RowsGather,
  ReplaceRows,
  SliceCols,
  ConcatCols,
  MeanRows,
  Dot,
  StackScalars,
  WeightedSum,
  CrossEntropyMean,
  BernoulliLogProb,
  Clamp,
  MulScalarNode,
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves ------------------------------------------------------------
  int input(Tensor t);
  int input(const std::vector<double>& row);
  // Binds an external tensor by reference; its gradient is exported under
  // param_id after backward(). The tensor must outlive the graph.
  int param(const Tensor& t, int param_id);

  // Ops ----------------------------------------------------------------
  int matmul(int a, int b);
  int matmul_nt(int a, int b);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int a, double c);
  int add_scaled(const std::vector<int>& xs, const std::vector<double>& coeffs);
  int add_row_broadcast(int x, int bias);
  int tanh_(int a);
  int sigmoid(int a);
  int gelu(int a);
  int layer_norm(int x, int gain, int bias, double eps = 1e-5);
  int softmax_rows(int x);
  int rows_gather(int table, const std::vector<int>& ids);
  int replace_rows(int x, const std::vector<int>& positions, const std::vector<int>& vec_nodes);
  int slice_cols(int x, int c0, int c1);
  int concat_cols(const std::vector<int>& xs);
  int mean_rows(int x, int r0, int r1);
  int dot(int a, int b);
  int stack_scalars(const std::vector<int>& scalars);
  int weighted_sum(int weights, const std::vector<int>& vecs);
  int cross_entropy_mean(int logits, const std::vector<int>& positions, const std::vector<int>& golds);
  int bernoulli_logprob(int probs, const std::vector<int>& bits);
  int clamp(int a, double lo, double hi);
  int mul_scalar_node(int x, int scalar_node);

  // Access ---------------------------------------------------------------
  const Tensor& value(int id) const;
  double scalar(int id) const;  // value of a 1x1 node
  // Gradient of a node after backward(); zero-shaped tensor if untouched.
  const Tensor& grad(int id) const;

  // Re-executes the whole tape against the current leaf bindings: Param nodes
  // are re-read from their bound tensors, Input snapshots stay as recorded,
  // and every derived value is recomputed in place. Baked decisions (gather
  // ids, replace positions, sampled bits) do not change, which makes this the
  // exact forward of the function backward() differentiates - the basis for
  // finite-difference checks. Gradient state is untouched.
  void refresh();

  // Backward ---------------------------------------------------------------
  // loss must be 1x1. Throws if called twice without a new forward.
  void backward(int loss);
  bool backward_done() const { return backward_done_; }

  // Visit exported parameter gradients: fn(param_id, grad). Only params the
  // backward pass actually reached are visited.
  void for_each_param_grad(const std::function<void(int, const Tensor&)>& fn) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    const Tensor* vref = nullptr;  // non-null only for Param (external storage)
    Tensor grad;
    Tensor aux, aux2;  // op-specific caches (softmax probs, layernorm stats)
    Op op = Op::Input;
    int a = -1, b = -1, c = -1;
    int i0 = 0, i1 = 0;
    double x0 = 0.0, x1 = 0.0;
    std::vector<int> list, list2;
    std::vector<double> dlist;
    int param_id = -1;
  };

  int push(Node n);
  Node& at(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& at(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const Tensor& val(int id) const {
    const Node& n = at(id);
    return n.vref ? *n.vref : n.val;
  }
  Tensor& ensure_grad(int id);
  bool has_grad(int id) const;
  void backprop_node(int id);
  void check_id(int id) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  static const Tensor kEmpty;
};

}  // namespace kehrl
