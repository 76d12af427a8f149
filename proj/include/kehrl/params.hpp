#pragma once
// Named parameter collection shared by the encoder and the policies, plus
// the gradient buffer and the per-graph binding cache.

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kehrl/graph.hpp"
#include "kehrl/tensor.hpp"

namespace kehrl {

class ParamSet {
 public:
  int add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw std::invalid_argument("params: duplicate name " + name);
    const int id = static_cast<int>(tensors_.size());
    names_.push_back(name);
    tensors_.push_back(std::move(t));
    index_.emplace(name, id);
    return id;
  }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }

  Tensor& tensor(int id) { return tensors_.at(static_cast<std::size_t>(id)); }
  const Tensor& tensor(int id) const { return tensors_.at(static_cast<std::size_t>(id)); }
  Tensor& tensor(const std::string& name) { return tensor(require(name)); }
  const Tensor& tensor(const std::string& name) const { return tensor(require(name)); }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tensors_.size()); }

  int require(const std::string& name) const {
    const int id = find(name);
    if (id < 0) throw std::invalid_argument("params: unknown name " + name);
    return id;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, int> index_;
};

// Accumulates gradients per parameter id across rollouts, in caller order.
class GradBuffer {
 public:
  explicit GradBuffer(const ParamSet& ps) {
    g_.reserve(static_cast<std::size_t>(ps.size()));
    for (int i = 0; i < ps.size(); ++i) g_.emplace_back(ps.tensor(i).rows, ps.tensor(i).cols);
  }

  void accumulate(int pid, const Tensor& grad, double scale = 1.0) {
    Tensor& dst = g_.at(static_cast<std::size_t>(pid));
    if (!dst.same_shape(grad))
      throw std::invalid_argument("grad buffer: shape mismatch for param " + std::to_string(pid));
    for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += scale * grad.v[i];
  }

  void clear() {
    for (Tensor& t : g_)
      for (double& x : t.v) x = 0.0;
  }

  const Tensor& grad(int pid) const { return g_.at(static_cast<std::size_t>(pid)); }
  Tensor& grad(int pid) { return g_.at(static_cast<std::size_t>(pid)); }
  int size() const { return static_cast<int>(g_.size()); }

 private:
  std::vector<Tensor> g_;
};

// Binds each parameter at most once per graph so repeated sub-forwards share
// one leaf (and one exported gradient) per parameter. pid_offset shifts the
// exported ids so several ParamSets can coexist in one graph without clashes.
class ParamBinder {
 public:
  ParamBinder(Graph& g, const ParamSet& ps, int pid_offset = 0)
      : g_(g), ps_(ps), offset_(pid_offset), ids_(static_cast<std::size_t>(ps.size()), -1) {}

  int operator()(int pid) {
    int& slot = ids_.at(static_cast<std::size_t>(pid));
    if (slot < 0) slot = g_.param(ps_.tensor(pid), pid + offset_);
    return slot;
  }
  int operator()(const std::string& name) { return (*this)(ps_.require(name)); }

 private:
  Graph& g_;
  const ParamSet& ps_;
  int offset_;
  std::vector<int> ids_;
};

}  // namespace kehrl
