#include "kehrl/mixer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kehrl {

int entity_context_repr(Graph& g, int hidden, int start, int end) {
  return g.mean_rows(hidden, start, end);
}

TripleRepr triple_pseudo_repr(Graph& g, ParamBinder& bind, const Encoder& enc,
                              const KnowledgeStore& store, const Vocab& vocab, const Triple& t) {
  const std::vector<std::string> parts = {store.entity_surface(t.head),
                                          store.relation_surface(t.rel),
                                          store.entity_surface(t.tail)};
  std::vector<int> tokens;
  int bounds[4] = {0, 0, 0, 0};
  for (int p = 0; p < 3; ++p) {
    for (const std::string& w : split_ws(parts[static_cast<std::size_t>(p)]))
      tokens.push_back(vocab.lookup(w));
    bounds[p + 1] = static_cast<int>(tokens.size());
  }
  if (tokens.empty()) throw std::invalid_argument("triple_pseudo_repr: all surface forms empty");
  const int l_tri = enc.config().l_tri;
  if (static_cast<int>(tokens.size()) > l_tri) tokens.resize(static_cast<std::size_t>(l_tri));
  const int len = static_cast<int>(tokens.size());

  const int hidden = enc.forward(g, bind, tokens);
  TripleRepr out;
  out.whole = g.mean_rows(hidden, 0, len);
  int* slots[3] = {&out.head, &out.rel, &out.tail};
  for (int p = 0; p < 3; ++p) {
    const int lo = std::min(bounds[p], len);
    const int hi = std::min(bounds[p + 1], len);
    // A part clipped empty by truncation falls back to the last surviving row.
    *slots[p] = lo < hi ? g.mean_rows(hidden, lo, hi) : g.mean_rows(hidden, len - 1, len);
  }
  return out;
}

EntityRepr internal_entity_repr(Graph& g, int h_e, const std::vector<int>& h_tris) {
  if (h_tris.empty()) throw std::invalid_argument("internal_entity_repr: no triple vectors");
  std::vector<int> dots;
  dots.reserve(h_tris.size());
  for (int h : h_tris) dots.push_back(g.dot(h_e, h));
  EntityRepr out;
  out.alpha = g.softmax_rows(g.stack_scalars(dots));
  out.h_mod = g.add(h_e, g.weighted_sum(out.alpha, h_tris));
  return out;
}

TripleMixRepr internal_triple_repr(Graph& g, int h_tri, int h_head, int h_rel, int h_tail) {
  const std::vector<int> parts = {h_head, h_rel, h_tail};
  std::vector<int> dots;
  for (int h : parts) dots.push_back(g.dot(h_tri, h));
  TripleMixRepr out;
  out.beta = g.softmax_rows(g.stack_scalars(dots));
  out.h_mod = g.add(h_tri, g.weighted_sum(out.beta, parts));
  return out;
}

std::vector<double> softmax(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("softmax: empty scores");
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    denom += out[i];
  }
  for (double& x : out) x /= denom;
  return out;
}

std::vector<double> entity_prior_group(const KnowledgeStore& store, const std::vector<int>& group) {
  std::vector<double> shares(group.size(), 0.0);
  const double total = static_cast<double>(store.total_count());
  for (std::size_t i = 0; i < group.size(); ++i)
    if (group[i] >= 0 && total > 0.0)
      shares[i] = static_cast<double>(store.count_of(group[i])) / total;
  return softmax(shares);
}

double entity_prior(const KnowledgeStore& store, int entity, const std::vector<int>& group) {
  const std::vector<double> scores = entity_prior_group(store, group);
  for (std::size_t i = 0; i < group.size(); ++i)
    if (group[i] == entity) return scores[i];
  throw std::invalid_argument("entity_prior: entity not in the normalization group");
}

double cosine(const Tensor& a, const Tensor& b) {
  if (a.v.size() != b.v.size()) throw std::invalid_argument("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    dot += a.v[i] * b.v[i];
    na += a.v[i] * a.v[i];
    nb += b.v[i] * b.v[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> triple_prior(const std::vector<Tensor>& h_tris, const Tensor& h_sentence) {
  if (h_tris.empty()) throw std::invalid_argument("triple_prior: no triple vectors");
  std::vector<double> sims;
  sims.reserve(h_tris.size());
  for (const Tensor& h : h_tris) sims.push_back(cosine(h, h_sentence));
  return softmax(sims);
}

int mix(Graph& g, int h_mod, double prior, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("mix: lambda must lie in [0,1]");
  const int d = g.value(h_mod).cols;
  const int ones = g.input(Tensor::full(1, d, prior));
  return g.add_scaled({h_mod, ones}, {lambda, 1.0 - lambda});
}

}  // namespace kehrl
