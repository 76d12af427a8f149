#pragma once
// Weighted knowledge combination: internal entity/triple representations with
// softmax-over-dot attention, scalar priors (entity frequency, triple-to-
// sentence cosine), and the lambda mix feeding both policy states and the
// injected vectors.
//
// Attention weights use softmax over dot products instead of a raw ratio of
// dots, which is undefined for negative or zero-sum denominators; the ranking
// is preserved (largest dot gets the largest weight).

#include <vector>

#include "kehrl/encoder.hpp"
#include "kehrl/graph.hpp"
#include "kehrl/kg.hpp"
#include "kehrl/params.hpp"
#include "kehrl/tensor.hpp"
#include "kehrl/vocab.hpp"

namespace kehrl {

// Arithmetic mean of hidden rows over [start, end); 1 x d node. Empty span throws.
int entity_context_repr(Graph& g, int hidden, int start, int end);

// Encoding of one triple's "head rel tail" pseudo sentence (truncated to
// l_tri tokens): whole-sequence mean pool plus per-part mean pools.
struct TripleRepr {
  int whole = -1;  // 1 x d graph nodes
  int head = -1;
  int rel = -1;
  int tail = -1;
};

TripleRepr triple_pseudo_repr(Graph& g, ParamBinder& bind, const Encoder& enc,
                              const KnowledgeStore& store, const Vocab& vocab, const Triple& t);

// alpha = softmax over <h_e, h_tri_p>; h_mod = h_e + sum_p alpha_p h_tri_p.
struct EntityRepr {
  int h_mod = -1;  // 1 x d
  int alpha = -1;  // 1 x P simplex weights
};

EntityRepr internal_entity_repr(Graph& g, int h_e, const std::vector<int>& h_tris);

// beta = softmax over <h_tri, h_part> for part in {head, rel, tail};
// h_mod = h_tri + sum_k beta_k h_part_k.
struct TripleMixRepr {
  int h_mod = -1;  // 1 x d
  int beta = -1;   // 1 x 3
};

TripleMixRepr internal_triple_repr(Graph& g, int h_tri, int h_head, int h_rel, int h_tail);

// Softmax over frequency shares f_e = C_e / total corpus count for the
// sentence's entity group. Entity index -1 (unlinked) contributes f = 0.
std::vector<double> entity_prior_group(const KnowledgeStore& store, const std::vector<int>& group);

// The group element belonging to `entity`; throws if absent from the group.
double entity_prior(const KnowledgeStore& store, int entity, const std::vector<int>& group);

// Softmax over cosine(h_tri_p, h_sentence); a zero-norm vector scores cosine 0.
std::vector<double> triple_prior(const std::vector<Tensor>& h_tris, const Tensor& h_sentence);

// H = lambda * H_mod + (1 - lambda) * prior * 1_d. Lambda outside [0,1] throws.
int mix(Graph& g, int h_mod, double prior, double lambda);

// Stable softmax over an arbitrary score vector (also used by the priors).
std::vector<double> softmax(const std::vector<double>& scores);

double cosine(const Tensor& a, const Tensor& b);

}  // namespace kehrl
