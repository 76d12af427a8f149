#pragma once
// One sentence's knowledge-selection rollout, shared by training (sampled
// actions) and probing (greedy actions): mixes entity/triple representations,
// runs the two-level selection, and emits the injection plan for the encoder
// forward. Policy states are value snapshots (detached); the injected vectors
// stay differentiable into the encoder.

#include <limits>
#include <utility>
#include <vector>

#include "kehrl/corpus.hpp"
#include "kehrl/encoder.hpp"
#include "kehrl/graph.hpp"
#include "kehrl/kg.hpp"
#include "kehrl/mixer.hpp"
#include "kehrl/params.hpp"
#include "kehrl/policy.hpp"
#include "kehrl/rng.hpp"

namespace kehrl {

struct RolloutOptions {
  double lambda = 0.5;
  bool no_prior = false;  // drop the prior mix: representations stay internal

  // Entity selection: policy sampling, deterministic thresholding (probe),
  // everything, nothing, or a corpus-frequency band (fixed strategies).
  enum class HighMode { sample, greedy, all, none, count_range };
  // Triple selection: policy sampling, thresholding, or all candidates.
  enum class LowMode { sample, greedy, all };

  HighMode high = HighMode::sample;
  LowMode low = LowMode::sample;
  long long count_min = 0;  // count_range band, inclusive
  long long count_max = std::numeric_limits<long long>::max();
};

struct RolloutResult {
  bool rl_active = false;     // eligible mentions existed and selection ran
  std::vector<int> eligible;  // mention indices with retrievable triples
  std::vector<int> selected;  // deduped mention indices receiving injection
  std::vector<std::pair<int, int>> injections;  // (position, node) plan

  Episode episode;               // actions; log-prob nodes only under sampling
  Tensor high_probs;             // empty unless the high policy ran
  std::vector<Tensor> low_probs;  // one per low policy evaluation

  // Mixing internals per eligible mention, for inspection dumps.
  std::vector<Tensor> alphas;                   // candidate attention
  std::vector<std::vector<Tensor>> betas;       // part attention per candidate
  std::vector<double> entity_priors;            // frequency-share softmax
  std::vector<std::vector<double>> triple_priors;  // cosine softmax
};

// Builds the rollout inside g. Consumes rng for candidate padding, state
// padding, and action sampling, in that fixed order.
RolloutResult roll_sentence(Graph& g, ParamBinder& enc_bind, ParamBinder& high_bind,
                            ParamBinder& low_bind, const Encoder& enc, const Policy& high,
                            const Policy& low, const AnnotatedSentence& s,
                            const KnowledgeStore& store, const Vocab& vocab,
                            const RolloutOptions& opt, Rng& rng);

// Deterministic thresholding at 0.5; optionally forces the argmax slot when
// every probability sits at or below the threshold.
std::vector<int> greedy_bits(const Tensor& probs, bool force_nonzero);

}  // namespace kehrl
