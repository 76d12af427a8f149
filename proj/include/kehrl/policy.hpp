#pragma once
// Two-level selection policies: a high-level Bernoulli policy over a
// sentence's entity mentions and a low-level Bernoulli policy over one
// entity's candidate triples, triggered only where the high bit is 1.
//
// Policy states are plain tensors (values detached from the rollout graph);
// the policies learn from REINFORCE surrogates only, never through the
// encoder's MLM gradient.

#include <string>
#include <utility>
#include <vector>

#include "kehrl/corpus.hpp"
#include "kehrl/encoder.hpp"
#include "kehrl/graph.hpp"
#include "kehrl/params.hpp"
#include "kehrl/rng.hpp"
#include "kehrl/tensor.hpp"

namespace kehrl {

// One-hidden-layer scorer: R^(slots*d) -> tanh(2d) -> sigmoid probabilities,
// clamped to [1e-6, 1-1e-6]. The output layer starts at zero so every initial
// probability is exactly 0.5.
class Policy {
 public:
  Policy(int slots, int d);

  void init_params(Rng& rng);

  int forward(Graph& g, ParamBinder& bind, int state_node) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  int slots() const { return slots_; }
  int state_dim() const { return slots_ * d_; }

  static constexpr double kProbFloor = 1e-6;

 private:
  int slots_;
  int d_;
  ParamSet params_;
};

// Row-concatenation of equal-width 1 x d tensors into 1 x (n*d).
Tensor concat_state(const std::vector<Tensor>& parts);

// High-level state: one slot per mention in mention order; when there are
// fewer mentions than slots the remainder is drawn (seeded) from the existing
// ones; when there are more, the first n_slots mentions are kept.
struct HighStateBuild {
  Tensor state;                   // 1 x (n_slots * d)
  std::vector<int> slot_mention;  // mention index behind each slot
};

HighStateBuild build_high_state(const std::vector<Tensor>& mixed_entities, int n_slots, Rng& rng);

// One sampled Bernoulli action vector.
struct ActionSample {
  std::vector<int> bits;
  bool forced = false;  // all-zero draw replaced by the argmax selection
};

// Independent Bernoulli draw per element. With force_nonzero (high level), an
// all-zero draw is resampled once and then forced to the argmax-probability
// slot, so at least one selection always exists.
ActionSample sample_action(const Tensor& probs, Rng& rng, bool force_nonzero);

// Numeric sum of per-bit Bernoulli log-probabilities.
double bernoulli_logprob_value(const Tensor& probs, const std::vector<int>& bits);

// Entropy of the independent-Bernoulli action distribution.
double bernoulli_entropy(const Tensor& probs);

// Mentions that receive a low-level episode: bit-1 slots in slot order,
// duplicates (padded slots repeating a mention) collapsed to one episode.
std::vector<int> trigger_low_level(const std::vector<int>& high_bits,
                                   const std::vector<int>& slot_mention);

// Mean of the chosen triples' mixed vectors written at every token position
// of the mention's span. No chosen triples -> no injection for the entity.
void apply_injection(Graph& g, const AnnotatedSentence& sentence, int mention,
                     const std::vector<int>& chosen_triple_nodes,
                     std::vector<std::pair<int, int>>& injections);

// MLM outcomes turned into returns: an entity span scores 1 only when every
// one of its masked tokens is predicted correctly; each rate-masked token
// scores independently.
struct Rewards {
  std::vector<int> r_high;  // per masked entity span, conjunction over tokens
  std::vector<int> r_low;   // per rate-masked token
  int R_high = 0;
  int R_low = 0;
};

Rewards compute_rewards(const MaskPlan& plan, const std::vector<int>& predictions);

// One sentence's rollout record.
struct LowEpisode {
  int mention = -1;
  std::vector<int> bits;
  double logprob = 0.0;
  int logprob_node = -1;
};

struct Episode {
  int sentence = -1;
  std::vector<int> high_bits;
  std::vector<int> slot_mention;
  bool high_forced = false;
  double high_logprob = 0.0;
  int high_logprob_node = -1;
  std::vector<LowEpisode> low;
  int R_high = 0;
  int R_low = 0;
};

}  // namespace kehrl
