#pragma once
// Tiny post-layer-norm transformer MLM encoder over the autodiff graph.
// Knowledge injection replaces token embeddings (not hidden states) at the
// given positions before positional encodings are added, so a zero-layer
// stack returns exactly injected_vector + positional at injected rows.

#include <string>
#include <utility>
#include <vector>

#include "kehrl/corpus.hpp"
#include "kehrl/graph.hpp"
#include "kehrl/params.hpp"
#include "kehrl/rng.hpp"

namespace kehrl {

struct EncoderConfig {
  int d = 64;
  int layers = 2;
  int heads = 4;
  int max_len = 64;
  int vocab_size = 0;
  int l_tri = 15;               // max pseudo-sentence length
  int entities_per_sentence = 5;  // N, high-level state slots
  int triples_per_entity = 7;     // M, low-level state slots
  int k_hops = 3;
  bool tie_mlm_head = false;
  double token_mask_rate = 0.15;

  void validate() const;
};

struct MaskPlan {
  // Spans of the selected entities (every token of each span is masked),
  // aligned with the caller's selection order.
  std::vector<std::pair<int, int>> entity_spans;
  std::vector<int> entity_positions;  // flattened span positions
  std::vector<int> entity_golds;
  std::vector<int> token_positions;  // rate-sampled positions outside spans
  std::vector<int> token_golds;

  std::vector<int> all_positions() const;
  std::vector<int> all_golds() const;
  bool empty() const { return entity_positions.empty() && token_positions.empty(); }
};

class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg);

  void init_params(Rng& rng);  // N(0, 0.02^2) weights, identity layer norms

  const EncoderConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Graph forward; injections are (position, graph node of a 1×d vector).
  int forward(Graph& g, ParamBinder& bind, const std::vector<int>& tokens,
              const std::vector<std::pair<int, int>>& injections = {}) const;

  int mlm_logits(Graph& g, ParamBinder& bind, int hidden) const;

  // Convenience no-gradient pass (fresh local graph).
  Tensor encode(const std::vector<int>& tokens) const;

 private:
  EncoderConfig cfg_;
  ParamSet params_;
};

// Mean cross-entropy over all masked positions. Throws on an empty plan.
int mlm_loss(Graph& g, int logits, const MaskPlan& plan);

// Masks every span of the selected mentions plus token_mask_rate of the
// remaining positions (rounded to nearest; at least one mask overall so the
// loss is never degenerate).
// Two-phase variant used by training: token-level masks are drawn before the
// selection pass (outside every mention span), so the policies see the same
// masked input the encoder will, and entity spans are appended afterwards.
MaskPlan make_token_mask_plan(const AnnotatedSentence& sentence, double token_mask_rate,
                              Rng& rng);
void add_entity_spans(MaskPlan& plan, const AnnotatedSentence& sentence,
                      const std::vector<int>& selected_mentions);

MaskPlan make_mask_plan(const AnnotatedSentence& sentence,
                        const std::vector<int>& selected_mentions, double token_mask_rate,
                        Rng& rng);

// Token ids with every masked position replaced by the mask token.
std::vector<int> apply_mask(const std::vector<int>& tokens, const MaskPlan& plan);

// Argmax token id at each requested row of a logits tensor.
std::vector<int> argmax_rows(const Tensor& logits, const std::vector<int>& positions);

}  // namespace kehrl
