#pragma once
// Joint training loop: masked-language loss plus score-function surrogates
// for the two selection policies, combined into one weighted objective per
// sentence and applied as a single batched optimizer step. Exponential
// moving-average baselines center the reward signal.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "kehrl/checkpoint.hpp"
#include "kehrl/encoder.hpp"
#include "kehrl/policy.hpp"
#include "kehrl/probe.hpp"
#include "kehrl/rollout.hpp"

namespace kehrl {

struct Omega {
  double w1 = 0.3;   // masked-language loss
  double w2 = 0.35;  // high-level surrogate
  double w3 = 0.35;  // low-level surrogate
};

// Weighted combination w1*l - w2*jh - w3*jl with extended-precision
// accumulation, matching the graph's weighted-add forward bit for bit.
double total_loss(double l_mlm, double j_high, double j_low, const Omega& om);

enum class Optimizer { sgd, adamw };

struct TrainConfig {
  Omega omega;
  RolloutOptions rollout;  // selection condition (policy, all, none, band)
  double lr_encoder = 0.05;
  double lr_policy = 0.05;
  Optimizer optimizer = Optimizer::adamw;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  int epochs = 1;
  int batch_size = 8;
  std::uint64_t seed = 1;
  double baseline_decay = 0.9;
  int probe_every = 1;  // epochs between probe passes; always probes at start

  void validate() const;  // throws std::invalid_argument naming the field
};

struct BaselineState {
  double high = 0.0;
  double low = 0.0;
};

struct TrainRow {
  int epoch = 0;
  int step = 0;
  double mlm_loss = 0.0;
  double mean_r_high = 0.0;
  double mean_r_low = 0.0;
  double base_high = 0.0;
  double base_low = 0.0;
  double entropy_high = 0.0;
  double entropy_low = 0.0;
  double probe_p1 = 0.0;
};

struct TrainReport {
  std::vector<TrainRow> rows;
  std::vector<double> probe_history;  // initial probe first, then per pass
  void write_csv(std::ostream& out) const;
};

class Trainer {
 public:
  Trainer(Encoder& enc, Policy& high, Policy& low, const KnowledgeStore& store,
          const Vocab& vocab, const TrainConfig& cfg);

  // One optimizer step over the batch. Sentences with no masked-entity or
  // rate-masked positions simply contribute no matching surrogate term.
  TrainRow step(const std::vector<const AnnotatedSentence*>& batch, int epoch, int step_idx);

  // Full loop: deterministic per-epoch shuffle, probing at initialization and
  // every probe_every epochs. probes may be empty (probing skipped).
  TrainReport run(const std::vector<AnnotatedSentence>& corpus,
                  const std::vector<ProbeRecord>& probes);

  void save(const std::string& prefix, const std::string& config_json_text) const;

  const BaselineState& baselines() const { return base_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  double probe_now(const std::vector<ProbeRecord>& probes) const;
  void apply_updates();

  Encoder& enc_;
  Policy& high_;
  Policy& low_;
  const KnowledgeStore& store_;
  const Vocab& vocab_;
  TrainConfig cfg_;
  BaselineState base_;

  GradBuffer g_enc_, g_high_, g_low_;
  // Adam moments, allocated lazily on the first adamw update.
  std::vector<Tensor> m_, v_;
  long long adam_t_ = 0;
};

}  // namespace kehrl
