#pragma once
// Condition matrix for the learning, ablation, and strategy comparisons.
// Every condition trains a freshly initialized model from one shared init
// seed on one corpus with one step budget, so probe differences are caused
// by the selection condition alone.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "kehrl/trainer.hpp"

namespace kehrl {

enum class Condition {
  kehrl,           // both policies sampled and trained
  no_injection,    // selection disabled, plain masked-language training
  inject_all,      // every eligible mention, every candidate triple
  no_low_rl,       // high policy trained, low level injects everything
  no_high_rl,      // every mention selected, low policy trained
  no_prior,        // policies on, prior mixing off
  long_tail_only,  // fixed strategy: rare-entity count band, all triples
  high_freq_only,  // fixed strategy: frequent-entity count band, all triples
};

const char* condition_name(Condition c);
Condition condition_from_name(const std::string& name);  // throws with the valid list
std::vector<Condition> all_conditions();

struct ExperimentConfig {
  TrainConfig train;
  EncoderConfig encoder;          // vocab_size is filled from the corpus
  std::uint64_t init_seed = 0xA11;  // shared across conditions

  // Corpus-frequency bands for the fixed strategies.
  long long long_tail_count_max = 4;
  long long high_freq_count_min = 17;
  long long high_freq_count_max = 40;
};

// The base rollout (mixing weight etc.) with the condition's selection modes.
RolloutOptions condition_rollout(Condition c, const ExperimentConfig& ec);

struct ConditionResult {
  std::string condition;
  ProbeResult initial;  // greedy probe before any update
  ProbeResult trained;  // same probe after the full budget
  TrainReport report;
};

ConditionResult run_condition(Condition c, const ExperimentConfig& ec, const CorpusData& data,
                              const std::vector<ProbeRecord>& probes);

struct SuiteResult {
  std::vector<ConditionResult> conditions;

  const ConditionResult& find(Condition c) const;  // throws if the suite lacks it
  // Long format: condition,phase,metric,value with micro/macro, per-class and
  // per-group precision, and the evaluated/out-of-vocabulary counts.
  void write_csv(std::ostream& out) const;
};

SuiteResult run_suite(const std::vector<Condition>& cs, const ExperimentConfig& ec,
                      const CorpusData& data, const std::vector<ProbeRecord>& probes);

}  // namespace kehrl
