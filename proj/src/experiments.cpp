#include "kehrl/experiments.hpp"

#include <iomanip>
#include <stdexcept>

namespace kehrl {

const char* condition_name(Condition c) {
  switch (c) {
    case Condition::kehrl: return "kehrl";
    case Condition::no_injection: return "no_injection";
    case Condition::inject_all: return "inject_all";
    case Condition::no_low_rl: return "no_low_rl";
    case Condition::no_high_rl: return "no_high_rl";
    case Condition::no_prior: return "no_prior";
    case Condition::long_tail_only: return "long_tail_only";
    case Condition::high_freq_only: return "high_freq_only";
  }
  throw std::logic_error("condition_name: unhandled condition");
}

std::vector<Condition> all_conditions() {
  return {Condition::kehrl,      Condition::no_injection,   Condition::inject_all,
          Condition::no_low_rl,  Condition::no_high_rl,     Condition::no_prior,
          Condition::long_tail_only, Condition::high_freq_only};
}

Condition condition_from_name(const std::string& name) {
  for (Condition c : all_conditions())
    if (name == condition_name(c)) return c;
  std::string valid;
  for (Condition c : all_conditions()) valid += std::string(" ") + condition_name(c);
  throw std::invalid_argument("unknown condition '" + name + "'; one of:" + valid);
}

RolloutOptions condition_rollout(Condition c, const ExperimentConfig& ec) {
  RolloutOptions ro = ec.train.rollout;
  ro.no_prior = false;
  ro.high = RolloutOptions::HighMode::sample;
  ro.low = RolloutOptions::LowMode::sample;
  switch (c) {
    case Condition::kehrl:
      break;
    case Condition::no_injection:
      ro.high = RolloutOptions::HighMode::none;
      break;
    case Condition::inject_all:
      ro.high = RolloutOptions::HighMode::all;
      ro.low = RolloutOptions::LowMode::all;
      break;
    case Condition::no_low_rl:
      ro.low = RolloutOptions::LowMode::all;
      break;
    case Condition::no_high_rl:
      ro.high = RolloutOptions::HighMode::all;
      break;
    case Condition::no_prior:
      ro.no_prior = true;
      break;
    case Condition::long_tail_only:
      ro.high = RolloutOptions::HighMode::count_range;
      ro.count_min = 0;
      ro.count_max = ec.long_tail_count_max;
      ro.low = RolloutOptions::LowMode::all;
      break;
    case Condition::high_freq_only:
      ro.high = RolloutOptions::HighMode::count_range;
      ro.count_min = ec.high_freq_count_min;
      ro.count_max = ec.high_freq_count_max;
      ro.low = RolloutOptions::LowMode::all;
      break;
  }
  return ro;
}

ConditionResult run_condition(Condition c, const ExperimentConfig& ec, const CorpusData& data,
                              const std::vector<ProbeRecord>& probes) {
  EncoderConfig cfg = ec.encoder;
  cfg.vocab_size = data.vocab.size();
  cfg.validate();
  Encoder enc(cfg);
  Policy high(cfg.entities_per_sentence, cfg.d);
  Policy low(cfg.triples_per_entity, cfg.d);
  Rng init_rng(ec.init_seed);
  enc.init_params(init_rng);
  high.init_params(init_rng);
  low.init_params(init_rng);

  TrainConfig tc = ec.train;
  tc.rollout = condition_rollout(c, ec);
  tc.validate();

  ProbeOptions po;
  po.rollout = tc.rollout;
  po.seed = derive_seed(tc.seed, {0x9B0});

  ConditionResult out;
  out.condition = condition_name(c);
  out.initial = probe_eval(enc, high, low, data.store, data.vocab, probes, po);
  Trainer tr(enc, high, low, data.store, data.vocab, tc);
  out.report = tr.run(data.sentences, probes);
  out.trained = probe_eval(enc, high, low, data.store, data.vocab, probes, po);
  return out;
}

SuiteResult run_suite(const std::vector<Condition>& cs, const ExperimentConfig& ec,
                      const CorpusData& data, const std::vector<ProbeRecord>& probes) {
  SuiteResult out;
  for (Condition c : cs) out.conditions.push_back(run_condition(c, ec, data, probes));
  return out;
}

const ConditionResult& SuiteResult::find(Condition c) const {
  const std::string want = condition_name(c);
  for (const ConditionResult& r : conditions)
    if (r.condition == want) return r;
  throw std::invalid_argument("suite has no condition " + want);
}

void SuiteResult::write_csv(std::ostream& out) const {
  out << "condition,phase,metric,value\n";
  out << std::setprecision(17);
  const auto dump = [&](const std::string& cond, const std::string& phase,
                        const ProbeResult& pr) {
    out << cond << ',' << phase << ",micro_p1," << pr.micro_p1 << '\n';
    out << cond << ',' << phase << ",macro_p1," << pr.macro_p1 << '\n';
    out << cond << ',' << phase << ",evaluated," << pr.evaluated << '\n';
    out << cond << ',' << phase << ",oov_gold," << pr.oov_gold << '\n';
    for (const auto& [cls, p1] : pr.per_class)
      out << cond << ',' << phase << ",class:" << cls << ',' << p1 << '\n';
    for (const auto& [grp, p1] : pr.per_group)
      out << cond << ',' << phase << ",group:" << grp << ',' << p1 << '\n';
  };
  for (const ConditionResult& r : conditions) {
    dump(r.condition, "initial", r.initial);
    dump(r.condition, "trained", r.trained);
  }
}

}  // namespace kehrl
