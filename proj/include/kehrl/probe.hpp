#pragma once
// Cloze probing: mask one position, link entities in the masked sentence,
// run the greedy selection rollout, and score argmax-vs-gold. Macro P@1
// averages per-group precision over the nonempty groups.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kehrl/corpus.hpp"
#include "kehrl/encoder.hpp"
#include "kehrl/policy.hpp"
#include "kehrl/rollout.hpp"

namespace kehrl {

struct ProbeRecord {
  std::vector<std::string> tokens;
  int mask_pos = -1;
  std::string gold;
  std::string entity_class;  // long_tail | high_frequency | polysemic | filler
  std::string group;         // macro-averaging bucket (relation template)
};

// JSON lines {"tokens": [...], "mask_pos": int, "gold": str,
// "entity_class": str, "group": str}; extra fields ignored.
std::vector<ProbeRecord> load_probes(const std::string& path);

struct ProbeOptions {
  RolloutOptions rollout;     // sampling modes are demoted to greedy
  std::uint64_t seed = 0x9a0be5eedULL;  // candidate-padding determinism
};

struct ProbeResult {
  double macro_p1 = 0.0;  // mean of per-group precision, empty groups excluded
  double micro_p1 = 0.0;
  std::map<std::string, double> per_class;
  std::map<std::string, double> per_group;
  int evaluated = 0;
  int oov_gold = 0;  // records whose gold token is outside the vocabulary

  double class_p1(const std::string& cls) const {
    auto it = per_class.find(cls);
    return it == per_class.end() ? 0.0 : it->second;
  }
};

ProbeResult probe_eval(const Encoder& enc, const Policy& high, const Policy& low,
                       const KnowledgeStore& store, const Vocab& vocab,
                       const std::vector<ProbeRecord>& records, const ProbeOptions& opt);

// Word-sequence gazetteer over every entity surface in the store.
std::vector<GazetteerEntry> build_gazetteer(const KnowledgeStore& store);

}  // namespace kehrl
