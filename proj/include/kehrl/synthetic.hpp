#pragma once
// Synthetic corpus / knowledge-graph / probe generator. The world plants
// entity classes with known difficulty profiles:
//   high_frequency — one clean signature triple, many sentences; the tail is
//     learnable from text statistics alone.
//   long_tail — one clean signature triple, 1-2 sentences; the tail is
//     practically only recoverable from the injected triple.
//   polysemic — two signature triples with disjoint relations ("senses");
//     the sentence carries the relation word of the active sense, so
//     injecting the wrong sense plants a contradicting tail.
//   filler — entities present in every sentence with random noise triples;
//     their knowledge has no predictive value.
// Every sentence is a fixed 7-token template:
//   [opener, filler_a, head, relation, tail, closer, filler_b]
// with annotated mentions for filler_a, head, filler_b. The tail token at
// position 4 is the probe target and is deliberately NOT a mention, so probes
// cannot be answered by injecting knowledge at the masked position itself.
// Probe records reuse the template with held-out filler pairs.

#include <cstdint>
#include <string>

namespace kehrl {

struct SyntheticConfig {
  int high_freq_entities = 12;
  int long_tail_entities = 16;
  int polysemic_entities = 8;
  int filler_entities = 12;
  int tail_entities = 30;
  int high_freq_sentences = 18;         // sentences per high-frequency entity
  int long_tail_sentences = 2;          // sentences per long-tail entity
  int polysemic_sentences_per_sense = 6;
  int noise_sentences = 40;             // filler-headed noise sentences
  int noise_triples_per_filler = 7;
  int polysemic_false_triples = 2;      // unsupported same-relation triples per sense
  int filler_content_triples = 2;       // filler facts placed on content relations
  int probe_arrangements = 2;           // probe records per (entity, sense)
  int filler_probe_records = 8;
  std::uint64_t seed = 0;
  bool seed_set = false;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  static SyntheticConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

struct WorldFiles {
  std::string corpus_jsonl;
  std::string kg_tsv;
  std::string surfaces_tsv;
  std::string probes_jsonl;
  std::string manifest_json;
};

// Writes the five world files into out_dir (created if missing). Output is a
// pure function of the config (including its seed): same config, same bytes.
WorldFiles generate_synthetic_world(const SyntheticConfig& config, const std::string& out_dir);

}  // namespace kehrl
