#include "kehrl/probe.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "kehrl/mixer.hpp"

namespace kehrl {

namespace {
using nlohmann::json;

[[noreturn]] void fail_at(const std::string& path, int line, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}
}  // namespace

std::vector<ProbeRecord> load_probes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<ProbeRecord> out;
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) fail_at(path, ln, "broken JSON");
    ProbeRecord r;
    if (!j.contains("tokens") || !j["tokens"].is_array()) fail_at(path, ln, "missing tokens");
    for (const auto& t : j["tokens"]) r.tokens.push_back(t.get<std::string>());
    if (!j.contains("mask_pos") || !j["mask_pos"].is_number_integer())
      fail_at(path, ln, "missing mask_pos");
    r.mask_pos = j["mask_pos"].get<int>();
    if (r.mask_pos < 0 || r.mask_pos >= static_cast<int>(r.tokens.size()))
      fail_at(path, ln, "mask_pos out of bounds");
    if (!j.contains("gold")) fail_at(path, ln, "missing gold");
    r.gold = j["gold"].get<std::string>();
    r.entity_class = j.value("entity_class", "");
    r.group = j.value("group", "");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<GazetteerEntry> build_gazetteer(const KnowledgeStore& store) {
  std::vector<GazetteerEntry> gaz;
  for (int e = 0; e < store.entity_count(); ++e) {
    GazetteerEntry entry;
    entry.words = split_ws(store.entity_surface(e));
    entry.entity = e;
    if (!entry.words.empty()) gaz.push_back(std::move(entry));
  }
  return gaz;
}

ProbeResult probe_eval(const Encoder& enc, const Policy& high, const Policy& low,
                       const KnowledgeStore& store, const Vocab& vocab,
                       const std::vector<ProbeRecord>& records, const ProbeOptions& opt) {
  if (records.empty()) throw std::invalid_argument("probe_eval: empty probe set");
  RolloutOptions ro = opt.rollout;
  if (ro.high == RolloutOptions::HighMode::sample) ro.high = RolloutOptions::HighMode::greedy;
  if (ro.low == RolloutOptions::LowMode::sample) ro.low = RolloutOptions::LowMode::greedy;
  const std::vector<GazetteerEntry> gaz = build_gazetteer(store);

  struct Tally {
    int hits = 0;
    int total = 0;
  };
  std::map<std::string, Tally> by_group, by_class;
  ProbeResult res;
  int hits = 0;

  for (std::size_t ri = 0; ri < records.size(); ++ri) {
    const ProbeRecord& r = records[ri];
    const int gold_id = vocab.lookup(r.gold);
    if (gold_id == Vocab::kUnk && r.gold != vocab.token(Vocab::kUnk)) {
      ++res.oov_gold;
      continue;
    }
    // Mask before linking so the selection machinery can never see the gold.
    std::vector<std::string> words = r.tokens;
    words[static_cast<std::size_t>(r.mask_pos)] = vocab.token(Vocab::kMask);
    AnnotatedSentence s;
    s.id = static_cast<int>(ri);
    for (const std::string& w : words) s.tokens.push_back(vocab.lookup(w));
    s.mentions = link_entities(words, gaz);

    Rng rng(derive_seed(opt.seed, {ri}));
    Graph g;
    ParamBinder enc_bind(g, enc.params());
    ParamBinder high_bind(g, high.params(), enc.params().size());
    ParamBinder low_bind(g, low.params(), enc.params().size() + high.params().size());
    const RolloutResult roll =
        roll_sentence(g, enc_bind, high_bind, low_bind, enc, high, low, s, store, vocab, ro, rng);

    const int hidden = enc.forward(g, enc_bind, s.tokens, roll.injections);
    const Tensor logits = g.value(enc.mlm_logits(g, enc_bind, hidden));
    const int pred = argmax_rows(logits, {r.mask_pos})[0];
    const int hit = pred == gold_id ? 1 : 0;

    hits += hit;
    ++res.evaluated;
    by_group[r.group].hits += hit;
    by_group[r.group].total += 1;
    by_class[r.entity_class].hits += hit;
    by_class[r.entity_class].total += 1;
  }

  if (res.evaluated > 0) res.micro_p1 = static_cast<double>(hits) / res.evaluated;
  double macro = 0.0;
  int groups = 0;
  for (const auto& [name, t] : by_group) {
    const double p1 = static_cast<double>(t.hits) / t.total;
    res.per_group[name] = p1;
    macro += p1;
    ++groups;
  }
  res.macro_p1 = groups > 0 ? macro / groups : 0.0;
  for (const auto& [name, t] : by_class)
    res.per_class[name] = static_cast<double>(t.hits) / t.total;
  return res;
}

}  // namespace kehrl
