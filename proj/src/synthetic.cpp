#include "kehrl/synthetic.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "kehrl/digest.hpp"
#include "kehrl/rng.hpp"

namespace kehrl {

namespace {

using nlohmann::json;

const std::vector<std::string> kContentRels = {"ra", "rb", "rc", "rd"};
const std::string kNoiseRel = "rn";

std::string two(int i) { return i < 10 ? "0" + std::to_string(i) : std::to_string(i); }

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw std::invalid_argument("synthetic config: " + field + ": " + why);
}

struct SentenceSpec {
  std::vector<std::string> tokens;
  // (entity id, start, end) for filler_a, head, filler_b
  std::vector<std::tuple<std::string, int, int>> mentions;
};

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << body;
}

}  // namespace

void SyntheticConfig::validate() const {
  require(seed_set, "seed", "required, no default");
  require(high_freq_entities >= 1, "high_freq_entities", "must be >= 1");
  require(long_tail_entities >= 1, "long_tail_entities", "must be >= 1");
  require(polysemic_entities >= 1, "polysemic_entities", "must be >= 1");
  require(filler_entities >= 4, "filler_entities", "must be >= 4 (held-out probe pairs)");
  require(tail_entities >= 4, "tail_entities", "must be >= 4");
  require(high_freq_sentences >= 1, "high_freq_sentences", "must be >= 1");
  require(long_tail_sentences >= 1, "long_tail_sentences", "must be >= 1");
  require(polysemic_sentences_per_sense >= 1, "polysemic_sentences_per_sense", "must be >= 1");
  require(noise_sentences >= 1, "noise_sentences", "must be >= 1");
  require(noise_triples_per_filler >= 1, "noise_triples_per_filler", "must be >= 1");
  require(noise_triples_per_filler <= tail_entities, "noise_triples_per_filler",
          "cannot exceed tail_entities (triples are distinct)");
  require(polysemic_false_triples >= 0, "polysemic_false_triples", "must be >= 0");
  require(filler_content_triples >= 0, "filler_content_triples", "must be >= 0");
  require(filler_content_triples <= noise_triples_per_filler, "filler_content_triples",
          "cannot exceed noise_triples_per_filler");
  require(polysemic_false_triples <= tail_entities - 2, "polysemic_false_triples",
          "needs tails distinct from both sense tails");
  require(probe_arrangements >= 1, "probe_arrangements", "must be >= 1");
  require(filler_probe_records >= 1, "filler_probe_records", "must be >= 1");
}

SyntheticConfig SyntheticConfig::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw std::invalid_argument("synthetic config: not a JSON object");
  SyntheticConfig c;
  auto get_int = [&](const char* key, int& slot) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer())
      throw std::invalid_argument(std::string("synthetic config: ") + key + ": must be an integer");
    slot = j[key].get<int>();
  };
  for (const auto& [key, _] : j.items()) {
    static const std::vector<std::string> known = {
        "high_freq_entities", "long_tail_entities", "polysemic_entities", "filler_entities",
        "tail_entities", "high_freq_sentences", "long_tail_sentences",
        "polysemic_sentences_per_sense", "noise_sentences", "noise_triples_per_filler",
        "polysemic_false_triples", "filler_content_triples", "probe_arrangements",
        "filler_probe_records", "seed"};
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("synthetic config: unknown field '" + key + "'");
  }
  get_int("high_freq_entities", c.high_freq_entities);
  get_int("long_tail_entities", c.long_tail_entities);
  get_int("polysemic_entities", c.polysemic_entities);
  get_int("filler_entities", c.filler_entities);
  get_int("tail_entities", c.tail_entities);
  get_int("high_freq_sentences", c.high_freq_sentences);
  get_int("long_tail_sentences", c.long_tail_sentences);
  get_int("polysemic_sentences_per_sense", c.polysemic_sentences_per_sense);
  get_int("noise_sentences", c.noise_sentences);
  get_int("noise_triples_per_filler", c.noise_triples_per_filler);
  get_int("polysemic_false_triples", c.polysemic_false_triples);
  get_int("filler_content_triples", c.filler_content_triples);
  get_int("probe_arrangements", c.probe_arrangements);
  get_int("filler_probe_records", c.filler_probe_records);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
      throw std::invalid_argument("synthetic config: seed: must be an integer");
    c.seed = j["seed"].get<std::uint64_t>();
    c.seed_set = true;
  }
  return c;
}

std::string SyntheticConfig::to_json_text() const {
  json j;
  j["high_freq_entities"] = high_freq_entities;
  j["long_tail_entities"] = long_tail_entities;
  j["polysemic_entities"] = polysemic_entities;
  j["filler_entities"] = filler_entities;
  j["tail_entities"] = tail_entities;
  j["high_freq_sentences"] = high_freq_sentences;
  j["long_tail_sentences"] = long_tail_sentences;
  j["polysemic_sentences_per_sense"] = polysemic_sentences_per_sense;
  j["noise_sentences"] = noise_sentences;
  j["noise_triples_per_filler"] = noise_triples_per_filler;
  j["polysemic_false_triples"] = polysemic_false_triples;
  j["filler_content_triples"] = filler_content_triples;
  j["probe_arrangements"] = probe_arrangements;
  j["filler_probe_records"] = filler_probe_records;
  j["seed"] = seed;
  return j.dump(2);
}

WorldFiles generate_synthetic_world(const SyntheticConfig& config, const std::string& out_dir) {
  config.validate();
  Rng rng(derive_seed(config.seed, {0x77u /* world stream */}));

  // Surfaces and ids -------------------------------------------------------
  auto ent_id = [](const std::string& surface) { return "ent_" + surface; };
  auto rel_id = [](const std::string& surface) { return "rel_" + surface; };
  std::vector<std::string> hf, lt, py, fl, tl;
  for (int i = 0; i < config.high_freq_entities; ++i) hf.push_back("hf" + two(i));
  for (int i = 0; i < config.long_tail_entities; ++i) lt.push_back("lt" + two(i));
  for (int i = 0; i < config.polysemic_entities; ++i) py.push_back("py" + two(i));
  for (int i = 0; i < config.filler_entities; ++i) fl.push_back("fl" + two(i));
  for (int i = 0; i < config.tail_entities; ++i) tl.push_back("tl" + two(i));

  std::vector<std::string> all_rels = kContentRels;
  all_rels.push_back(kNoiseRel);
  auto opener = [&](const std::string& rel) { return "op" + rel.substr(1); };
  auto closer = [&](const std::string& rel) { return "cl" + rel.substr(1); };

  // Signature triples ------------------------------------------------------
  struct Sig {
    std::string rel;
    int tail;
  };
  std::vector<Sig> hf_sig, lt_sig;
  std::vector<std::pair<Sig, Sig>> py_sig;
  for (int i = 0; i < config.high_freq_entities; ++i)
    hf_sig.push_back({kContentRels[static_cast<std::size_t>(i % 4)],
                      static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(config.tail_entities)))});
  for (int i = 0; i < config.long_tail_entities; ++i)
    lt_sig.push_back({kContentRels[static_cast<std::size_t>(i % 4)],
                      static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(config.tail_entities)))});
  for (int i = 0; i < config.polysemic_entities; ++i) {
    Sig a{kContentRels[rng.uniform_int(2)],
          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(config.tail_entities)))};
    Sig b{kContentRels[2 + rng.uniform_int(2)], a.tail};
    while (b.tail == a.tail)
      b.tail = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(config.tail_entities)));
    py_sig.emplace_back(a, b);
  }
  // Corrupt facts: per polysemic sense, extra triples under the sense's own
  // relation whose tails no sentence ever supports. Retrieval cannot tell them
  // from the real sense triples; only the training reward can.
  std::vector<std::pair<std::vector<int>, std::vector<int>>> py_false;
  for (int i = 0; i < config.polysemic_entities; ++i) {
    const auto& [a, b] = py_sig[static_cast<std::size_t>(i)];
    auto draw_wrong = [&] {
      std::vector<int> tails;
      while (static_cast<int>(tails.size()) < config.polysemic_false_triples) {
        const int t =
            static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(config.tail_entities)));
        if (t != a.tail && t != b.tail &&
            std::find(tails.begin(), tails.end(), t) == tails.end())
          tails.push_back(t);
      }
      return tails;
    };
    py_false.emplace_back(draw_wrong(), draw_wrong());
  }

  // A few filler facts use the content relations: for an indiscriminate
  // injector they are same-relation distractors sitting next to every
  // mention; the rest stay on the noise relation.
  std::vector<std::vector<int>> fl_noise_tails;  // distinct tails per filler
  std::vector<std::vector<std::string>> fl_noise_rels;
  for (int i = 0; i < config.filler_entities; ++i) {
    std::vector<int> tails;
    std::vector<std::string> rels;
    while (static_cast<int>(tails.size()) < config.noise_triples_per_filler) {
      const int t = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(config.tail_entities)));
      if (std::find(tails.begin(), tails.end(), t) == tails.end()) {
        rels.push_back(static_cast<int>(tails.size()) < config.filler_content_triples
                           ? kContentRels[(static_cast<std::size_t>(i) + tails.size()) % 4]
                           : kNoiseRel);
        tails.push_back(t);
      }
    }
    fl_noise_tails.push_back(std::move(tails));
    fl_noise_rels.push_back(std::move(rels));
  }

  // Filler pair pools: one fifth of ordered pairs is held out for probes.
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < config.filler_entities; ++a)
    for (int b = 0; b < config.filler_entities; ++b)
      if (a != b) pairs.emplace_back(a, b);
  rng.shuffle(pairs);
  const std::size_t held_n = std::max<std::size_t>(1, pairs.size() / 5);
  std::vector<std::pair<int, int>> held(pairs.begin(), pairs.begin() + static_cast<long>(held_n));
  std::vector<std::pair<int, int>> train(pairs.begin() + static_cast<long>(held_n), pairs.end());

  auto draw_train_pair = [&](int avoid) {
    while (true) {
      const auto& p = train[rng.uniform_int(train.size())];
      if (p.first != avoid && p.second != avoid) return p;
    }
  };
  auto draw_held_pair = [&](int avoid) {
    while (true) {
      const auto& p = held[rng.uniform_int(held.size())];
      if (p.first != avoid && p.second != avoid) return p;
    }
  };

  auto make_tokens = [&](const std::string& rel, int fa, int fb, const std::string& head,
                         const std::string& tail) {
    return std::vector<std::string>{opener(rel), fl[static_cast<std::size_t>(fa)], head,
                                    rel,         tail,                             closer(rel),
                                    fl[static_cast<std::size_t>(fb)]};
  };

  // Sentences ---------------------------------------------------------------
  std::vector<SentenceSpec> sentences;
  auto add_sentence = [&](const std::string& rel, const std::string& head_surface, int tail_idx,
                          int avoid_filler) {
    const auto [fa, fb] = draw_train_pair(avoid_filler);
    SentenceSpec s;
    s.tokens = make_tokens(rel, fa, fb, head_surface, tl[static_cast<std::size_t>(tail_idx)]);
    s.mentions = {{ent_id(fl[static_cast<std::size_t>(fa)]), 1, 2},
                  {ent_id(head_surface), 2, 3},
                  {ent_id(fl[static_cast<std::size_t>(fb)]), 6, 7}};
    sentences.push_back(std::move(s));
  };
  for (int i = 0; i < config.high_freq_entities; ++i)
    for (int s = 0; s < config.high_freq_sentences; ++s)
      add_sentence(hf_sig[static_cast<std::size_t>(i)].rel, hf[static_cast<std::size_t>(i)],
                   hf_sig[static_cast<std::size_t>(i)].tail, -1);
  for (int i = 0; i < config.long_tail_entities; ++i)
    for (int s = 0; s < config.long_tail_sentences; ++s)
      add_sentence(lt_sig[static_cast<std::size_t>(i)].rel, lt[static_cast<std::size_t>(i)],
                   lt_sig[static_cast<std::size_t>(i)].tail, -1);
  for (int i = 0; i < config.polysemic_entities; ++i) {
    const auto& [a, b] = py_sig[static_cast<std::size_t>(i)];
    for (int s = 0; s < config.polysemic_sentences_per_sense; ++s)
      add_sentence(a.rel, py[static_cast<std::size_t>(i)], a.tail, -1);
    for (int s = 0; s < config.polysemic_sentences_per_sense; ++s)
      add_sentence(b.rel, py[static_cast<std::size_t>(i)], b.tail, -1);
  }
  for (int s = 0; s < config.noise_sentences; ++s) {
    const int f = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(config.filler_entities)));
    const int t = fl_noise_tails[static_cast<std::size_t>(f)][rng.uniform_int(
        static_cast<std::uint64_t>(config.noise_triples_per_filler))];
    add_sentence(kNoiseRel, fl[static_cast<std::size_t>(f)], t, f);
  }
  rng.shuffle(sentences);

  // Probe records -----------------------------------------------------------
  struct ProbeSpec {
    std::vector<std::string> tokens;
    std::string gold, cls, group;
    std::vector<std::string> required;  // head id, rel id, tail id
  };
  std::vector<ProbeSpec> probes;
  auto add_probe = [&](const std::string& rel, const std::string& head_surface, int tail_idx,
                       const std::string& cls, int avoid_filler,
                       const std::string& kg_rel = std::string()) {
    const auto [fa, fb] = draw_held_pair(avoid_filler);
    ProbeSpec p;
    p.tokens = make_tokens(rel, fa, fb, head_surface, tl[static_cast<std::size_t>(tail_idx)]);
    p.gold = tl[static_cast<std::size_t>(tail_idx)];
    p.cls = cls;
    p.group = rel;
    p.required = {ent_id(head_surface), rel_id(kg_rel.empty() ? rel : kg_rel),
                  ent_id(tl[static_cast<std::size_t>(tail_idx)])};
    probes.push_back(std::move(p));
  };
  for (int i = 0; i < config.high_freq_entities; ++i)
    for (int a = 0; a < config.probe_arrangements; ++a)
      add_probe(hf_sig[static_cast<std::size_t>(i)].rel, hf[static_cast<std::size_t>(i)],
                hf_sig[static_cast<std::size_t>(i)].tail, "high_frequency", -1);
  for (int i = 0; i < config.long_tail_entities; ++i)
    for (int a = 0; a < config.probe_arrangements; ++a)
      add_probe(lt_sig[static_cast<std::size_t>(i)].rel, lt[static_cast<std::size_t>(i)],
                lt_sig[static_cast<std::size_t>(i)].tail, "long_tail", -1);
  for (int i = 0; i < config.polysemic_entities; ++i) {
    const auto& [a, b] = py_sig[static_cast<std::size_t>(i)];
    for (int s = 0; s < config.probe_arrangements; ++s) {
      add_probe(a.rel, py[static_cast<std::size_t>(i)], a.tail, "polysemic", -1);
      add_probe(b.rel, py[static_cast<std::size_t>(i)], b.tail, "polysemic", -1);
    }
  }
  for (int s = 0; s < config.filler_probe_records; ++s) {
    const int f = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(config.filler_entities)));
    const std::size_t j = rng.uniform_int(static_cast<std::uint64_t>(config.noise_triples_per_filler));
    add_probe(kNoiseRel, fl[static_cast<std::size_t>(f)],
              fl_noise_tails[static_cast<std::size_t>(f)][j], "filler", f,
              fl_noise_rels[static_cast<std::size_t>(f)][j]);
  }

  // Serialize ----------------------------------------------------------------
  std::filesystem::create_directories(out_dir);
  WorldFiles files;
  files.corpus_jsonl = out_dir + "/corpus.jsonl";
  files.kg_tsv = out_dir + "/kg.tsv";
  files.surfaces_tsv = out_dir + "/surfaces.tsv";
  files.probes_jsonl = out_dir + "/probes.jsonl";
  files.manifest_json = out_dir + "/manifest.json";

  {
    std::string body;
    for (const SentenceSpec& s : sentences) {
      json j;
      std::string text;
      for (std::size_t i = 0; i < s.tokens.size(); ++i) {
        if (i) text += ' ';
        text += s.tokens[i];
      }
      j["text"] = text;
      j["mentions"] = json::array();
      for (const auto& [id, a, b] : s.mentions) j["mentions"].push_back({id, a, b});
      body += j.dump();
      body += '\n';
    }
    write_text(files.corpus_jsonl, body);
  }
  {
    std::string body;
    auto row = [&](const std::string& h, const std::string& r, int t) {
      body += ent_id(h) + "\t" + rel_id(r) + "\t" + ent_id(tl[static_cast<std::size_t>(t)]) + "\n";
    };
    for (int i = 0; i < config.high_freq_entities; ++i)
      row(hf[static_cast<std::size_t>(i)], hf_sig[static_cast<std::size_t>(i)].rel,
          hf_sig[static_cast<std::size_t>(i)].tail);
    for (int i = 0; i < config.long_tail_entities; ++i)
      row(lt[static_cast<std::size_t>(i)], lt_sig[static_cast<std::size_t>(i)].rel,
          lt_sig[static_cast<std::size_t>(i)].tail);
    for (int i = 0; i < config.polysemic_entities; ++i) {
      row(py[static_cast<std::size_t>(i)], py_sig[static_cast<std::size_t>(i)].first.rel,
          py_sig[static_cast<std::size_t>(i)].first.tail);
      row(py[static_cast<std::size_t>(i)], py_sig[static_cast<std::size_t>(i)].second.rel,
          py_sig[static_cast<std::size_t>(i)].second.tail);
      for (int t : py_false[static_cast<std::size_t>(i)].first)
        row(py[static_cast<std::size_t>(i)], py_sig[static_cast<std::size_t>(i)].first.rel, t);
      for (int t : py_false[static_cast<std::size_t>(i)].second)
        row(py[static_cast<std::size_t>(i)], py_sig[static_cast<std::size_t>(i)].second.rel, t);
    }
    for (int i = 0; i < config.filler_entities; ++i)
      for (std::size_t j = 0; j < fl_noise_tails[static_cast<std::size_t>(i)].size(); ++j)
        row(fl[static_cast<std::size_t>(i)], fl_noise_rels[static_cast<std::size_t>(i)][j],
            fl_noise_tails[static_cast<std::size_t>(i)][j]);
    write_text(files.kg_tsv, body);
  }
  {
    std::string body;
    for (const auto& group : {hf, lt, py, fl, tl})
      for (const std::string& s : group) body += ent_id(s) + "\t" + s + "\n";
    for (const std::string& r : all_rels) body += rel_id(r) + "\t" + r + "\n";
    write_text(files.surfaces_tsv, body);
  }
  {
    std::string body;
    for (const ProbeSpec& p : probes) {
      json j;
      j["tokens"] = p.tokens;
      j["mask_pos"] = 4;
      j["gold"] = p.gold;
      j["entity_class"] = p.cls;
      j["group"] = p.group;
      j["required_triple"] = p.required;
      body += j.dump();
      body += '\n';
    }
    write_text(files.probes_jsonl, body);
  }
  {
    json m;
    m["config"] = json::parse(config.to_json_text());
    json classes;
    for (const std::string& s : hf) classes[ent_id(s)] = "high_frequency";
    for (const std::string& s : lt) classes[ent_id(s)] = "long_tail";
    for (const std::string& s : py) classes[ent_id(s)] = "polysemic";
    for (const std::string& s : fl) classes[ent_id(s)] = "filler";
    for (const std::string& s : tl) classes[ent_id(s)] = "object";
    m["entity_classes"] = classes;
    m["sentence_count"] = sentences.size();
    m["probe_count"] = probes.size();
    json fj;
    for (const std::string& p : {files.corpus_jsonl, files.kg_tsv, files.surfaces_tsv, files.probes_jsonl}) {
      const std::string name = std::filesystem::path(p).filename().string();
      fj[name]["fnv64"] = hex64(fnv1a64_file(p));
      fj[name]["bytes"] = std::filesystem::file_size(p);
    }
    m["files"] = fj;
    write_text(files.manifest_json, m.dump(2) + "\n");
  }
  return files;
}

}  // namespace kehrl
