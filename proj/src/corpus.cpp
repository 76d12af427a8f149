#include "kehrl/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace kehrl {

namespace {

using nlohmann::json;

[[noreturn]] void fail_at(const std::string& path, int line, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::vector<std::string> tsv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == '\t') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

CorpusData ingest_corpus(const CorpusFiles& files) {
  CorpusData data;

  // Sidecar surfaces: id \t surface. Also read first so that ids referenced
  // by the KG resolve with their display forms.
  std::vector<std::pair<std::string, std::string>> surfaces;
  {
    auto in = open_or_throw(files.surfaces_tsv);
    std::string line;
    int ln = 0;
    while (std::getline(in, line)) {
      ++ln;
      if (line.empty()) continue;
      auto f = tsv_fields(line);
      if (f.size() != 2 || f[0].empty() || f[1].empty())
        fail_at(files.surfaces_tsv, ln, "expected 2 tab-separated fields (id, surface)");
      surfaces.emplace_back(f[0], f[1]);
    }
  }
  auto surface_of = [&](const std::string& id) -> std::string {
    for (const auto& [sid, s] : surfaces)
      if (sid == id) return s;
    return id;
  };

  // KG triples: head \t rel \t tail. Column position decides whether an id
  // is an entity or a relation.
  {
    auto in = open_or_throw(files.kg_tsv);
    std::string line;
    int ln = 0;
    while (std::getline(in, line)) {
      ++ln;
      if (line.empty()) continue;
      auto f = tsv_fields(line);
      if (f.size() != 3 || f[0].empty() || f[1].empty() || f[2].empty())
        fail_at(files.kg_tsv, ln, "expected 3 tab-separated fields (head, rel, tail)");
      const int h = data.store.add_entity(f[0], surface_of(f[0]));
      const int r = data.store.add_relation(f[1], surface_of(f[1]));
      const int t = data.store.add_entity(f[2], surface_of(f[2]));
      data.store.add_triple(h, r, t);
    }
  }

  // Sentences: one JSON object per line.
  {
    auto in = open_or_throw(files.corpus_jsonl);
    std::string line;
    int ln = 0;
    while (std::getline(in, line)) {
      ++ln;
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("text") || !j["text"].is_string())
        fail_at(files.corpus_jsonl, ln, "expected {\"text\": str, \"mentions\": [[id, start, end], ...]}");
      AnnotatedSentence s;
      s.id = static_cast<int>(data.sentences.size());
      for (const std::string& w : split_ws(j["text"].get<std::string>()))
        s.tokens.push_back(data.vocab.add(w));
      if (j.contains("mentions")) {
        if (!j["mentions"].is_array()) fail_at(files.corpus_jsonl, ln, "mentions must be an array");
        for (const auto& m : j["mentions"]) {
          if (!m.is_array() || m.size() != 3 || !m[0].is_string() || !m[1].is_number_integer() ||
              !m[2].is_number_integer())
            fail_at(files.corpus_jsonl, ln, "mention must be [entity_id, start_tok, end_tok]");
          const std::string eid = m[0].get<std::string>();
          const int ent = data.store.find_entity(eid);
          if (ent < 0) fail_at(files.corpus_jsonl, ln, "mention references unknown entity '" + eid + "'");
          Mention men{ent, m[1].get<int>(), m[2].get<int>()};
          if (men.start < 0 || men.end > static_cast<int>(s.tokens.size()) || men.start >= men.end)
            fail_at(files.corpus_jsonl, ln, "mention span out of bounds or empty");
          s.mentions.push_back(men);
        }
        std::sort(s.mentions.begin(), s.mentions.end(),
                  [](const Mention& a, const Mention& b) { return a.start < b.start; });
        for (std::size_t i = 1; i < s.mentions.size(); ++i) {
          if (s.mentions[i].start < s.mentions[i - 1].end)
            fail_at(files.corpus_jsonl, ln, "overlapping mention spans");
        }
      }
      for (const Mention& m : s.mentions) data.store.bump_count(m.entity);
      data.sentences.push_back(std::move(s));
    }
  }

  // Make every surface form encodable as a pseudo sentence.
  for (const auto& [id, surface] : surfaces)
    for (const std::string& w : split_ws(surface)) data.vocab.add(w);

  data.store.finalize();
  return data;
}

std::vector<Mention> link_entities(const std::vector<std::string>& words,
                                   const std::vector<GazetteerEntry>& gazetteer) {
  std::vector<Mention> out;
  std::size_t i = 0;
  while (i < words.size()) {
    int best_len = 0;
    int best_entity = -1;
    for (const GazetteerEntry& g : gazetteer) {
      const std::size_t n = g.words.size();
      if (n == 0 || static_cast<int>(n) <= best_len || i + n > words.size()) continue;
      bool match = true;
      for (std::size_t k = 0; k < n; ++k) {
        if (words[i + k] != g.words[k]) {
          match = false;
          break;
        }
      }
      if (match) {
        best_len = static_cast<int>(n);
        best_entity = g.entity;
      }
    }
    if (best_len > 0) {
      out.push_back({best_entity, static_cast<int>(i), static_cast<int>(i) + best_len});
      i += static_cast<std::size_t>(best_len);
    } else {
      ++i;
    }
  }
  return out;
}

}  // namespace kehrl
