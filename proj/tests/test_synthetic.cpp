#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include <json.hpp>

#include "kehrl/corpus.hpp"
#include "kehrl/digest.hpp"
#include "kehrl/synthetic.hpp"

using namespace kehrl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

SyntheticConfig test_config() {
  SyntheticConfig c;
  c.seed = 20240401;
  c.seed_set = true;
  return c;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

}  // namespace

TEST_CASE("synthetic world: generation is byte-identical under a fixed seed") {
  const fs::path base = fs::temp_directory_path() / "kehrl_world_det";
  fs::remove_all(base);
  auto a = generate_synthetic_world(test_config(), (base / "a").string());
  auto b = generate_synthetic_world(test_config(), (base / "b").string());
  CHECK(fnv1a64_file(a.corpus_jsonl) == fnv1a64_file(b.corpus_jsonl));
  CHECK(fnv1a64_file(a.kg_tsv) == fnv1a64_file(b.kg_tsv));
  CHECK(fnv1a64_file(a.surfaces_tsv) == fnv1a64_file(b.surfaces_tsv));
  CHECK(fnv1a64_file(a.probes_jsonl) == fnv1a64_file(b.probes_jsonl));
  CHECK(fnv1a64_file(a.manifest_json) == fnv1a64_file(b.manifest_json));

  SyntheticConfig other = test_config();
  other.seed += 1;
  auto c = generate_synthetic_world(other, (base / "c").string());
  CHECK(fnv1a64_file(a.corpus_jsonl) != fnv1a64_file(c.corpus_jsonl));
  fs::remove_all(base);
}

TEST_CASE("synthetic world: structural guarantees") {
  const fs::path base = fs::temp_directory_path() / "kehrl_world_struct";
  fs::remove_all(base);
  auto files = generate_synthetic_world(test_config(), base.string());
  CorpusData data = ingest_corpus({files.corpus_jsonl, files.kg_tsv, files.surfaces_tsv});
  json manifest = json::parse(std::ifstream(files.manifest_json));

  SUBCASE("every probe gold token equals its required triple's tail surface") {
    auto probes = read_jsonl(files.probes_jsonl);
    CHECK(probes.size() > 50);
    for (const auto& p : probes) {
      const int tail = data.store.find_entity(p["required_triple"][2].get<std::string>());
      REQUIRE(tail >= 0);
      CHECK(p["gold"].get<std::string>() == data.store.entity_surface(tail));
      CHECK(p["tokens"][p["mask_pos"].get<std::size_t>()].get<std::string>() ==
            p["gold"].get<std::string>());
      CHECK(data.vocab.contains(p["gold"].get<std::string>()));
    }
  }

  SUBCASE("probe records cover all four entity classes") {
    std::set<std::string> classes;
    for (const auto& p : read_jsonl(files.probes_jsonl))
      classes.insert(p["entity_class"].get<std::string>());
    CHECK(classes ==
          std::set<std::string>{"high_frequency", "long_tail", "polysemic", "filler"});
  }

  SUBCASE("polysemic entities carry at least two triples with disjoint relations") {
    int checked = 0;
    for (const auto& [id, cls] : manifest["entity_classes"].items()) {
      if (cls.get<std::string>() != "polysemic") continue;
      const int e = data.store.find_entity(id);
      REQUIRE(e >= 0);
      std::set<int> rels;
      for (int t : data.store.triples_of(e))
        if (data.store.triple(t).head == e) rels.insert(data.store.triple(t).rel);
      CHECK(rels.size() >= 2);
      ++checked;
    }
    CHECK(checked == test_config().polysemic_entities);
  }

  SUBCASE("frequency conservation and mention shape") {
    long long total = 0;
    for (int e = 0; e < data.store.entity_count(); ++e) total += data.store.count_of(e);
    CHECK(total == 3 * static_cast<long long>(data.sentences.size()));
    for (const auto& s : data.sentences) {
      REQUIRE(s.tokens.size() == 7);
      REQUIRE(s.mentions.size() == 3);
      CHECK(s.mentions[1].start == 2);
      CHECK(s.mentions[1].end == 3);
    }
  }

  SUBCASE("linker idempotence: re-linking annotated text reproduces the spans") {
    std::vector<GazetteerEntry> gaz;
    for (const auto& [id, cls] : manifest["entity_classes"].items()) {
      if (cls.get<std::string>() == "object") continue;  // tails are not mentions
      const int e = data.store.find_entity(id);
      gaz.push_back({split_ws(data.store.entity_surface(e)), e});
    }
    for (const auto& s : data.sentences) {
      std::vector<std::string> words;
      for (int t : s.tokens) words.push_back(data.vocab.token(t));
      auto relinked = link_entities(words, gaz);
      REQUIRE(relinked.size() == s.mentions.size());
      for (std::size_t i = 0; i < relinked.size(); ++i) {
        CHECK(relinked[i].entity == s.mentions[i].entity);
        CHECK(relinked[i].start == s.mentions[i].start);
        CHECK(relinked[i].end == s.mentions[i].end);
      }
    }
  }

  SUBCASE("manifest checksums match the files on disk") {
    for (const auto& [name, meta] : manifest["files"].items()) {
      CHECK(meta["fnv64"].get<std::string>() ==
            hex64(fnv1a64_file((base / name).string())));
    }
  }
  fs::remove_all(base);
}

TEST_CASE("synthetic config: validation names the offending field") {
  SyntheticConfig c = test_config();
  c.seed_set = false;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("seed"), std::invalid_argument);

  SyntheticConfig d = test_config();
  d.noise_triples_per_filler = d.tail_entities + 1;
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("noise_triples_per_filler"),
                       std::invalid_argument);

  CHECK_THROWS_WITH_AS(SyntheticConfig::from_json_text(R"({"bogus": 1})"),
                       doctest::Contains("bogus"), std::invalid_argument);

  SyntheticConfig parsed = SyntheticConfig::from_json_text(R"({"seed": 7, "tail_entities": 9})");
  CHECK(parsed.seed == 7);
  CHECK(parsed.seed_set);
  CHECK(parsed.tail_entities == 9);
  CHECK(parsed.high_freq_entities == SyntheticConfig{}.high_freq_entities);
}
