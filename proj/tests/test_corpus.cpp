#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kehrl/corpus.hpp"
#include "kehrl/kg.hpp"
#include "kehrl/rng.hpp"

using namespace kehrl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& body) const {
    const fs::path p = path / name;
    std::ofstream out(p);
    out << body;
    return p.string();
  }
};

CorpusFiles small_fixture(const TempDir& dir) {
  CorpusFiles f;
  f.surfaces_tsv = dir.file("surfaces.tsv",
                            "e1\talpha\n"
                            "e2\tbeta\n"
                            "e3\tgamma\n"
                            "r1\tnear\n");
  f.kg_tsv = dir.file("kg.tsv",
                      "e1\tr1\te2\n"
                      "e2\tr1\te3\n");
  f.corpus_jsonl = dir.file(
      "corpus.jsonl",
      R"({"text": "alpha sits near beta", "mentions": [["e1",0,1],["e2",3,4]]})"
      "\n"
      R"({"text": "gamma waits for alpha", "mentions": [["e3",0,1],["e1",3,4]]})"
      "\n");
  return f;
}

}  // namespace

TEST_CASE("ingest: counts match a hand-tallied fixture") {
  TempDir dir("kehrl_ingest_fixture");
  CorpusData data = ingest_corpus(small_fixture(dir));
  REQUIRE(data.sentences.size() == 2);
  CHECK(data.store.count_of(data.store.find_entity("e1")) == 2);
  CHECK(data.store.count_of(data.store.find_entity("e2")) == 1);
  CHECK(data.store.count_of(data.store.find_entity("e3")) == 1);

  long long total = 0;
  std::size_t mention_total = 0;
  for (int e = 0; e < data.store.entity_count(); ++e) total += data.store.count_of(e);
  for (const auto& s : data.sentences) mention_total += s.mentions.size();
  CHECK(total == static_cast<long long>(mention_total));
  CHECK(total == data.store.total_count());

  // Tokens resolve through the vocab, including KG surfaces.
  CHECK(data.vocab.contains("alpha"));
  CHECK(data.vocab.contains("near"));
  CHECK(data.sentences[0].tokens.size() == 4);
}

TEST_CASE("ingest: empty corpus file gives an empty corpus with zero counts") {
  TempDir dir("kehrl_ingest_empty");
  CorpusFiles f = small_fixture(dir);
  f.corpus_jsonl = dir.file("empty.jsonl", "");
  CorpusData data = ingest_corpus(f);
  CHECK(data.sentences.empty());
  CHECK(data.store.total_count() == 0);
}

TEST_CASE("ingest: malformed input is rejected with the offending line number") {
  TempDir dir("kehrl_ingest_bad");
  SUBCASE("overlapping spans") {
    CorpusFiles f = small_fixture(dir);
    f.corpus_jsonl = dir.file(
        "bad.jsonl",
        R"({"text": "alpha sits near beta", "mentions": [["e1",0,2],["e2",1,3]]})"
        "\n");
    CHECK_THROWS_WITH_AS(ingest_corpus(f), doctest::Contains(":1:"), std::runtime_error);
  }
  SUBCASE("unknown entity, second line") {
    CorpusFiles f = small_fixture(dir);
    f.corpus_jsonl = dir.file(
        "bad.jsonl",
        R"({"text": "alpha sits", "mentions": []})"
        "\n"
        R"({"text": "beta sits", "mentions": [["ghost",0,1]]})"
        "\n");
    CHECK_THROWS_WITH_AS(ingest_corpus(f), doctest::Contains(":2:"), std::runtime_error);
  }
  SUBCASE("broken JSON") {
    CorpusFiles f = small_fixture(dir);
    f.corpus_jsonl = dir.file("bad.jsonl", "{not json\n");
    CHECK_THROWS_AS(ingest_corpus(f), std::runtime_error);
  }
  SUBCASE("KG row with missing column") {
    CorpusFiles f = small_fixture(dir);
    f.kg_tsv = dir.file("bad.tsv", "e1\tr1\n");
    CHECK_THROWS_WITH_AS(ingest_corpus(f), doctest::Contains("bad.tsv:1"), std::runtime_error);
  }
}

TEST_CASE("link_entities: longest match first, left to right, non-overlapping") {
  std::vector<GazetteerEntry> gaz = {
      {{"tim", "cook"}, 0}, {{"apple"}, 1}, {{"new", "york"}, 2}, {{"new", "york", "city"}, 3}};
  auto m1 = link_entities({"tim", "cook", "leads", "apple"}, gaz);
  REQUIRE(m1.size() == 2);
  CHECK(m1[0].entity == 0);
  CHECK(m1[0].start == 0);
  CHECK(m1[0].end == 2);
  CHECK(m1[1].entity == 1);
  CHECK(m1[1].start == 3);
  CHECK(m1[1].end == 4);

  auto m2 = link_entities({"visit", "new", "york", "city", "soon"}, gaz);
  REQUIRE(m2.size() == 1);
  CHECK(m2[0].entity == 3);
  CHECK(m2[0].end - m2[0].start == 3);

  CHECK(link_entities({"nothing", "matches", "here"}, gaz).empty());
}

TEST_CASE("retrieve_triples: padding, hop semantics, prior ranking") {
  KnowledgeStore store;
  Rng rng(5);

  SUBCASE("star graph pads 3 candidates to M=7") {
    const int hub = store.add_entity("hub", "hub");
    const int r = store.add_relation("r", "r");
    for (int i = 0; i < 3; ++i) store.add_triple(hub, r, store.add_entity("leaf" + std::to_string(i), ""));
    store.finalize();
    auto set = retrieve_triples(store, hub, 3, 7, nullptr, rng);
    REQUIRE(set.triples.size() == 7);
    std::set<int> distinct(set.triples.begin(), set.triples.end());
    CHECK(distinct.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(distinct.count(set.triples[static_cast<std::size_t>(i)]) == 1);
    for (int h : set.hops) CHECK(h == 1);
  }

  SUBCASE("chain: hop 2 is a superset of hop 1") {
    const int e1 = store.add_entity("e1", "");
    const int e2 = store.add_entity("e2", "");
    const int e3 = store.add_entity("e3", "");
    const int r = store.add_relation("r", "r");
    store.add_triple(e1, r, e2);
    store.add_triple(e2, r, e3);
    store.finalize();
    auto k1 = retrieve_triples(store, e1, 1, 2, nullptr, rng);
    auto k2 = retrieve_triples(store, e1, 2, 2, nullptr, rng);
    std::set<int> s1(k1.triples.begin(), k1.triples.end());
    std::set<int> s2(k2.triples.begin(), k2.triples.end());
    CHECK(s1.size() == 1);  // only e1-e2 reachable at hop 1 (padded copy)
    CHECK(s2.size() == 2);
    for (int t : s1) CHECK(s2.count(t) == 1);
    CHECK(k2.hops[0] == 1);
    CHECK(k2.hops[1] == 2);
  }

  SUBCASE("ten one-hop candidates with distinct priors keep the top 7") {
    const int hub = store.add_entity("hub", "hub");
    const int r = store.add_relation("r", "r");
    for (int i = 0; i < 10; ++i) store.add_triple(hub, r, store.add_entity("x" + std::to_string(i), ""));
    store.finalize();
    auto prior = [](int t) { return static_cast<double>((t * 7) % 10); };
    auto set = retrieve_triples(store, hub, 3, 7, prior, rng);
    // Brute-force oracle: sort all ten by prior descending.
    std::vector<int> all;
    for (int t = 0; t < store.triple_count(); ++t) all.push_back(t);
    std::sort(all.begin(), all.end(), [&](int a, int b) { return prior(a) > prior(b); });
    std::set<int> expect(all.begin(), all.begin() + 7);
    for (int t : set.triples) CHECK(expect.count(t) == 1);
  }

  SUBCASE("zero-triple entity is an error for the caller to catch") {
    const int lonely = store.add_entity("lonely", "");
    const int a = store.add_entity("a", "");
    const int b = store.add_entity("b", "");
    store.add_triple(a, store.add_relation("r", "r"), b);
    store.finalize();
    CHECK_THROWS_AS(retrieve_triples(store, lonely, 3, 7, nullptr, rng), std::invalid_argument);
  }

  SUBCASE("triples are reachable from their tail as well") {
    const int a = store.add_entity("a", "");
    const int b = store.add_entity("b", "");
    store.add_triple(a, store.add_relation("r", "r"), b);
    store.finalize();
    auto set = retrieve_triples(store, b, 1, 1, nullptr, rng);
    CHECK(set.triples.size() == 1);
    CHECK(store.triple(set.triples[0]).head == a);
  }
}
