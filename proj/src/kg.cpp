#include "kehrl/kg.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>

namespace kehrl {

int KnowledgeStore::add_entity(const std::string& id, const std::string& surface) {
  auto it = entity_index_.find(id);
  if (it != entity_index_.end()) {
    if (!surface.empty()) entity_surfaces_[static_cast<std::size_t>(it->second)] = surface;
    return it->second;
  }
  const int e = static_cast<int>(entity_ids_.size());
  entity_ids_.push_back(id);
  entity_surfaces_.push_back(surface.empty() ? id : surface);
  counts_.push_back(0);
  entity_index_.emplace(id, e);
  finalized_ = false;
  return e;
}

int KnowledgeStore::add_relation(const std::string& id, const std::string& surface) {
  auto it = relation_index_.find(id);
  if (it != relation_index_.end()) {
    if (!surface.empty()) relation_surfaces_[static_cast<std::size_t>(it->second)] = surface;
    return it->second;
  }
  const int r = static_cast<int>(relation_ids_.size());
  relation_ids_.push_back(id);
  relation_surfaces_.push_back(surface.empty() ? id : surface);
  relation_index_.emplace(id, r);
  return r;
}

void KnowledgeStore::add_triple(int head, int rel, int tail) {
  if (head < 0 || head >= entity_count() || tail < 0 || tail >= entity_count() || rel < 0 ||
      rel >= relation_count())
    throw std::invalid_argument("knowledge store: triple references unknown id");
  triples_.push_back({head, rel, tail});
  finalized_ = false;
}

void KnowledgeStore::bump_count(int entity) {
  counts_.at(static_cast<std::size_t>(entity)) += 1;
  total_count_ += 1;
}

void KnowledgeStore::finalize() {
  std::sort(triples_.begin(), triples_.end(), [](const Triple& a, const Triple& b) {
    if (a.head != b.head) return a.head < b.head;
    if (a.rel != b.rel) return a.rel < b.rel;
    return a.tail < b.tail;
  });
  triples_.erase(std::unique(triples_.begin(), triples_.end()), triples_.end());
  adjacency_.assign(static_cast<std::size_t>(entity_count()), {});
  for (int t = 0; t < triple_count(); ++t) {
    const Triple& tr = triples_[static_cast<std::size_t>(t)];
    adjacency_[static_cast<std::size_t>(tr.head)].push_back(t);
    if (tr.tail != tr.head) adjacency_[static_cast<std::size_t>(tr.tail)].push_back(t);
  }
  finalized_ = true;
}

int KnowledgeStore::find_entity(const std::string& id) const {
  auto it = entity_index_.find(id);
  return it == entity_index_.end() ? -1 : it->second;
}

int KnowledgeStore::find_relation(const std::string& id) const {
  auto it = relation_index_.find(id);
  return it == relation_index_.end() ? -1 : it->second;
}

const std::vector<int>& KnowledgeStore::triples_of(int entity) const {
  if (!finalized_) throw std::runtime_error("knowledge store: finalize() before adjacency queries");
  return adjacency_.at(static_cast<std::size_t>(entity));
}

CandidateTripleSet retrieve_triples(const KnowledgeStore& store, int entity, int k, int M,
                                    const std::function<double(int)>& prior, Rng& rng) {
  if (!store.finalized()) throw std::runtime_error("retrieve_triples: store not finalized");
  if (entity < 0 || entity >= store.entity_count())
    throw std::invalid_argument("retrieve_triples: unknown entity " + std::to_string(entity));
  if (k < 1) throw std::invalid_argument("retrieve_triples: k must be >= 1");
  if (M < 1) throw std::invalid_argument("retrieve_triples: M must be >= 1");
  if (store.triples_of(entity).empty())
    throw std::invalid_argument("retrieve_triples: entity " + store.entity_id(entity) +
                                " has no triples; exclude it from the candidate pool");

  // BFS over entities; a triple's hop is the level at which it is first seen.
  std::vector<int> dist(static_cast<std::size_t>(store.entity_count()), -1);
  std::vector<char> taken(static_cast<std::size_t>(store.triple_count()), 0);
  struct Cand {
    int triple;
    int hop;
  };
  std::vector<Cand> cands;
  std::deque<int> frontier{entity};
  dist[static_cast<std::size_t>(entity)] = 0;
  for (int hop = 1; hop <= k && !frontier.empty(); ++hop) {
    std::deque<int> next;
    for (int u : frontier) {
      for (int t : store.triples_of(u)) {
        if (!taken[static_cast<std::size_t>(t)]) {
          taken[static_cast<std::size_t>(t)] = 1;
          cands.push_back({t, hop});
        }
        const Triple& tr = store.triple(t);
        const int other = tr.head == u ? tr.tail : tr.head;
        if (dist[static_cast<std::size_t>(other)] < 0) {
          dist[static_cast<std::size_t>(other)] = hop;
          next.push_back(other);
        }
      }
    }
    frontier = std::move(next);
  }

  std::stable_sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
    if (a.hop != b.hop) return a.hop < b.hop;
    const double pa = prior ? prior(a.triple) : 0.0;
    const double pb = prior ? prior(b.triple) : 0.0;
    if (pa != pb) return pa > pb;
    return a.triple < b.triple;  // triples are stored in lexical order
  });

  CandidateTripleSet out;
  out.entity = entity;
  const int base = std::min<int>(M, static_cast<int>(cands.size()));
  for (int i = 0; i < base; ++i) {
    out.triples.push_back(cands[static_cast<std::size_t>(i)].triple);
    out.hops.push_back(cands[static_cast<std::size_t>(i)].hop);
  }
  while (static_cast<int>(out.triples.size()) < M) {
    const int pick = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(base)));
    out.triples.push_back(out.triples[static_cast<std::size_t>(pick)]);
    out.hops.push_back(out.hops[static_cast<std::size_t>(pick)]);
  }
  return out;
}

}  // namespace kehrl
