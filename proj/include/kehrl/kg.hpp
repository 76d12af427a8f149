#pragma once
// Knowledge-graph store: entity/relation tables, symmetric-closed adjacency,
// corpus frequency counts, and k-hop candidate retrieval with prior ranking.

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "kehrl/rng.hpp"

namespace kehrl {

struct Triple {
  int head = -1;
  int rel = -1;
  int tail = -1;
  friend bool operator==(const Triple&, const Triple&) = default;
};

class KnowledgeStore {
 public:
  int add_entity(const std::string& id, const std::string& surface);
  int add_relation(const std::string& id, const std::string& surface);
  void add_triple(int head, int rel, int tail);
  void bump_count(int entity);

  // Sorts triples lexically by (head, rel, tail), dedupes, and builds the
  // symmetric adjacency (each triple listed under head and tail). Must be
  // called once after loading; retrieval requires it.
  void finalize();
  bool finalized() const { return finalized_; }

  int find_entity(const std::string& id) const;  // -1 if absent
  int find_relation(const std::string& id) const;
  int entity_count() const { return static_cast<int>(entity_ids_.size()); }
  int relation_count() const { return static_cast<int>(relation_ids_.size()); }
  int triple_count() const { return static_cast<int>(triples_.size()); }

  const std::string& entity_id(int e) const { return entity_ids_.at(static_cast<std::size_t>(e)); }
  const std::string& entity_surface(int e) const { return entity_surfaces_.at(static_cast<std::size_t>(e)); }
  const std::string& relation_id(int r) const { return relation_ids_.at(static_cast<std::size_t>(r)); }
  const std::string& relation_surface(int r) const { return relation_surfaces_.at(static_cast<std::size_t>(r)); }
  const Triple& triple(int t) const { return triples_.at(static_cast<std::size_t>(t)); }
  const std::vector<int>& triples_of(int entity) const;

  long long count_of(int entity) const { return counts_.at(static_cast<std::size_t>(entity)); }
  long long total_count() const { return total_count_; }

 private:
  std::vector<std::string> entity_ids_, entity_surfaces_;
  std::vector<std::string> relation_ids_, relation_surfaces_;
  std::unordered_map<std::string, int> entity_index_, relation_index_;
  std::vector<Triple> triples_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<long long> counts_;
  long long total_count_ = 0;
  bool finalized_ = false;
};

struct CandidateTripleSet {
  int entity = -1;
  std::vector<int> triples;  // indices into store, exactly M after padding
  std::vector<int> hops;     // BFS hop per slot, aligned with triples
};

// k-hop BFS retrieval ranked by (hop asc, prior desc, lexical triple order),
// truncated to M; short sets are padded by uniform draws with replacement
// from the collected candidates. prior may be empty (treated as all-zero).
// Throws std::invalid_argument for an entity with no triples; callers use
// that to drop the entity from the candidate pool.
CandidateTripleSet retrieve_triples(const KnowledgeStore& store, int entity, int k, int M,
                                    const std::function<double(int)>& prior, Rng& rng);

}  // namespace kehrl
