#pragma once
// Corpus ingestion and gazetteer entity linking.

#include <string>
#include <vector>

#include "kehrl/kg.hpp"
#include "kehrl/vocab.hpp"

namespace kehrl {

struct Mention {
  int entity = -1;  // store entity index
  int start = 0;    // token span [start, end)
  int end = 0;
};

struct AnnotatedSentence {
  int id = -1;
  std::vector<int> tokens;
  std::vector<Mention> mentions;
};

struct CorpusFiles {
  std::string corpus_jsonl;
  std::string kg_tsv;
  std::string surfaces_tsv;
};

struct CorpusData {
  Vocab vocab;
  std::vector<AnnotatedSentence> sentences;
  KnowledgeStore store;
};

// Loads surfaces, KG triples, then the sentence file. Every mention span is
// validated (bounds, start<end, non-overlap) and C_e counts are populated so
// that sum(C_e) equals the total mention count. Malformed input raises
// std::runtime_error naming the file and line.
CorpusData ingest_corpus(const CorpusFiles& files);

// One gazetteer entry: tokenized surface plus the store entity index.
struct GazetteerEntry {
  std::vector<std::string> words;
  int entity = -1;
};

// Longest-match-first, left-to-right, non-overlapping exact matching over
// word sequences. No match -> empty list.
std::vector<Mention> link_entities(const std::vector<std::string>& words,
                                   const std::vector<GazetteerEntry>& gazetteer);

}  // namespace kehrl
