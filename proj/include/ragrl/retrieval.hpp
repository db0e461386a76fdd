#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ragrl/document.hpp"

namespace ragrl {

class DuplicateDocIdError : public std::runtime_error {
 public:
  explicit DuplicateDocIdError(const std::string& id)
      : std::runtime_error("duplicate document id: " + id) {}
};

class EmptyCorpusError : public std::runtime_error {
 public:
  EmptyCorpusError() : std::runtime_error("corpus is empty") {}
};

class NoPriorQueryError : public std::runtime_error {
 public:
  NoPriorQueryError() : std::runtime_error("no search has occurred this episode") {}
};

// BM25 parameters and the non-negative idf variant. Fixed so rankings are
// reproducible without tuning.
inline constexpr double kBm25K1 = 1.2;
inline constexpr double kBm25B = 0.75;

struct Posting {
  int doc_ordinal = 0;
  int term_frequency = 0;
};

struct Index {
  // Term -> postings ordered by doc ordinal. std::map keeps term iteration
  // deterministic for stats and debugging.
  std::map<std::string, std::vector<Posting>> postings;
  std::vector<Document> docs;
  std::vector<int> doc_lengths;
  double avg_doc_length = 0.0;
  int doc_count = 0;

  const Document* find(const std::string& doc_id) const;

 private:
  friend Index build_index(std::span<const Document> corpus);
  std::unordered_map<std::string, int> id_to_ordinal_;
};

struct RankedEntry {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const RankedEntry& o) const {
    return doc_id == o.doc_id && score == o.score;
  }
};

struct RankedList {
  std::vector<RankedEntry> entries;  // descending score, ties by ascending id

  size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

// Indexing terms are lowercased words of "title text".
std::vector<std::string> index_terms(const Document& doc);
std::vector<std::string> query_terms(const std::string& query);

Index build_index(std::span<const Document> corpus);

// Full BM25 ranking over all documents with nonzero score.
RankedList search_all(const Index& index, const std::string& query);

// Convenience truncation of search_all; top_n >= 1.
RankedList search(const Index& index, const std::string& query, int top_n);

// Per-episode single-slot cache over the most recent query's full ranking.
struct RetrievalCache {
  std::optional<std::string> last_query;
  RankedList ranked;
  size_t cursor = 0;  // documents already delivered for last_query
};

RetrievalCache cache_store(RetrievalCache cache, std::string query,
                           RankedList ranked, size_t delivered);

// Next k ranks past the cursor, clipped to the list end; empty when the list
// is exhausted. Throws NoPriorQuery when no search has happened yet.
std::pair<std::vector<std::string>, RetrievalCache> fetch_more(RetrievalCache cache,
                                                               int k);

class CorpusLoadError : public std::runtime_error {
 public:
  CorpusLoadError(const std::string& path, size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

// JSON-lines corpus: one {"id","title","text"} object per line.
std::vector<Document> load_corpus_jsonl(const std::string& path);
void save_corpus_jsonl(const std::string& path, std::span<const Document> docs);

}  // namespace ragrl
