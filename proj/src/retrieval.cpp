#include "ragrl/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ragrl/vocab.hpp"

namespace ragrl {

namespace {

std::string lower_ascii(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> lowered_words(const std::string& text) {
  std::vector<std::string> words = split_words(text);
  for (std::string& w : words) w = lower_ascii(std::move(w));
  return words;
}

}  // namespace

const Document* Index::find(const std::string& doc_id) const {
  auto it = id_to_ordinal_.find(doc_id);
  if (it == id_to_ordinal_.end()) return nullptr;
  return &docs[it->second];
}

std::vector<std::string> index_terms(const Document& doc) {
  return lowered_words(doc.title + " " + doc.text);
}

std::vector<std::string> query_terms(const std::string& query) {
  // Duplicate query terms count once.
  std::vector<std::string> words = lowered_words(query);
  std::vector<std::string> unique;
  for (std::string& w : words) {
    if (std::find(unique.begin(), unique.end(), w) == unique.end()) {
      unique.push_back(std::move(w));
    }
  }
  return unique;
}

Index build_index(std::span<const Document> corpus) {
  if (corpus.empty()) throw EmptyCorpusError();
  Index index;
  index.docs.assign(corpus.begin(), corpus.end());
  index.doc_count = static_cast<int>(corpus.size());
  long total_len = 0;
  for (int ord = 0; ord < index.doc_count; ++ord) {
    const Document& doc = index.docs[ord];
    if (!index.id_to_ordinal_.emplace(doc.id, ord).second) {
      throw DuplicateDocIdError(doc.id);
    }
    std::vector<std::string> terms = index_terms(doc);
    index.doc_lengths.push_back(static_cast<int>(terms.size()));
    total_len += static_cast<long>(terms.size());
    std::map<std::string, int> tf;
    for (const std::string& t : terms) ++tf[t];
    for (const auto& [term, count] : tf) {
      index.postings[term].push_back(Posting{ord, count});
    }
  }
  index.avg_doc_length =
      static_cast<double>(total_len) / static_cast<double>(index.doc_count);
  return index;
}

RankedList search_all(const Index& index, const std::string& query) {
  std::vector<double> scores(index.doc_count, 0.0);
  std::vector<uint8_t> touched(index.doc_count, 0);
  const double n = static_cast<double>(index.doc_count);
  for (const std::string& term : query_terms(query)) {
    auto it = index.postings.find(term);
    if (it == index.postings.end()) continue;
    const auto& postings = it->second;
    const double df = static_cast<double>(postings.size());
    const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
    for (const Posting& p : postings) {
      const double tf = static_cast<double>(p.term_frequency);
      const double dl = static_cast<double>(index.doc_lengths[p.doc_ordinal]);
      const double denom =
          tf + kBm25K1 * (1.0 - kBm25B + kBm25B * dl / index.avg_doc_length);
      scores[p.doc_ordinal] += idf * tf * (kBm25K1 + 1.0) / denom;
      touched[p.doc_ordinal] = 1;
    }
  }
  RankedList ranked;
  for (int ord = 0; ord < index.doc_count; ++ord) {
    if (touched[ord] && scores[ord] > 0.0) {
      ranked.entries.push_back(RankedEntry{index.docs[ord].id, scores[ord]});
    }
  }
  std::sort(ranked.entries.begin(), ranked.entries.end(),
            [](const RankedEntry& a, const RankedEntry& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.doc_id < b.doc_id;
            });
  return ranked;
}

RankedList search(const Index& index, const std::string& query, int top_n) {
  if (top_n < 1) throw std::invalid_argument("top_n must be >= 1");
  RankedList full = search_all(index, query);
  if (full.entries.size() > static_cast<size_t>(top_n)) {
    full.entries.resize(static_cast<size_t>(top_n));
  }
  return full;
}

RetrievalCache cache_store(RetrievalCache cache, std::string query,
                           RankedList ranked, size_t delivered) {
  if (delivered > ranked.entries.size()) {
    throw std::invalid_argument("delivered exceeds ranked list length");
  }
  cache.last_query = std::move(query);
  cache.ranked = std::move(ranked);
  cache.cursor = delivered;
  return cache;
}

std::pair<std::vector<std::string>, RetrievalCache> fetch_more(RetrievalCache cache,
                                                               int k) {
  if (!cache.last_query.has_value()) throw NoPriorQueryError();
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  std::vector<std::string> ids;
  size_t end = std::min(cache.ranked.entries.size(),
                        cache.cursor + static_cast<size_t>(k));
  for (size_t i = cache.cursor; i < end; ++i) {
    ids.push_back(cache.ranked.entries[i].doc_id);
  }
  cache.cursor = end;
  return {std::move(ids), std::move(cache)};
}

std::vector<Document> load_corpus_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusLoadError(path, 0, "cannot open file");
  std::vector<Document> docs;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw CorpusLoadError(path, lineno, "invalid JSON object");
    }
    if (!j.contains("id") || !j.contains("title") || !j.contains("text")) {
      throw CorpusLoadError(path, lineno, "missing id/title/text field");
    }
    docs.push_back(Document{j.at("id").get<std::string>(),
                            j.at("title").get<std::string>(),
                            j.at("text").get<std::string>()});
  }
  if (docs.empty()) throw CorpusLoadError(path, lineno, "corpus file has no documents");
  return docs;
}

void save_corpus_jsonl(const std::string& path, std::span<const Document> docs) {
  std::ofstream out(path);
  if (!out) throw CorpusLoadError(path, 0, "cannot open file for writing");
  for (const Document& d : docs) {
    nlohmann::json j{{"id", d.id}, {"title", d.title}, {"text", d.text}};
    out << j.dump() << '\n';
  }
}

}  // namespace ragrl
