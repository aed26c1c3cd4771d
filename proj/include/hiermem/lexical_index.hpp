#pragma once
// BM25 inverted index over text fields, partitioned by item kind.
// Tokenization rule (used identically at index and query time):
//   - input is UTF-8; ASCII letters fold to lowercase
//   - token constituents are ASCII alphanumerics and every non-ASCII byte
//     (multi-byte sequences are kept intact; no script-specific splitting)
//   - any other ASCII byte is a separator; tokens are maximal runs
//   - no stemming, no stop words
// Okapi BM25 with idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)); duplicate
// query terms are collapsed (first occurrence kept). Zero-score documents
// are never returned.

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "hiermem/types.hpp"

namespace hiermem {

std::vector<std::string> tokenize(const std::string& text);

enum class IndexKind {
  episode_content,
  entity_profile,  // name + summary, name tokens duplicated by the boost
  edge_fact,
};

struct ScoredId {
  NodeId id;
  double score;
  bool operator==(const ScoredId&) const = default;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
  double name_boost = 2.0;  // entity name duplication factor (rounded)
};

class LexicalIndex {
 public:
  explicit LexicalIndex(Bm25Params params = {}) : params_(params) {}

  // Indexes (or re-indexes) one document.
  void upsert(IndexKind kind, NodeId id, const std::vector<std::string>& tokens);
  void remove(IndexKind kind, NodeId id);
  void clear();

  // Descending Okapi score, ties broken by ascending id, at most `limit`.
  std::vector<ScoredId> search(IndexKind kind, const std::string& query,
                               std::size_t limit) const;

  std::size_t doc_count(IndexKind kind) const;
  const Bm25Params& params() const { return params_; }

  // Entity field assembly: name tokens repeated round(name_boost) times,
  // then summary tokens.
  std::vector<std::string> entity_tokens(const std::string& name,
                                         const std::string& summary) const;

 private:
  struct Posting {
    std::uint64_t doc;
    double tf;
  };
  struct Partition {
    // term -> postings sorted by doc id
    std::map<std::string, std::vector<Posting>> postings;
    std::unordered_map<std::uint64_t, double> doc_len;
    double total_len = 0.0;
  };

  const Partition& part(IndexKind kind) const;
  Partition& part(IndexKind kind);

  Bm25Params params_;
  Partition episodes_, entities_, edges_;
};

}  // namespace hiermem
