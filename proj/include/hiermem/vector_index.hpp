#pragma once
// Exact (non-approximate) top-k cosine index: per-kind flat arrays of
// unit-normalized vectors, scanned in full by the cosine kernel. Exactness
// keeps fusion tests deterministic at desk scale; an ANN structure could
// replace the scan behind this interface.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hiermem/lexical_index.hpp"  // ScoredId
#include "hiermem/types.hpp"

namespace hiermem {

enum class VectorKind {
  episode_embedding,
  entity_name,
  entity_summary,
  edge_fact,
};

class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dim = kDefaultEmbeddingDim) : dim_(dim) {}

  std::size_t dimension() const { return dim_; }

  // Vectors must be unit-norm or zero at the index dimension.
  void upsert(VectorKind kind, NodeId id, const EmbeddingVector& v);
  void remove(VectorKind kind, NodeId id);
  void clear();

  // Exact top-limit by cosine similarity; descending score, ties broken by
  // ascending id. The query is normalized internally (zero query scores 0
  // against everything). Throws Error(data) on dimension mismatch.
  std::vector<ScoredId> search(VectorKind kind, const EmbeddingVector& query,
                               std::size_t limit) const;

  std::size_t count(VectorKind kind) const;

 private:
  struct Partition {
    std::vector<std::uint64_t> ids;
    std::vector<double> data;  // row-major ids.size() x dim
    std::unordered_map<std::uint64_t, std::size_t> slot;
  };

  const Partition& part(VectorKind kind) const;
  Partition& part(VectorKind kind);

  std::size_t dim_;
  Partition episodes_, names_, summaries_, facts_;
};

}  // namespace hiermem
