#include "hiermem/vector_index.hpp"

#include <algorithm>

#include "hiermem/kernels.hpp"

namespace hiermem {

void VectorIndex::upsert(VectorKind kind, NodeId id, const EmbeddingVector& v) {
  if (v.size() != dim_)
    throw Error(ErrorKind::data, "vector index: dimension mismatch");
  auto& p = part(kind);
  const auto it = p.slot.find(id.value);
  std::size_t slot;
  if (it != p.slot.end()) {
    slot = it->second;
  } else {
    slot = p.ids.size();
    p.ids.push_back(id.value);
    p.data.resize(p.data.size() + dim_);
    p.slot.emplace(id.value, slot);
  }
  std::copy(v.begin(), v.end(), p.data.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
}

void VectorIndex::remove(VectorKind kind, NodeId id) {
  auto& p = part(kind);
  const auto it = p.slot.find(id.value);
  if (it == p.slot.end()) return;
  const std::size_t slot = it->second;
  const std::size_t last = p.ids.size() - 1;
  if (slot != last) {
    p.ids[slot] = p.ids[last];
    std::copy(p.data.begin() + static_cast<std::ptrdiff_t>(last * dim_),
              p.data.begin() + static_cast<std::ptrdiff_t>((last + 1) * dim_),
              p.data.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
    p.slot[p.ids[slot]] = slot;
  }
  p.ids.pop_back();
  p.data.resize(p.data.size() - dim_);
  p.slot.erase(it);
}

void VectorIndex::clear() {
  episodes_ = {};
  names_ = {};
  summaries_ = {};
  facts_ = {};
}

std::vector<ScoredId> VectorIndex::search(VectorKind kind,
                                          const EmbeddingVector& query,
                                          std::size_t limit) const {
  if (query.size() != dim_)
    throw Error(ErrorKind::data, "vector search: query dimension " +
                                     std::to_string(query.size()) +
                                     " != index dimension " +
                                     std::to_string(dim_));
  const auto& p = part(kind);
  const std::size_t n = p.ids.size();
  if (n == 0 || limit == 0) return {};

  EmbeddingVector q = query;
  const double norm = vector_norm(q);
  if (norm > 0.0)
    for (double& x : q) x /= norm;

  std::vector<double> scores(n);
  kernels::cosine_scores(q.data(), p.data.data(), n, dim_, scores.data());

  const auto order = kernels::top_k_indices(scores.data(), p.ids.data(), n,
                                            std::min(limit, n));
  std::vector<ScoredId> out;
  out.reserve(order.size());
  for (std::size_t idx : order) out.push_back({NodeId{p.ids[idx]}, scores[idx]});
  return out;
}

std::size_t VectorIndex::count(VectorKind kind) const {
  return part(kind).ids.size();
}

const VectorIndex::Partition& VectorIndex::part(VectorKind kind) const {
  switch (kind) {
    case VectorKind::episode_embedding: return episodes_;
    case VectorKind::entity_name: return names_;
    case VectorKind::entity_summary: return summaries_;
    case VectorKind::edge_fact: return facts_;
  }
  throw Error(ErrorKind::usage, "unknown vector kind");
}

VectorIndex::Partition& VectorIndex::part(VectorKind kind) {
  return const_cast<Partition&>(
      static_cast<const VectorIndex*>(this)->part(kind));
}

}  // namespace hiermem
