#pragma once
// The memory store: a property graph of episodes, entities, and relation
// edges (the base graph) plus an immutable hierarchy generation of
// categories (the hierarchical graph), with in-memory lexical/vector
// indexes kept in sync on every mutation and a single-file snapshot format.
//
// Concurrency contract: any number of readers; ingestion and hierarchy
// builds are each a single exclusive writer. Only the hierarchy swap is
// atomic with respect to readers — readers hold a shared_ptr to one
// generation and never observe a mix of two.

#include <map>
#include <memory>
#include <set>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "hiermem/lexical_index.hpp"
#include "hiermem/types.hpp"
#include "hiermem/vector_index.hpp"

namespace hiermem {

struct StoreConfig {
  std::size_t embedding_dim = kDefaultEmbeddingDim;
  int compression_ratio = 3;  // minimum children per non-promoted category
  int max_layers = 5;         // hierarchy build ceiling
  int top_k = 10;             // retrieval budget k (episodes; 2k for the rest)
  Bm25Params bm25;            // lexical index scoring knobs
};

// One immutable hierarchy build result. Readers pin a generation with a
// shared_ptr; a rebuild publishes a fresh one and never mutates an old one.
struct HierarchyGeneration {
  std::uint64_t generation = 0;  // 0 = the empty pre-build generation
  std::map<NodeId, CategoryRecord> categories;
  std::vector<CategoryEdge> edges;  // sorted (parent, child)
  std::map<NodeId, std::vector<NodeId>> children;  // parent -> ascending ids
  std::map<NodeId, std::vector<NodeId>> parents;   // child -> ascending ids
  int max_layer = 0;          // 0 when no hierarchy is built
  std::vector<NodeId> top;    // categories at max_layer, ascending

  bool empty() const { return categories.empty(); }
};

class MemoryStore {
 public:
  explicit MemoryStore(StoreConfig config = {});

  MemoryStore(const MemoryStore&) = delete;
  MemoryStore& operator=(const MemoryStore&) = delete;

  const StoreConfig& config() const { return config_; }

  // Fresh never-used id. Ids are never reused, so they are stable across
  // snapshot save/load.
  NodeId allocate_id();

  // Insert or replace; id 0 means "assign one". Validates type invariants
  // and referential integrity and keeps both indexes in sync.
  // Throws Error(data) listing every violation.
  NodeId upsert(EpisodeRecord r);
  NodeId upsert(EntityRecord r);
  NodeId upsert(RelationEdge r);
  // Categories enter only through swap_hierarchy; this guards against
  // accidentally slicing one into the entity overload.
  NodeId upsert(const CategoryRecord&) = delete;

  bool has_episode(NodeId id) const { return episodes_.count(id) != 0; }
  bool has_entity(NodeId id) const { return entities_.count(id) != 0; }

  // Throw Error(data) when the id is unknown.
  const EpisodeRecord& episode(NodeId id) const;
  const EntityRecord& entity(NodeId id) const;
  const RelationEdge& relation_edge(NodeId id) const;

  // The `count` most recent episodes with valid_at strictly before
  // `before`, descending by valid_at (ties: descending id).
  std::vector<EpisodeRecord> recent_episodes(Timestamp before,
                                             std::size_t count) const;

  // Episodes linked to the entity by episodic edges, ascending id.
  std::vector<EpisodeRecord> episodes_of(NodeId entity) const;

  // Every relation edge incident to the entity, paired with the opposite
  // endpoint, ascending edge id.
  std::vector<std::pair<RelationEdge, EntityRecord>> edges_of(
      NodeId entity) const;

  // Layer 0: all entities. Layer >= 1: the current generation's categories
  // at that layer (sliced to the shared record core; the promoted flag
  // lives on the generation). Ascending id. Error(usage) on negative layer.
  std::vector<EntityRecord> nodes_at_layer(int layer) const;

  // The current hierarchy generation (never null; generation 0 is empty).
  std::shared_ptr<const HierarchyGeneration> hierarchy() const;

  // Validates the new hierarchy (layer-difference-one edges, referential
  // integrity against entities and the new category set, at least one child
  // per category) and publishes it atomically. Returns the displaced
  // generation. On violation throws Error(data) and keeps the old one.
  std::shared_ptr<const HierarchyGeneration> swap_hierarchy(
      std::vector<CategoryRecord> categories, std::vector<CategoryEdge> edges);

  // System-1 search passthroughs.
  std::vector<ScoredId> bm25_search(IndexKind kind, const std::string& query,
                                    std::size_t limit) const;
  std::vector<ScoredId> vector_search(VectorKind kind,
                                      const EmbeddingVector& query,
                                      std::size_t limit) const;

  const std::map<NodeId, EpisodeRecord>& episodes() const { return episodes_; }
  const std::map<NodeId, EntityRecord>& entities() const { return entities_; }
  const std::map<NodeId, RelationEdge>& relation_edges() const {
    return relation_edges_;
  }
  const std::set<EpisodicEdge>& episodic_edges() const {
    return episodic_edges_;
  }

  // Full-store invariant scan; empty means healthy. Covers referential
  // integrity, episode_idx/episodic-edge lockstep, embedding dimensions,
  // and the hierarchy's layer rule.
  std::vector<std::string> audit() const;

  // Single-file snapshot: a manifest line (schema version, dimension,
  // config, counts, per-section checksums, next id) followed by one JSON
  // record per line, sections in a fixed order. Written via a temp file +
  // rename so a crash never leaves a half-written snapshot behind.
  void save_snapshot(const std::string& path) const;
  // Throws Error(data) citing the offending line on any corruption;
  // never returns a partial store.
  static std::unique_ptr<MemoryStore> load_snapshot(const std::string& path);

 private:
  void index_entity(const EntityRecord& r);
  void check_or_adopt_id(NodeId& id);
  [[noreturn]] void reject(const char* what, NodeId id,
                           const std::vector<std::string>& violations) const;

  StoreConfig config_;
  std::uint64_t next_id_ = 1;

  std::map<NodeId, EpisodeRecord> episodes_;
  std::map<NodeId, EntityRecord> entities_;
  std::map<NodeId, RelationEdge> relation_edges_;
  std::set<EpisodicEdge> episodic_edges_;          // derived, kept in lockstep
  std::map<NodeId, std::set<NodeId>> incident_;    // entity -> relation edges

  LexicalIndex lexical_;
  VectorIndex vectors_;

  mutable std::shared_mutex hierarchy_mutex_;
  std::shared_ptr<const HierarchyGeneration> hierarchy_;
};

}  // namespace hiermem
