#pragma once
// Core domain types of the memory engine: identifiers, timestamps,
// embeddings, and the graph records (episodes, entities, relation edges,
// categories). Plain value types; safe to copy across threads.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace hiermem {

// ---------------------------------------------------------------------------
// Errors

enum class ErrorKind {
  usage,              // bad arguments / flags
  data,               // malformed input, invariant violation, missing node
  oracle_unavailable, // remote judgment endpoint failed after retries
  config,             // inconsistent configuration (e.g. dimension mismatch)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// ---------------------------------------------------------------------------
// Identifiers

// Store-scoped identifier. 0 is reserved as "none"; ids are assigned from a
// monotone counter and never reused, so they stay stable across snapshots.
struct NodeId {
  std::uint64_t value = 0;

  bool valid() const { return value != 0; }
  auto operator<=>(const NodeId&) const = default;
  std::string to_string() const { return std::to_string(value); }
};

struct NodeIdHash {
  std::size_t operator()(const NodeId& id) const {
    return std::hash<std::uint64_t>{}(id.value);
  }
};

// ---------------------------------------------------------------------------
// Timestamps

// UTC instant with second resolution, stored as seconds since the Unix epoch.
// Rendered and parsed as RFC 3339 ("2023-06-17T09:00:00Z").
struct Timestamp {
  std::int64_t seconds = 0;

  auto operator<=>(const Timestamp&) const = default;

  std::string to_rfc3339() const;
  // Date-only rendering ("2023-06-17"), used for fact validity spans.
  std::string to_date() const;

  // Accepts RFC 3339 with "Z" or a numeric offset, optionally with a
  // fractional-second part (truncated), and the bare date form
  // "YYYY-MM-DD" (interpreted as midnight UTC). Throws Error(data) on
  // anything else.
  static Timestamp parse(const std::string& text);
};

// ---------------------------------------------------------------------------
// Embeddings

// Dense unit-or-zero vector. The dimension is fixed store-wide
// (default 128); components must be finite.
using EmbeddingVector = std::vector<double>;

inline constexpr std::size_t kDefaultEmbeddingDim = 128;

double vector_norm(const EmbeddingVector& v);
bool vector_is_finite(const EmbeddingVector& v);

// Keeps the first target_dim components and re-normalizes to unit length
// (prefix truncation of a larger embedding). A zero prefix stays zero.
// Throws Error(data) when target_dim exceeds the input dimension.
EmbeddingVector truncate_embedding(const EmbeddingVector& v, std::size_t target_dim);

// ---------------------------------------------------------------------------
// Records

inline constexpr std::size_t kMaxTags = 5;
inline constexpr std::size_t kMaxTagWords = 3;

// One raw historical text chunk.
struct EpisodeRecord {
  NodeId id;
  std::string content;
  Timestamp valid_at;
  EmbeddingVector episode_embedding;
  std::string source_session;
};

// A concrete named thing at layer 0. Categories reuse the same core fields
// with layer >= 1 (see CategoryRecord).
struct EntityRecord {
  NodeId id;
  std::string name;
  std::string summary;
  std::vector<std::string> tag;      // at most 5 descriptors, <= 3 words each
  std::set<NodeId> episode_idx;      // episodes this node appears in
  EmbeddingVector name_embedding;
  EmbeddingVector summary_embedding;
  int layer = 0;
};

// Abstract concept node at layer >= 1. `promoted` marks standalone
// categories created by singleton promotion; they are exempt from the
// minimum-children constraint.
struct CategoryRecord : EntityRecord {
  bool promoted = false;
};

// A verifiable fact linking two entities, valid over [valid_at, invalid_at).
struct RelationEdge {
  NodeId id;
  NodeId source;
  NodeId target;
  std::string fact;
  EmbeddingVector fact_embedding;
  Timestamp valid_at;
  std::optional<Timestamp> invalid_at;
};

// Entity -> episode link. Kept in lockstep with EntityRecord::episode_idx;
// the store derives these rather than persisting them separately.
struct EpisodicEdge {
  NodeId entity;
  NodeId episode;
  auto operator<=>(const EpisodicEdge&) const = default;
};

// Parent -> child link between adjacent layers (parent.layer = child.layer + 1).
// A child may have multiple parents.
struct CategoryEdge {
  NodeId parent;
  NodeId child;
  auto operator<=>(const CategoryEdge&) const = default;
};

// ---------------------------------------------------------------------------
// Record validation

// Returns human-readable invariant violations; empty means valid.
std::vector<std::string> validate(const EpisodeRecord& r, std::size_t dim);
std::vector<std::string> validate(const EntityRecord& r, std::size_t dim);
std::vector<std::string> validate(const CategoryRecord& r, std::size_t dim);
std::vector<std::string> validate(const RelationEdge& r, std::size_t dim,
                                  bool allow_reflexive = false);

// True when the name uses "and" as a standalone connector word
// (category names must not).
bool name_contains_standalone_and(const std::string& name);

std::size_t word_count(const std::string& text);

// ---------------------------------------------------------------------------
// Entity merging

class Embedder;  // see embedder.hpp

// Combines two records resolved as the same real-world entity:
// the existing canonical name is kept, the incoming summary wins,
// episode sets union, and tags union incoming-first truncated to 5.
// Embeddings are recomputed from the merged name and summary.
EntityRecord merge_entity_attributes(const EntityRecord& existing,
                                     const EntityRecord& incoming,
                                     const Embedder& embedder);

}  // namespace hiermem
