#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiermem/embedder.hpp"
#include "hiermem/oracle.hpp"
#include "hiermem/store.hpp"

namespace hiermem {

// One conversational message as loaded from a corpus.
struct Message {
  std::string speaker;
  std::string text;
  Timestamp timestamp;
  std::string session_id;
};

enum class ChunkPolicy { per_turn, per_exchange };

struct IngestConfig {
  std::size_t recent_window = 4;     // context episodes per extraction call
  std::size_t dedup_candidates = 5;  // per index, before fusion
  double edge_dedup_threshold = 0.9; // fact-embedding cosine gate
  double rrf_c = 0.0;
  ChunkPolicy chunking = ChunkPolicy::per_turn;
  bool allow_reflexive_edges = false;

  void validate() const;  // Error(config) on out-of-range values
};

struct IngestReport {
  std::size_t episodes_created = 0;
  std::size_t entities_created = 0;
  std::size_t entities_merged = 0;
  std::size_t edges_created = 0;
  std::size_t edges_merged = 0;
  std::uint64_t oracle_calls = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

// Episode text waiting to be ingested; content already carries the
// "speaker: " prefix.
struct EpisodeDraft {
  std::string content;
  Timestamp valid_at;
  std::string session_id;
};

// Default: one episode per turn. per_exchange pairs consecutive
// same-session turns into one episode (a trailing unpaired turn stands
// alone).
std::vector<EpisodeDraft> episode_chunking(const std::vector<Message>& messages,
                                           ChunkPolicy policy);

// Runs the full per-episode pipeline: episode record, recent context,
// name extraction + reflection, fused candidate lookup + duplicate
// resolution, attribute extraction, merge-or-create, edge extraction +
// reflection + per-pair dedup, then a single commit. An oracle failure
// aborts at the episode boundary: everything already committed stays,
// nothing from the failing episode becomes visible.
IngestReport ingest(MemoryStore& store, ConceptOracle& oracle,
                    const Embedder& embedder,
                    const std::vector<Message>& messages,
                    const IngestConfig& config = {});

}  // namespace hiermem
