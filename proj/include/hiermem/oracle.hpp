#pragma once
// The concept oracle: one seam for every judgment the pipeline delegates to
// a language model — name extraction, reflection, duplicate resolution,
// attribute extraction, edge drafting, categorization, node selection,
// answering, and grading. Two implementations:
//   - ScriptedOracle: a pure function of (request, fixture); hermetic tests
//     run the whole engine through it with zero network access.
//   - RemoteOracle: an OpenAI-compatible chat-completions client.
// Every response is schema-validated before it leaves this module.

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hiermem/types.hpp"

namespace hiermem {

// Cumulative request accounting, mirrored into pipeline reports.
struct OracleUsage {
  std::uint64_t calls = 0;
  std::uint64_t request_chars = 0;
  std::uint64_t response_chars = 0;
};

// One category produced by categorize_nodes: a name, the indexes of the
// offered nodes it covers, and optional descriptor tags (max 5, each max
// 3 words).
struct CategoryAssignment {
  std::string category;
  std::vector<std::size_t> indexes;
  std::vector<std::string> tag;
};
using CategorizationResult = std::vector<CategoryAssignment>;

// Node offered to categorize_nodes: display name plus a brief description
// (rendered as "i. name: [description]" in the prompt).
struct CategorizationNode {
  std::string name;
  std::string description;
};

// Category offered for reuse ("EXISTING CATEGORIES" in the prompt).
struct ExistingCategory {
  std::string name;
  std::string description;
};

// Node offered to select_nodes during top-down traversal.
struct OfferedNode {
  std::string name;
  NodeId uuid;
  std::vector<std::string> tags;
  int layer = 0;
};

// One selection: get_all_children short-circuits traversal below the node.
struct SelectedNode {
  std::string name;
  NodeId uuid;
  bool get_all_children = false;
};
using NodeSelection = std::vector<SelectedNode>;

// Duplicate-resolution verdict: same_as.valid() ? merge target : new node.
struct DuplicateVerdict {
  NodeId same_as;
};

struct EntityAttributes {
  std::string summary;
  std::vector<std::string> tag;
};

// Edge proposed by extraction; endpoints are names from the offered entity
// list. Unset valid_at means "the episode's timestamp".
struct EdgeDraft {
  std::string source_name;
  std::string target_name;
  std::string fact;
  std::optional<Timestamp> valid_at;
  std::optional<Timestamp> invalid_at;
};

class ConceptOracle {
 public:
  virtual ~ConceptOracle() = default;

  // Candidate entity surface forms in the current episode, with the recent
  // episodes as context. Case-insensitively de-duplicated.
  virtual std::vector<std::string> extract_entity_names(
      const EpisodeRecord& current,
      const std::vector<EpisodeRecord>& recent) = 0;

  // Second-chance pass for names the first pass missed; disjoint from
  // already_found (enforced here, whatever the model replies).
  virtual std::vector<std::string> reflect_missing_names(
      const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
      const std::vector<std::string>& already_found) = 0;

  // Is the candidate the same real-world entity as one of the offered
  // records? A verdict naming an unoffered id is a schema violation and
  // degrades to "new" with a warning.
  virtual DuplicateVerdict resolve_duplicates(
      const std::string& candidate_name,
      const std::vector<EntityRecord>& matched_existing) = 0;

  // Summary and tags for one extracted name. Summary is never empty (falls
  // back to the name itself); oversized tags are truncated with a warning.
  virtual EntityAttributes extract_entity_attributes(
      const std::string& name, const EpisodeRecord& current,
      const std::vector<EpisodeRecord>& recent) = 0;

  // Relation drafts between offered entities. Drafts naming unknown
  // entities are dropped by the caller.
  virtual std::vector<EdgeDraft> extract_edges(
      const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
      const std::vector<EntityRecord>& entities) = 0;

  // Reflection pass over edges, mirroring reflect_missing_names.
  virtual std::vector<EdgeDraft> reflect_missing_edges(
      const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
      const std::vector<EntityRecord>& entities,
      const std::vector<EdgeDraft>& already_found) = 0;

  // Resolve-style confirmation for edge dedup: does the draft fact state
  // the same relation as one of the embedding-similar existing edges?
  virtual DuplicateVerdict resolve_edge_duplicates(
      const std::string& candidate_fact,
      const std::vector<RelationEdge>& matched_existing) = 0;

  // Group the offered nodes into categories (layer >= 1). `attempt` is 1
  // for the first pass and 2 for the single coarsening retry after a
  // compression-constraint failure. Every returned index is in range and
  // names obey the connector-word ban and the Speaker rule.
  virtual CategorizationResult categorize_nodes(
      int layer, const std::vector<CategorizationNode>& nodes,
      const std::vector<ExistingCategory>& existing_categories, int n,
      int attempt) = 0;

  // Pick the offered nodes worth expanding for the query; may be empty.
  virtual NodeSelection select_nodes(
      const std::string& query, const std::vector<OfferedNode>& offered) = 0;

  // Final answer from the assembled evidence context.
  virtual std::string answer(const std::string& query,
                             const std::string& assembled_context) = 0;

  // Binary grading of predicted against gold.
  virtual int judge(const std::string& question, const std::string& gold,
                    const std::string& predicted) = 0;

  // Counters are mutex-guarded so evaluation may fan cases out to threads.
  OracleUsage usage() const {
    std::lock_guard<std::mutex> lock(usage_mutex_);
    return usage_;
  }
  void reset_usage() {
    std::lock_guard<std::mutex> lock(usage_mutex_);
    usage_ = {};
  }

  // Non-fatal schema degradations are reported here (defaults to dropping
  // them); ingestion wires this into its report.
  void set_warning_sink(std::function<void(const std::string&)> sink) {
    warning_sink_ = std::move(sink);
  }

 protected:
  void count_call(std::size_t request_chars, std::size_t response_chars) {
    std::lock_guard<std::mutex> lock(usage_mutex_);
    ++usage_.calls;
    usage_.request_chars += request_chars;
    usage_.response_chars += response_chars;
  }
  void warn(const std::string& message) {
    if (warning_sink_) warning_sink_(message);
  }

 private:
  mutable std::mutex usage_mutex_;
  OracleUsage usage_;
  std::function<void(const std::string&)> warning_sink_;
};

// Validation shared by both implementations (and exercised directly in
// tests): range checks, the connector-word ban, the Speaker rule.
// Returns violations; empty means valid.
std::vector<std::string> validate_categorization(
    const CategorizationResult& result, std::size_t node_count,
    const std::vector<CategorizationNode>& nodes);

// True for "user" and first-person aliases ("i", "me"), the names the
// categorization prompt forces into the "Speaker" category.
bool is_speaker_alias(const std::string& name);

inline constexpr const char* kSpeakerCategoryName = "Speaker";
inline constexpr const char* kInsufficientMemoryAnswer = "insufficient memory";

}  // namespace hiermem
