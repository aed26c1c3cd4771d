#pragma once
// Query-time engine. Two routes feed one evidence pool:
//   System-1: BM25 + cosine search per item kind, fused with reciprocal
//             rank fusion at a 2x candidate depth, truncated per kind.
//   System-2: top-down traversal of the category hierarchy driven by the
//             oracle's node selections; selected entities pull in their
//             episodes and incident edges. Output is unordered.
// The union is re-ranked per kind (entities and categories share one pool)
// and truncated to the budget: k episodes, 2k entities, 2k edges.

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiermem/embedder.hpp"
#include "hiermem/oracle.hpp"
#include "hiermem/store.hpp"

namespace hiermem {

enum class ItemKind { episode, entity, category, edge };
enum class Route { system1_lexical, system1_vector, system2 };

const char* item_kind_label(ItemKind kind);
const char* route_label(Route route);

struct RankedItem {
  ItemKind kind;
  NodeId id;
  std::string display_text;  // episode content; "name: summary"; edge fact
                             // with its validity span
  double score = 0.0;
  int layer = 0;             // > 0 for categories
  std::set<Route> route;
  std::map<std::string, std::size_t> rank_positions;  // source -> 1-based rank
};

// k episodes; entities (including categories) and edges get 2k each.
struct SearchBudget {
  int k = 10;
  int entity_edge_limit() const { return 2 * k; }
};

struct RetrievalConfig {
  SearchBudget budget;
  double rrf_c = 0.0;  // the engine's reading of RRF; 60 = classical
  int candidate_depth_factor = 2;
  bool use_system1 = true;
  bool use_system2 = true;
};

// Reciprocal rank fusion: score(x) = sum over lists containing x of
// 1/(c + rank), ranks 1-based. Descending score; ties broken by earliest
// best rank, then ascending id.
std::vector<ScoredId> rrf_fuse(const std::vector<std::vector<NodeId>>& lists,
                               double c);

// ---------------------------------------------------------------------------
// Re-ranking

class Reranker {
 public:
  virtual ~Reranker() = default;
  // One relevance score per text, higher = more relevant.
  virtual std::vector<double> score(const std::string& query,
                                    const std::vector<std::string>& texts) = 0;
};

// Hermetic default: length-normalized weighted token overlap. A text scores
// the summed lengths of the unique query tokens it contains, divided by
// sqrt of its unique-token count — shared rare long tokens beat sheer bulk.
class LexicalReranker final : public Reranker {
 public:
  std::vector<double> score(const std::string& query,
                            const std::vector<std::string>& texts) override;
};

struct RemoteRerankerConfig {
  std::string endpoint;
  std::string model;
  std::string api_key;
};

// POSTs /v1/rerank; any failure falls back to the lexical scorer via the
// retrieval layer (spec'd degradation, not an error).
class RemoteReranker final : public Reranker {
 public:
  explicit RemoteReranker(RemoteRerankerConfig config)
      : config_(std::move(config)) {}
  std::vector<double> score(const std::string& query,
                            const std::vector<std::string>& texts) override;

 private:
  RemoteRerankerConfig config_;
};

// Sorts items by re-ranker score (descending, ties by ascending id) and
// writes the scores back. Falls back to LexicalReranker with a warning
// pushed to `warnings` when the given re-ranker throws.
std::vector<RankedItem> rerank(const std::string& query,
                               std::vector<RankedItem> items,
                               Reranker& reranker,
                               std::vector<std::string>& warnings);

// ---------------------------------------------------------------------------
// Routes

struct RouteLists {
  std::vector<RankedItem> episodes;
  std::vector<RankedItem> entities;  // entities and categories, one pool
  std::vector<RankedItem> edges;
};

// Trace/report rendering shared by retrieval and the CLI.
nlohmann::json to_json(const std::vector<RankedItem>& items);
nlohmann::json to_json(const RouteLists& lists);

// System-1 hybrid search. Empty query (no tokens) returns empty lists.
RouteLists similarity_search(const MemoryStore& store, const Embedder& embedder,
                             const std::string& query,
                             const RetrievalConfig& config);

struct GlobalSelectionResult {
  std::vector<RankedItem> items;  // unordered; route = system2
  nlohmann::json trace;           // per-layer offered/selected names
  bool hierarchy_empty = false;
  bool empty_selection = false;   // top-layer selection came back empty
};

// System-2 traversal; scores are left 0 (the re-ranker orders the union).
GlobalSelectionResult global_selection(const MemoryStore& store,
                                       ConceptOracle& oracle,
                                       const std::string& query);

struct CombinedResult {
  RouteLists final_lists;
  nlohmann::json trace;
  std::vector<std::string> warnings;
};

CombinedResult combined_search(const MemoryStore& store, ConceptOracle& oracle,
                               const Embedder& embedder,
                               const std::string& query,
                               const RetrievalConfig& config,
                               Reranker& reranker);

// Deterministic answer-model context: EPISODES (timestamped), ENTITIES
// (categories marked with their layer), FACTS (validity span rendered
// "(2023-06-17 - now)"). Headers always present.
std::string assemble_context(const MemoryStore& store,
                             const RouteLists& lists);

// Validity span for a relation edge, as rendered in context and display
// text: "(<valid date> - <invalid date or now>)".
std::string render_validity_span(const RelationEdge& edge);

struct AnswerResult {
  std::string answer;
  RouteLists evidence;
  nlohmann::json trace;
};

AnswerResult answer_query(const MemoryStore& store, ConceptOracle& oracle,
                          const Embedder& embedder, const std::string& query,
                          const RetrievalConfig& config, Reranker& reranker);

}  // namespace hiermem
