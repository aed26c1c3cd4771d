#pragma once
// Chat-completions client for live oracle use. Wire format: OpenAI-style
// /v1/chat/completions (messages array, temperature 0 by default). Policies:
//   - transport retries: 3 attempts, exponential backoff from 1s, on
//     connection errors, 429, and 5xx only
//   - JSON repair: one reprompt carrying the validation error, then a hard
//     Error(oracle_unavailable) — silent best-effort parsing is off the table
// The HTTP layer is injectable so tests can run the full client against a
// canned or in-process transport.

#include <functional>
#include <string>

#include "hiermem/oracle.hpp"
#include "hiermem/prompts.hpp"

namespace hiermem {

struct RemoteOracleConfig {
  std::string endpoint;  // base URL, e.g. http://host:port
  std::string model;
  std::string api_key;   // sent as a Bearer token when non-empty
  double temperature = 0.0;
  int max_attempts = 3;
  int backoff_initial_ms = 1000;
  int parallelism = 4;  // advisory bound for callers issuing parallel calls
};

class RemoteOracle final : public ConceptOracle {
 public:
  explicit RemoteOracle(RemoteOracleConfig config);

  // Takes the serialized request body, returns the raw response body.
  // Throwing Error(oracle_unavailable) marks the attempt retryable.
  using Transport = std::function<std::string(const std::string& body)>;
  void set_transport(Transport transport) { transport_ = std::move(transport); }

  std::vector<std::string> extract_entity_names(
      const EpisodeRecord& current,
      const std::vector<EpisodeRecord>& recent) override;
  std::vector<std::string> reflect_missing_names(
      const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
      const std::vector<std::string>& already_found) override;
  DuplicateVerdict resolve_duplicates(
      const std::string& candidate_name,
      const std::vector<EntityRecord>& matched_existing) override;
  EntityAttributes extract_entity_attributes(
      const std::string& name, const EpisodeRecord& current,
      const std::vector<EpisodeRecord>& recent) override;
  std::vector<EdgeDraft> extract_edges(
      const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
      const std::vector<EntityRecord>& entities) override;
  std::vector<EdgeDraft> reflect_missing_edges(
      const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
      const std::vector<EntityRecord>& entities,
      const std::vector<EdgeDraft>& already_found) override;
  DuplicateVerdict resolve_edge_duplicates(
      const std::string& candidate_fact,
      const std::vector<RelationEdge>& matched_existing) override;
  CategorizationResult categorize_nodes(
      int layer, const std::vector<CategorizationNode>& nodes,
      const std::vector<ExistingCategory>& existing_categories, int n,
      int attempt) override;
  NodeSelection select_nodes(const std::string& query,
                             const std::vector<OfferedNode>& offered) override;
  std::string answer(const std::string& query,
                     const std::string& assembled_context) override;
  int judge(const std::string& question, const std::string& gold,
            const std::string& predicted) override;

 private:
  // One chat call with transport retries; returns the assistant text.
  std::string chat(const prompts::Messages& messages);
  // chat + parse with the one-reprompt repair policy. `parse` throws
  // Error(data) describing the schema violation.
  template <typename T>
  T ask(prompts::Messages messages,
        const std::function<T(const std::string&)>& parse);

  RemoteOracleConfig config_;
  Transport transport_;
};

}  // namespace hiermem
