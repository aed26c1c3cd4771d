#pragma once
// Deterministic fixture-driven oracle. Every judgment is a pure function of
// (request, fixture), so end-to-end tests are hermetic and bit-reproducible.
//
// Fixture JSON (all keys optional):
//   lexicon      ["Dave", "Detroit", ...]      names recognized in text,
//                                              reported in lexicon order
//   withhold     ["Detroit"]                   names the first extraction
//                                              pass misses (reflection
//                                              recovers them)
//   aliases      {"motor city": "Detroit"}     lowercased surface -> canon
//   summaries    {"Dave": "..."}               fixed summaries; otherwise
//                                              "<name> mentioned in episode
//                                              <id>" (name itself when the
//                                              episode text is empty)
//   tags         {"Dave": ["Engineer"]}        entity tag lists
//   edges        [{source, target, fact,       drafted when `trigger`
//                  trigger?, valid_at?,        (default: the fact) appears
//                  invalid_at?, withhold?}]    in the episode text
//   taxonomy     {"Dave": ["People"]}          node name -> parent category
//                                              names, used at every layer
//   retry_taxonomy  {...}                      coarser map used on the
//                                              categorization retry pass
//   category_tags   {"People": ["Humans"]}     tags for created categories
//   keywords     {"People": ["who"]}           select_nodes: category is
//                                              picked when a keyword (or
//                                              its own name) occurs in the
//                                              query
//   select_all_children  ["People"]            names selected with
//                                              get_all_children = true
//
// Name and trigger matching is token-based (the index tokenizer), so
// punctuation and case never matter.

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiermem/oracle.hpp"

namespace hiermem {

class ScriptedOracle final : public ConceptOracle {
 public:
  ScriptedOracle() : ScriptedOracle(nlohmann::json::object()) {}
  explicit ScriptedOracle(const nlohmann::json& fixture);
  static std::unique_ptr<ScriptedOracle> from_file(const std::string& path);

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
  struct FixtureEdge {
    std::string source;
    std::string target;
    std::string fact;
    std::vector<std::string> trigger_tokens;
    std::optional<Timestamp> valid_at;
    std::optional<Timestamp> invalid_at;
    bool withheld = false;
  };

  // Lowercased canonical form: alias table applied, else the name itself.
  std::string canonical(const std::string& name) const;
  std::vector<std::string> scan(const EpisodeRecord& episode,
                                bool withheld_only) const;
  std::vector<EdgeDraft> scan_edges(const EpisodeRecord& current,
                                    const std::vector<EntityRecord>& entities,
                                    bool withheld_only) const;

  std::vector<std::string> lexicon_;
  std::set<std::string> withheld_;  // lowercased
  std::map<std::string, std::string> aliases_;  // lowercased -> canonical
  std::map<std::string, std::string> summaries_;
  std::map<std::string, std::vector<std::string>> tags_;
  std::vector<FixtureEdge> edges_;
  std::map<std::string, std::vector<std::string>> taxonomy_;
  std::map<std::string, std::vector<std::string>> retry_taxonomy_;
  std::map<std::string, std::vector<std::string>> category_tags_;
  std::map<std::string, std::vector<std::string>> keywords_;
  std::set<std::string> select_all_children_;
};

}  // namespace hiermem
