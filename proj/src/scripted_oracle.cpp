#include "hiermem/scripted_oracle.hpp"

#include <algorithm>
#include <fstream>

#include "hiermem/lexical_index.hpp"

namespace hiermem {

namespace {

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

// Contiguous subsequence match over token vectors.
bool contains_tokens(const std::vector<std::string>& haystack,
                     const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(),
                     needle.end()) != haystack.end();
}

std::map<std::string, std::vector<std::string>> read_string_list_map(
    const nlohmann::json& fixture, const char* key) {
  std::map<std::string, std::vector<std::string>> out;
  if (auto it = fixture.find(key); it != fixture.end()) {
    if (!it->is_object())
      throw Error(ErrorKind::config,
                  std::string("fixture ") + key + " must be an object");
    for (const auto& [name, list] : it->items()) {
      if (!list.is_array())
        throw Error(ErrorKind::config, std::string("fixture ") + key + "[\"" +
                                           name + "\"] must be an array");
      out[name] = list.get<std::vector<std::string>>();
    }
  }
  return out;
}

}  // namespace

bool is_speaker_alias(const std::string& name) {
  const std::string l = lower(name);
  return l == "user" || l == "i" || l == "me";
}

std::vector<std::string> validate_categorization(
    const CategorizationResult& result, std::size_t node_count,
    const std::vector<CategorizationNode>& nodes) {
  std::vector<std::string> out;
  std::set<std::size_t> covered;
  for (const auto& cat : result) {
    if (cat.category.empty()) out.push_back("empty category name");
    if (name_contains_standalone_and(cat.category))
      out.push_back("category \"" + cat.category +
                    "\" uses \"and\" as a connector");
    for (std::size_t i : cat.indexes) {
      if (i >= node_count)
        out.push_back("category \"" + cat.category + "\" references index " +
                      std::to_string(i) + " out of range");
      else
        covered.insert(i);
    }
  }
  for (std::size_t i = 0; i < node_count; ++i) {
    if (!covered.count(i))
      out.push_back("node index " + std::to_string(i) + " left ungrouped");
    if (i < nodes.size() && is_speaker_alias(nodes[i].name)) {
      bool in_speaker = false;
      for (const auto& cat : result)
        if (cat.category == kSpeakerCategoryName &&
            std::find(cat.indexes.begin(), cat.indexes.end(), i) !=
                cat.indexes.end())
          in_speaker = true;
      if (!in_speaker)
        out.push_back("speaker node \"" + nodes[i].name +
                      "\" is not in the Speaker category");
    }
  }
  return out;
}

ScriptedOracle::ScriptedOracle(const nlohmann::json& fixture) {
  if (!fixture.is_object())
    throw Error(ErrorKind::config, "oracle fixture must be a JSON object");

  if (auto it = fixture.find("lexicon"); it != fixture.end())
    lexicon_ = it->get<std::vector<std::string>>();
  if (auto it = fixture.find("withhold"); it != fixture.end())
    for (const auto& name : it->get<std::vector<std::string>>())
      withheld_.insert(lower(name));
  if (auto it = fixture.find("aliases"); it != fixture.end())
    for (const auto& [surface, canon] : it->items())
      aliases_[lower(surface)] = canon.get<std::string>();
  if (auto it = fixture.find("summaries"); it != fixture.end())
    for (const auto& [name, text] : it->items())
      summaries_[name] = text.get<std::string>();
  tags_ = read_string_list_map(fixture, "tags");
  taxonomy_ = read_string_list_map(fixture, "taxonomy");
  retry_taxonomy_ = read_string_list_map(fixture, "retry_taxonomy");
  category_tags_ = read_string_list_map(fixture, "category_tags");
  keywords_ = read_string_list_map(fixture, "keywords");
  if (auto it = fixture.find("select_all_children"); it != fixture.end())
    for (const auto& name : it->get<std::vector<std::string>>())
      select_all_children_.insert(name);

  if (auto it = fixture.find("edges"); it != fixture.end()) {
    for (const auto& e : *it) {
      FixtureEdge fe;
      fe.source = e.at("source").get<std::string>();
      fe.target = e.at("target").get<std::string>();
      fe.fact = e.at("fact").get<std::string>();
      const std::string trigger =
          e.contains("trigger") ? e.at("trigger").get<std::string>() : fe.fact;
      fe.trigger_tokens = tokenize(trigger);
      if (e.contains("valid_at"))
        fe.valid_at = Timestamp::parse(e.at("valid_at").get<std::string>());
      if (e.contains("invalid_at"))
        fe.invalid_at = Timestamp::parse(e.at("invalid_at").get<std::string>());
      fe.withheld = e.value("withhold", false);
      edges_.push_back(std::move(fe));
    }
  }
}

std::unique_ptr<ScriptedOracle> ScriptedOracle::from_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open oracle fixture: " + path);
  nlohmann::json fixture = nlohmann::json::parse(in, nullptr,
                                                 /*allow_exceptions=*/false);
  if (fixture.is_discarded())
    throw Error(ErrorKind::config, "malformed oracle fixture: " + path);
  return std::make_unique<ScriptedOracle>(fixture);
}

std::string ScriptedOracle::canonical(const std::string& name) const {
  if (auto it = aliases_.find(lower(name)); it != aliases_.end())
    return lower(it->second);
  return lower(name);
}

std::vector<std::string> ScriptedOracle::scan(const EpisodeRecord& episode,
                                              bool withheld_only) const {
  const std::vector<std::string> content = tokenize(episode.content);
  std::vector<std::string> out;
  for (const std::string& term : lexicon_) {
    const bool held = withheld_.count(lower(term)) != 0;
    if (held != withheld_only) continue;
    if (contains_tokens(content, tokenize(term))) out.push_back(term);
  }
  return out;
}

std::vector<std::string> ScriptedOracle::extract_entity_names(
    const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent) {
  (void)recent;  // context only; the scripted rule reads the current text
  auto out = scan(current, /*withheld_only=*/false);
  count_call(current.content.size(), out.size());
  return out;
}

std::vector<std::string> ScriptedOracle::reflect_missing_names(
    const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
    const std::vector<std::string>& already_found) {
  (void)recent;
  std::set<std::string> seen;
  for (const auto& name : already_found) seen.insert(lower(name));
  std::vector<std::string> out;
  for (const auto& name : scan(current, /*withheld_only=*/true))
    if (!seen.count(lower(name))) out.push_back(name);
  count_call(current.content.size(), out.size());
  return out;
}

DuplicateVerdict ScriptedOracle::resolve_duplicates(
    const std::string& candidate_name,
    const std::vector<EntityRecord>& matched_existing) {
  count_call(candidate_name.size(), 1);
  const std::string canon = canonical(candidate_name);
  for (const EntityRecord& e : matched_existing)
    if (canonical(e.name) == canon) return DuplicateVerdict{e.id};
  return DuplicateVerdict{};
}

EntityAttributes ScriptedOracle::extract_entity_attributes(
    const std::string& name, const EpisodeRecord& current,
    const std::vector<EpisodeRecord>& recent) {
  (void)recent;
  EntityAttributes out;
  if (auto it = summaries_.find(name); it != summaries_.end())
    out.summary = it->second;
  else if (current.content.empty())
    out.summary = name;
  else
    out.summary = name + " mentioned in episode " + current.id.to_string();

  if (auto it = tags_.find(name); it != tags_.end()) out.tag = it->second;
  if (out.tag.size() > kMaxTags) {
    warn("entity \"" + name + "\": tag list truncated to 5 descriptors");
    out.tag.resize(kMaxTags);
  }
  for (auto& t : out.tag)
    if (word_count(t) > kMaxTagWords)
      warn("entity \"" + name + "\": tag descriptor \"" + t +
           "\" exceeds 3 words");
  count_call(name.size() + current.content.size(), out.summary.size());
  return out;
}

std::vector<EdgeDraft> ScriptedOracle::scan_edges(
    const EpisodeRecord& current, const std::vector<EntityRecord>& entities,
    bool withheld_only) const {
  std::set<std::string> offered;
  for (const EntityRecord& e : entities) offered.insert(canonical(e.name));

  const std::vector<std::string> content = tokenize(current.content);
  std::vector<EdgeDraft> out;
  for (const FixtureEdge& fe : edges_) {
    if (fe.withheld != withheld_only) continue;
    if (!offered.count(canonical(fe.source)) ||
        !offered.count(canonical(fe.target)))
      continue;
    if (canonical(fe.source) == canonical(fe.target)) continue;
    if (!contains_tokens(content, fe.trigger_tokens)) continue;
    out.push_back(EdgeDraft{fe.source, fe.target, fe.fact, fe.valid_at,
                            fe.invalid_at});
  }
  return out;
}

std::vector<EdgeDraft> ScriptedOracle::extract_edges(
    const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
    const std::vector<EntityRecord>& entities) {
  (void)recent;
  auto out = scan_edges(current, entities, /*withheld_only=*/false);
  count_call(current.content.size(), out.size());
  return out;
}

std::vector<EdgeDraft> ScriptedOracle::reflect_missing_edges(
    const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
    const std::vector<EntityRecord>& entities,
    const std::vector<EdgeDraft>& already_found) {
  (void)recent;
  std::vector<EdgeDraft> out;
  for (auto& draft : scan_edges(current, entities, /*withheld_only=*/true)) {
    const bool dup = std::any_of(
        already_found.begin(), already_found.end(), [&](const EdgeDraft& d) {
          return d.source_name == draft.source_name &&
                 d.target_name == draft.target_name && d.fact == draft.fact;
        });
    if (!dup) out.push_back(std::move(draft));
  }
  count_call(current.content.size(), out.size());
  return out;
}

DuplicateVerdict ScriptedOracle::resolve_edge_duplicates(
    const std::string& candidate_fact,
    const std::vector<RelationEdge>& matched_existing) {
  count_call(candidate_fact.size(), 1);
  const std::vector<std::string> candidate = tokenize(candidate_fact);
  for (const RelationEdge& e : matched_existing)
    if (tokenize(e.fact) == candidate) return DuplicateVerdict{e.id};
  return DuplicateVerdict{};
}

CategorizationResult ScriptedOracle::categorize_nodes(
    int layer, const std::vector<CategorizationNode>& nodes,
    const std::vector<ExistingCategory>& existing_categories, int n,
    int attempt) {
  (void)layer;
  (void)existing_categories;
  (void)n;
  const auto& map = (attempt >= 2 && !retry_taxonomy_.empty())
                        ? retry_taxonomy_
                        : taxonomy_;

  CategorizationResult result;
  std::map<std::string, std::size_t> slot;  // category name -> result index
  auto assign = [&](const std::string& category, std::size_t index) {
    auto [it, fresh] = slot.emplace(category, result.size());
    if (fresh) {
      CategoryAssignment cat;
      cat.category = category;
      if (auto t = category_tags_.find(category); t != category_tags_.end())
        cat.tag = t->second;
      result.push_back(std::move(cat));
    }
    result[it->second].indexes.push_back(index);
  };

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (is_speaker_alias(nodes[i].name)) {
      assign(kSpeakerCategoryName, i);
      continue;
    }
    auto it = map.find(nodes[i].name);
    if (it == map.end() || it->second.empty()) {
      // No taxonomy entry: the no-leftover rule forces a singleton category.
      assign(nodes[i].name, i);
      continue;
    }
    for (const std::string& category : it->second) assign(category, i);
  }

  if (auto v = validate_categorization(result, nodes.size(), nodes);
      !v.empty())
    throw Error(ErrorKind::config,
                "scripted taxonomy produced an invalid categorization: " +
                    v.front());
  count_call(nodes.size(), result.size());
  return result;
}

NodeSelection ScriptedOracle::select_nodes(
    const std::string& query, const std::vector<OfferedNode>& offered) {
  const std::vector<std::string> query_tokens = tokenize(query);
  NodeSelection out;
  for (const OfferedNode& node : offered) {
    bool hit = contains_tokens(query_tokens, tokenize(node.name));
    if (!hit)
      if (auto it = keywords_.find(node.name); it != keywords_.end())
        for (const std::string& kw : it->second)
          if (contains_tokens(query_tokens, tokenize(kw))) {
            hit = true;
            break;
          }
    if (hit)
      out.push_back(SelectedNode{node.name, node.uuid,
                                 select_all_children_.count(node.name) != 0});
  }
  count_call(query.size() + offered.size(), out.size());
  return out;
}

std::string ScriptedOracle::answer(const std::string& query,
                                   const std::string& assembled_context) {
  count_call(query.size() + assembled_context.size(), 1);
  // Echo the highest-ranked evidence line so end-to-end answers are a pure
  // function of retrieval output.
  std::size_t start = 0;
  while (start < assembled_context.size()) {
    std::size_t end = assembled_context.find('\n', start);
    if (end == std::string::npos) end = assembled_context.size();
    const std::string line = assembled_context.substr(start, end - start);
    if (line.rfind("- ", 0) == 0) return line.substr(2);
    start = end + 1;
  }
  return kInsufficientMemoryAnswer;
}

int ScriptedOracle::judge(const std::string& question, const std::string& gold,
                          const std::string& predicted) {
  (void)question;
  count_call(gold.size() + predicted.size(), 1);
  const std::vector<std::string> gold_tokens = tokenize(gold);
  if (gold_tokens.empty()) return 1;
  return contains_tokens(tokenize(predicted), gold_tokens) ? 1 : 0;
}

}  // namespace hiermem
