#include "hiermem/remote_oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace hiermem {

namespace {

using nlohmann::json;

// Strict parse after trimming whitespace and at most one markdown code
// fence; anything looser would paper over malformed model output.
json parse_payload(const std::string& raw) {
  std::string text = raw;
  auto trim = [](std::string& s) {
    const char* ws = " \t\r\n";
    const auto begin = s.find_first_not_of(ws);
    const auto end = s.find_last_not_of(ws);
    s = begin == std::string::npos ? "" : s.substr(begin, end - begin + 1);
  };
  trim(text);
  if (text.rfind("```", 0) == 0) {
    const auto first_newline = text.find('\n');
    const auto last_fence = text.rfind("```");
    if (first_newline != std::string::npos && last_fence > first_newline)
      text = text.substr(first_newline + 1, last_fence - first_newline - 1);
    trim(text);
  }
  json parsed = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded())
    throw Error(ErrorKind::data, "reply is not valid JSON");
  return parsed;
}

std::vector<std::string> parse_name_array(const std::string& raw) {
  json parsed = parse_payload(raw);
  if (!parsed.is_array())
    throw Error(ErrorKind::data, "expected a JSON array of name strings");
  std::vector<std::string> out;
  for (const auto& item : parsed) {
    if (!item.is_string())
      throw Error(ErrorKind::data, "expected every array element to be a string");
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

// Case-insensitive de-duplication preserving first occurrence.
std::vector<std::string> dedup_names(const std::vector<std::string>& names,
                                     const std::set<std::string>& exclude) {
  std::set<std::string> seen = exclude;
  std::vector<std::string> out;
  for (const auto& name : names)
    if (!name.empty() && seen.insert(lower(name)).second) out.push_back(name);
  return out;
}

std::string render_episode(const EpisodeRecord& e) {
  return "[" + e.valid_at.to_rfc3339() + "] " + e.content;
}

std::string render_episodes(const std::vector<EpisodeRecord>& eps) {
  std::string out;
  for (const auto& e : eps) {
    if (!out.empty()) out += '\n';
    out += render_episode(e);
  }
  return out;
}

json entity_json(const EntityRecord& e) {
  return json{{"id", e.id.value}, {"name", e.name}, {"summary", e.summary}};
}

// {"verdict": "same_as", "id": N} | {"verdict": "new"}
NodeId parse_verdict(const std::string& raw) {
  json parsed = parse_payload(raw);
  if (!parsed.is_object() || !parsed.contains("verdict") ||
      !parsed["verdict"].is_string())
    throw Error(ErrorKind::data,
                "expected {\"verdict\": \"same_as\"|\"new\", ...}");
  const std::string verdict = parsed["verdict"].get<std::string>();
  if (verdict == "new") return NodeId{};
  if (verdict != "same_as")
    throw Error(ErrorKind::data, "verdict must be \"same_as\" or \"new\"");
  if (!parsed.contains("id") || !parsed["id"].is_number_unsigned())
    throw Error(ErrorKind::data, "verdict same_as requires an unsigned id");
  return NodeId{parsed["id"].get<std::uint64_t>()};
}

}  // namespace

RemoteOracle::RemoteOracle(RemoteOracleConfig config)
    : config_(std::move(config)) {
  if (config_.endpoint.empty() && !transport_)
    throw Error(ErrorKind::config, "remote oracle needs an endpoint URL");
}

std::string RemoteOracle::chat(const prompts::Messages& messages) {
  json body{{"model", config_.model},
            {"temperature", config_.temperature},
            {"messages", json::array()}};
  for (const auto& m : messages)
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  const std::string request = body.dump();

  Transport transport = transport_;
  if (!transport) {
    transport = [this](const std::string& req) -> std::string {
      httplib::Client client(config_.endpoint);
      client.set_connection_timeout(10);
      client.set_read_timeout(120);
      httplib::Headers headers;
      if (!config_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + config_.api_key);
      auto res = client.Post("/v1/chat/completions", headers, req,
                             "application/json");
      if (!res)
        throw Error(ErrorKind::oracle_unavailable,
                    "oracle endpoint unreachable: " + config_.endpoint);
      if (res->status == 429 || res->status >= 500)
        throw Error(ErrorKind::oracle_unavailable,
                    "oracle endpoint returned status " +
                        std::to_string(res->status));
      if (res->status != 200)
        // Non-retryable client error (bad key, bad model, ...).
        throw Error(ErrorKind::config, "oracle endpoint rejected the request "
                                       "with status " +
                                           std::to_string(res->status));
      return res->body;
    };
  }

  std::string response_body;
  int backoff_ms = config_.backoff_initial_ms;
  for (int attempt = 1;; ++attempt) {
    try {
      response_body = transport(request);
      break;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::oracle_unavailable ||
          attempt >= config_.max_attempts)
        throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
  }

  json envelope = json::parse(response_body, nullptr,
                              /*allow_exceptions=*/false);
  if (envelope.is_discarded() || !envelope.contains("choices") ||
      !envelope["choices"].is_array() || envelope["choices"].empty() ||
      !envelope["choices"][0].contains("message") ||
      !envelope["choices"][0]["message"].contains("content") ||
      !envelope["choices"][0]["message"]["content"].is_string())
    throw Error(ErrorKind::oracle_unavailable,
                "oracle endpoint returned a malformed completion envelope");
  const std::string content =
      envelope["choices"][0]["message"]["content"].get<std::string>();
  count_call(request.size(), content.size());
  return content;
}

template <typename T>
T RemoteOracle::ask(prompts::Messages messages,
                    const std::function<T(const std::string&)>& parse) {
  const std::string raw = chat(messages);
  try {
    return parse(raw);
  } catch (const Error& first) {
    if (first.kind() != ErrorKind::data) throw;
    messages.push_back({"assistant", raw});
    messages.push_back({"user",
                        std::string("Your previous reply failed validation: ") +
                            first.what() +
                            ". Reply with ONLY valid JSON in the required "
                            "format, nothing else."});
    const std::string repaired = chat(messages);
    try {
      return parse(repaired);
    } catch (const Error& second) {
      if (second.kind() != ErrorKind::data) throw;
      throw Error(ErrorKind::oracle_unavailable,
                  std::string("oracle output failed validation twice: ") +
                      second.what());
    }
  }
}

std::vector<std::string> RemoteOracle::extract_entity_names(
    const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent) {
  auto names = ask<std::vector<std::string>>(
      prompts::entity_extraction(render_episode(current),
                                 render_episodes(recent)),
      parse_name_array);
  return dedup_names(names, {});
}

std::vector<std::string> RemoteOracle::reflect_missing_names(
    const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
    const std::vector<std::string>& already_found) {
  std::set<std::string> exclude;
  for (const auto& name : already_found) exclude.insert(lower(name));
  auto names = ask<std::vector<std::string>>(
      prompts::entity_reflection(render_episode(current),
                                 render_episodes(recent),
                                 json(already_found).dump()),
      parse_name_array);
  return dedup_names(names, exclude);
}

DuplicateVerdict RemoteOracle::resolve_duplicates(
    const std::string& candidate_name,
    const std::vector<EntityRecord>& matched_existing) {
  if (matched_existing.empty()) return DuplicateVerdict{};
  json existing = json::array();
  std::set<std::uint64_t> offered;
  for (const auto& e : matched_existing) {
    existing.push_back(entity_json(e));
    offered.insert(e.id.value);
  }
  NodeId id = ask<NodeId>(
      prompts::duplicate_resolution(candidate_name, existing.dump(2)),
      parse_verdict);
  if (id.valid() && !offered.count(id.value)) {
    warn("duplicate verdict named unoffered id " + id.to_string() +
         "; treating \"" + candidate_name + "\" as new");
    return DuplicateVerdict{};
  }
  return DuplicateVerdict{id};
}

EntityAttributes RemoteOracle::extract_entity_attributes(
    const std::string& name, const EpisodeRecord& current,
    const std::vector<EpisodeRecord>& recent) {
  auto attrs = ask<EntityAttributes>(
      prompts::attribute_extraction(name, render_episode(current),
                                    render_episodes(recent)),
      [](const std::string& raw) {
        json parsed = parse_payload(raw);
        if (!parsed.is_object() || !parsed.contains("summary") ||
            !parsed["summary"].is_string())
          throw Error(ErrorKind::data,
                      "expected {\"summary\": \"...\", \"tag\": [...]}");
        EntityAttributes out;
        out.summary = parsed["summary"].get<std::string>();
        if (parsed.contains("tag")) {
          if (!parsed["tag"].is_array())
            throw Error(ErrorKind::data, "tag must be an array of strings");
          for (const auto& t : parsed["tag"]) {
            if (!t.is_string())
              throw Error(ErrorKind::data, "tag must be an array of strings");
            out.tag.push_back(t.get<std::string>());
          }
        }
        return out;
      });
  if (attrs.summary.empty()) attrs.summary = name;
  if (attrs.tag.size() > kMaxTags) {
    warn("entity \"" + name + "\": tag list truncated to 5 descriptors");
    attrs.tag.resize(kMaxTags);
  }
  for (auto& t : attrs.tag) {
    if (word_count(t) <= kMaxTagWords) continue;
    warn("entity \"" + name + "\": tag descriptor \"" + t +
         "\" truncated to 3 words");
    std::size_t words = 0, cut = t.size();
    bool in_word = false;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const bool space = t[i] == ' ' || t[i] == '\t';
      if (!space && !in_word && ++words > kMaxTagWords) {
        cut = i;
        break;
      }
      in_word = !space;
    }
    t = t.substr(0, cut);
    while (!t.empty() && (t.back() == ' ' || t.back() == '\t')) t.pop_back();
  }
  return attrs;
}

namespace {

std::vector<EdgeDraft> parse_edge_drafts(const std::string& raw) {
  json parsed = parse_payload(raw);
  if (!parsed.is_array())
    throw Error(ErrorKind::data, "expected a JSON array of relation objects");
  std::vector<EdgeDraft> out;
  for (const auto& item : parsed) {
    if (!item.is_object() || !item.contains("source") ||
        !item["source"].is_string() || !item.contains("target") ||
        !item["target"].is_string() || !item.contains("fact") ||
        !item["fact"].is_string())
      throw Error(ErrorKind::data,
                  "every relation needs string source, target, fact");
    EdgeDraft d;
    d.source_name = item["source"].get<std::string>();
    d.target_name = item["target"].get<std::string>();
    d.fact = item["fact"].get<std::string>();
    try {
      if (item.contains("valid_at") && item["valid_at"].is_string())
        d.valid_at = Timestamp::parse(item["valid_at"].get<std::string>());
      if (item.contains("invalid_at") && item["invalid_at"].is_string())
        d.invalid_at = Timestamp::parse(item["invalid_at"].get<std::string>());
    } catch (const Error&) {
      throw Error(ErrorKind::data,
                  "relation timestamps must be RFC 3339 strings");
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

std::vector<EdgeDraft> RemoteOracle::extract_edges(
    const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
    const std::vector<EntityRecord>& entities) {
  json offered = json::array();
  for (const auto& e : entities) offered.push_back(entity_json(e));
  return ask<std::vector<EdgeDraft>>(
      prompts::edge_extraction(render_episode(current),
                               render_episodes(recent), offered.dump(2)),
      parse_edge_drafts);
}

std::vector<EdgeDraft> RemoteOracle::reflect_missing_edges(
    const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
    const std::vector<EntityRecord>& entities,
    const std::vector<EdgeDraft>& already_found) {
  json offered = json::array();
  for (const auto& e : entities) offered.push_back(entity_json(e));
  json found = json::array();
  for (const auto& d : already_found)
    found.push_back({{"source", d.source_name},
                     {"target", d.target_name},
                     {"fact", d.fact}});
  auto drafts = ask<std::vector<EdgeDraft>>(
      prompts::edge_reflection(render_episode(current),
                               render_episodes(recent), offered.dump(2),
                               found.dump(2)),
      parse_edge_drafts);
  std::vector<EdgeDraft> fresh;
  for (auto& d : drafts) {
    const bool dup = std::any_of(
        already_found.begin(), already_found.end(), [&](const EdgeDraft& f) {
          return f.source_name == d.source_name &&
                 f.target_name == d.target_name && f.fact == d.fact;
        });
    if (!dup) fresh.push_back(std::move(d));
  }
  return fresh;
}

DuplicateVerdict RemoteOracle::resolve_edge_duplicates(
    const std::string& candidate_fact,
    const std::vector<RelationEdge>& matched_existing) {
  if (matched_existing.empty()) return DuplicateVerdict{};
  json existing = json::array();
  std::set<std::uint64_t> offered;
  for (const auto& e : matched_existing) {
    existing.push_back({{"id", e.id.value}, {"fact", e.fact}});
    offered.insert(e.id.value);
  }
  NodeId id = ask<NodeId>(
      prompts::edge_duplicate_resolution(candidate_fact, existing.dump(2)),
      parse_verdict);
  if (id.valid() && !offered.count(id.value)) {
    warn("edge duplicate verdict named unoffered id " + id.to_string() +
         "; treating fact as new");
    return DuplicateVerdict{};
  }
  return DuplicateVerdict{id};
}

CategorizationResult RemoteOracle::categorize_nodes(
    int layer, const std::vector<CategorizationNode>& nodes,
    const std::vector<ExistingCategory>& existing_categories, int n,
    int attempt) {
  (void)n;
  (void)attempt;  // the retry offers the surviving categories for reuse
  std::string content;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    content += std::to_string(i) + ". " + nodes[i].name + ": [" +
               nodes[i].description + "]\n";
  }
  std::string existing;
  if (existing_categories.empty()) {
    existing = "(none yet)";
  } else {
    for (const auto& c : existing_categories)
      existing += "- " + c.name + ": [" + c.description + "]\n";
  }
  std::string prev_example;
  for (const auto& c : existing_categories) {
    if (!prev_example.empty()) prev_example += ", ";
    prev_example += '"' + c.name + '"';
  }

  return ask<CategorizationResult>(
      prompts::categorization(layer, content, existing, prev_example),
      [&](const std::string& raw) {
        json parsed = parse_payload(raw);
        if (!parsed.is_array())
          throw Error(ErrorKind::data,
                      "expected [{\"category\": ..., \"indexes\": [...]}]");
        CategorizationResult out;
        for (const auto& item : parsed) {
          if (!item.is_object() || !item.contains("category") ||
              !item["category"].is_string() || !item.contains("indexes") ||
              !item["indexes"].is_array())
            throw Error(ErrorKind::data,
                        "every element needs a category string and an "
                        "indexes array");
          CategoryAssignment cat;
          cat.category = item["category"].get<std::string>();
          for (const auto& idx : item["indexes"]) {
            if (!idx.is_number_unsigned())
              throw Error(ErrorKind::data, "indexes must be non-negative "
                                           "integers");
            cat.indexes.push_back(idx.get<std::size_t>());
          }
          if (item.contains("tag") && item["tag"].is_array())
            for (const auto& t : item["tag"])
              if (t.is_string()) cat.tag.push_back(t.get<std::string>());
          out.push_back(std::move(cat));
        }
        if (auto v = validate_categorization(out, nodes.size(), nodes);
            !v.empty())
          throw Error(ErrorKind::data, v.front());
        return out;
      });
}

NodeSelection RemoteOracle::select_nodes(
    const std::string& query, const std::vector<OfferedNode>& offered) {
  json nodes_info = json::array();
  std::set<std::uint64_t> offered_ids;
  for (const auto& node : offered) {
    nodes_info.push_back({{"name", node.name},
                          {"uuid", node.uuid.to_string()},
                          {"tags", node.tags},
                          {"layer", node.layer}});
    offered_ids.insert(node.uuid.value);
  }
  auto selection = ask<NodeSelection>(
      prompts::node_selection(query, nodes_info.dump(2)),
      [](const std::string& raw) {
        json parsed = parse_payload(raw);
        if (!parsed.is_array())
          throw Error(ErrorKind::data,
                      "expected a JSON array of selected nodes");
        NodeSelection out;
        for (const auto& item : parsed) {
          if (!item.is_object() || !item.contains("uuid"))
            throw Error(ErrorKind::data, "every selection needs a uuid");
          SelectedNode node;
          if (item["uuid"].is_string())
            node.uuid = NodeId{std::strtoull(
                item["uuid"].get<std::string>().c_str(), nullptr, 10)};
          else if (item["uuid"].is_number_unsigned())
            node.uuid = NodeId{item["uuid"].get<std::uint64_t>()};
          else
            throw Error(ErrorKind::data, "uuid must be a string or integer");
          if (item.contains("name") && item["name"].is_string())
            node.name = item["name"].get<std::string>();
          node.get_all_children = item.value("get_all_children", false);
          out.push_back(std::move(node));
        }
        return out;
      });
  NodeSelection valid;
  for (auto& node : selection) {
    if (offered_ids.count(node.uuid.value)) {
      valid.push_back(std::move(node));
    } else {
      warn("node selection named unoffered uuid " + node.uuid.to_string() +
           "; dropped");
    }
  }
  return valid;
}

std::string RemoteOracle::answer(const std::string& query,
                                 const std::string& assembled_context) {
  return chat(prompts::answer(query, assembled_context));
}

int RemoteOracle::judge(const std::string& question, const std::string& gold,
                        const std::string& predicted) {
  return ask<int>(prompts::judge(question, gold, predicted),
                  [](const std::string& raw) {
                    json parsed = parse_payload(raw);
                    if (!parsed.is_object() || !parsed.contains("score") ||
                        !parsed["score"].is_number_integer())
                      throw Error(ErrorKind::data,
                                  "expected {\"score\": 0 or 1}");
                    const int score = parsed["score"].get<int>();
                    if (score != 0 && score != 1)
                      throw Error(ErrorKind::data, "score must be 0 or 1");
                    return score;
                  });
}

}  // namespace hiermem
