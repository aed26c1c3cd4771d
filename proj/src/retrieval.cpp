#include "hiermem/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include <httplib.h>

namespace hiermem {

namespace {

using nlohmann::json;

RankedItem episode_item(const EpisodeRecord& r) {
  return RankedItem{ItemKind::episode, r.id, r.content, 0.0, 0, {}, {}};
}

RankedItem entity_item(const EntityRecord& r) {
  return RankedItem{ItemKind::entity, r.id, r.name + ": " + r.summary,
                    0.0, 0, {}, {}};
}

RankedItem category_item(const CategoryRecord& r) {
  return RankedItem{ItemKind::category, r.id, r.name + ": " + r.summary,
                    0.0, r.layer, {}, {}};
}

RankedItem edge_item(const RelationEdge& r) {
  return RankedItem{ItemKind::edge, r.id,
                    r.fact + " " + render_validity_span(r), 0.0, 0, {}, {}};
}

// One System-1 kind: run both searches at depth, fuse, truncate, annotate.
std::vector<RankedItem> fuse_kind(
    const MemoryStore& store, const std::string& query,
    const EmbeddingVector& query_vec, IndexKind lexical_kind,
    VectorKind vector_kind, std::size_t depth, std::size_t budget, double c,
    const std::function<RankedItem(NodeId)>& make_item) {
  const auto lex = store.bm25_search(lexical_kind, query, depth);
  const auto vec = store.vector_search(vector_kind, query_vec, depth);

  std::vector<std::vector<NodeId>> lists(2);
  std::map<NodeId, std::size_t> lex_rank, vec_rank;
  for (std::size_t i = 0; i < lex.size(); ++i) {
    lists[0].push_back(lex[i].id);
    lex_rank[lex[i].id] = i + 1;
  }
  for (std::size_t i = 0; i < vec.size(); ++i) {
    lists[1].push_back(vec[i].id);
    vec_rank[vec[i].id] = i + 1;
  }

  auto fused = rrf_fuse(lists, c);
  if (fused.size() > budget) fused.resize(budget);

  std::vector<RankedItem> out;
  out.reserve(fused.size());
  for (const ScoredId& f : fused) {
    RankedItem item = make_item(f.id);
    item.score = f.score;
    if (auto it = lex_rank.find(f.id); it != lex_rank.end()) {
      item.route.insert(Route::system1_lexical);
      item.rank_positions["bm25"] = it->second;
    }
    if (auto it = vec_rank.find(f.id); it != vec_rank.end()) {
      item.route.insert(Route::system1_vector);
      item.rank_positions["vector"] = it->second;
    }
    out.push_back(std::move(item));
  }
  return out;
}

// Union by id within one kind pool, merging route sets and rank positions.
std::vector<RankedItem> merge_pools(const std::vector<RankedItem>& a,
                                    const std::vector<RankedItem>& b) {
  std::vector<RankedItem> out = a;
  std::map<NodeId, std::size_t> slot;
  for (std::size_t i = 0; i < out.size(); ++i) slot[out[i].id] = i;
  for (const RankedItem& item : b) {
    if (auto it = slot.find(item.id); it != slot.end()) {
      RankedItem& existing = out[it->second];
      existing.route.insert(item.route.begin(), item.route.end());
      existing.rank_positions.insert(item.rank_positions.begin(),
                                     item.rank_positions.end());
    } else {
      slot[item.id] = out.size();
      out.push_back(item);
    }
  }
  return out;
}

}  // namespace

json to_json(const std::vector<RankedItem>& items) {
  json out = json::array();
  for (const RankedItem& item : items) {
    json routes = json::array();
    for (Route r : item.route) routes.push_back(route_label(r));
    out.push_back({{"kind", item_kind_label(item.kind)},
                   {"id", item.id.value},
                   {"display_text", item.display_text},
                   {"score", item.score},
                   {"layer", item.layer},
                   {"route", std::move(routes)},
                   {"rank_positions", item.rank_positions}});
  }
  return out;
}

json to_json(const RouteLists& lists) {
  return json{{"episodes", to_json(lists.episodes)},
              {"entities", to_json(lists.entities)},
              {"edges", to_json(lists.edges)}};
}

const char* item_kind_label(ItemKind kind) {
  switch (kind) {
    case ItemKind::episode: return "episode";
    case ItemKind::entity: return "entity";
    case ItemKind::category: return "category";
    case ItemKind::edge: return "edge";
  }
  return "?";
}

const char* route_label(Route route) {
  switch (route) {
    case Route::system1_lexical: return "system1-lexical";
    case Route::system1_vector: return "system1-vector";
    case Route::system2: return "system2";
  }
  return "?";
}

std::string render_validity_span(const RelationEdge& edge) {
  return "(" + edge.valid_at.to_date() + " - " +
         (edge.invalid_at ? edge.invalid_at->to_date() : "now") + ")";
}

std::vector<ScoredId> rrf_fuse(const std::vector<std::vector<NodeId>>& lists,
                               double c) {
  struct Acc {
    double score = 0.0;
    std::size_t best_rank = SIZE_MAX;
  };
  std::map<NodeId, Acc> acc;
  for (const auto& list : lists) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      Acc& a = acc[list[i]];
      a.score += 1.0 / (c + static_cast<double>(i + 1));
      a.best_rank = std::min(a.best_rank, i + 1);
    }
  }
  std::vector<std::pair<NodeId, Acc>> rows(acc.begin(), acc.end());
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.second.score != b.second.score) return a.second.score > b.second.score;
    if (a.second.best_rank != b.second.best_rank)
      return a.second.best_rank < b.second.best_rank;
    return a.first < b.first;
  });
  std::vector<ScoredId> out;
  out.reserve(rows.size());
  for (const auto& [id, a] : rows) out.push_back(ScoredId{id, a.score});
  return out;
}

std::vector<double> LexicalReranker::score(
    const std::string& query, const std::vector<std::string>& texts) {
  std::set<std::string> query_tokens;
  for (auto& t : tokenize(query)) query_tokens.insert(std::move(t));

  std::vector<double> out;
  out.reserve(texts.size());
  for (const std::string& text : texts) {
    std::set<std::string> doc_tokens;
    for (auto& t : tokenize(text)) doc_tokens.insert(std::move(t));
    double overlap = 0.0;
    for (const std::string& t : query_tokens)
      if (doc_tokens.count(t)) overlap += static_cast<double>(t.size());
    out.push_back(doc_tokens.empty()
                      ? 0.0
                      : overlap / std::sqrt(static_cast<double>(
                                      doc_tokens.size())));
  }
  return out;
}

std::vector<double> RemoteReranker::score(const std::string& query,
                                          const std::vector<std::string>& texts) {
  httplib::Client client(config_.endpoint);
  client.set_connection_timeout(10);
  client.set_read_timeout(120);
  httplib::Headers headers;
  if (!config_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + config_.api_key);

  json body{{"model", config_.model}, {"query", query}, {"documents", texts}};
  auto res = client.Post("/v1/rerank", headers, body.dump(),
                         "application/json");
  if (!res || res->status != 200)
    throw Error(ErrorKind::oracle_unavailable,
                "rerank endpoint failed" +
                    (res ? " with status " + std::to_string(res->status)
                         : std::string(": unreachable")));
  json parsed = json::parse(res->body, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded() || !parsed.contains("results") ||
      !parsed["results"].is_array())
    throw Error(ErrorKind::oracle_unavailable,
                "rerank endpoint returned a malformed response");
  std::vector<double> out(texts.size(), 0.0);
  for (const auto& row : parsed["results"]) {
    if (!row.contains("index") || !row["index"].is_number_unsigned() ||
        !row.contains("relevance_score") || !row["relevance_score"].is_number())
      throw Error(ErrorKind::oracle_unavailable,
                  "rerank result rows need index and relevance_score");
    const std::size_t index = row["index"].get<std::size_t>();
    if (index >= out.size())
      throw Error(ErrorKind::oracle_unavailable,
                  "rerank result index out of range");
    out[index] = row["relevance_score"].get<double>();
  }
  return out;
}

std::vector<RankedItem> rerank(const std::string& query,
                               std::vector<RankedItem> items,
                               Reranker& reranker,
                               std::vector<std::string>& warnings) {
  if (items.empty()) return items;
  std::vector<std::string> texts;
  texts.reserve(items.size());
  for (const RankedItem& item : items) texts.push_back(item.display_text);

  std::vector<double> scores;
  try {
    scores = reranker.score(query, texts);
    if (scores.size() != items.size())
      throw Error(ErrorKind::oracle_unavailable,
                  "re-ranker returned a wrong-sized score list");
  } catch (const Error& e) {
    warnings.push_back(std::string("re-ranker failed (") + e.what() +
                       "); falling back to the lexical scorer");
    LexicalReranker fallback;
    scores = fallback.score(query, texts);
  }

  for (std::size_t i = 0; i < items.size(); ++i) items[i].score = scores[i];
  std::sort(items.begin(), items.end(),
            [](const RankedItem& a, const RankedItem& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.id < b.id;
            });
  return items;
}

RouteLists similarity_search(const MemoryStore& store, const Embedder& embedder,
                             const std::string& query,
                             const RetrievalConfig& config) {
  RouteLists out;
  if (tokenize(query).empty()) return out;
  const EmbeddingVector query_vec = embedder.embed(query);

  const std::size_t k = static_cast<std::size_t>(config.budget.k);
  const std::size_t kk = static_cast<std::size_t>(config.budget.entity_edge_limit());
  const std::size_t factor = static_cast<std::size_t>(config.candidate_depth_factor);

  out.episodes = fuse_kind(
      store, query, query_vec, IndexKind::episode_content,
      VectorKind::episode_embedding, factor * k, k, config.rrf_c,
      [&](NodeId id) { return episode_item(store.episode(id)); });
  out.entities = fuse_kind(
      store, query, query_vec, IndexKind::entity_profile,
      VectorKind::entity_summary, factor * kk, kk, config.rrf_c,
      [&](NodeId id) { return entity_item(store.entity(id)); });
  out.edges = fuse_kind(
      store, query, query_vec, IndexKind::edge_fact, VectorKind::edge_fact,
      factor * kk, kk, config.rrf_c,
      [&](NodeId id) { return edge_item(store.relation_edge(id)); });
  return out;
}

GlobalSelectionResult global_selection(const MemoryStore& store,
                                       ConceptOracle& oracle,
                                       const std::string& query) {
  GlobalSelectionResult res;
  res.trace["layers"] = json::array();
  auto gen = store.hierarchy();
  if (gen->empty()) {
    res.hierarchy_empty = true;
    return res;
  }

  std::set<NodeId> selected_categories;
  std::set<NodeId> selected_entities;

  // Full-subtree expansion for get_all_children, no further oracle calls.
  auto expand_subtree = [&](NodeId root) {
    std::vector<NodeId> stack{root};
    while (!stack.empty()) {
      const NodeId node = stack.back();
      stack.pop_back();
      auto it = gen->children.find(node);
      if (it == gen->children.end()) continue;
      for (NodeId child : it->second) {
        if (gen->categories.count(child)) {
          if (selected_categories.insert(child).second) stack.push_back(child);
        } else {
          selected_entities.insert(child);
        }
      }
    }
  };

  std::vector<NodeId> frontier = gen->top;
  bool at_top = true;
  while (!frontier.empty()) {
    std::vector<OfferedNode> offered;
    offered.reserve(frontier.size());
    for (NodeId id : frontier) {
      if (auto it = gen->categories.find(id); it != gen->categories.end())
        offered.push_back(OfferedNode{it->second.name, id, it->second.tag,
                                      it->second.layer});
      else
        offered.push_back(OfferedNode{store.entity(id).name, id,
                                      store.entity(id).tag, 0});
    }
    const NodeSelection selection = oracle.select_nodes(query, offered);

    json layer_trace{{"offered", json::array()}, {"selected", json::array()}};
    for (const auto& node : offered)
      layer_trace["offered"].push_back(node.name);
    for (const auto& sel : selection)
      layer_trace["selected"].push_back(
          {{"name", sel.name}, {"get_all_children", sel.get_all_children}});
    res.trace["layers"].push_back(std::move(layer_trace));

    if (selection.empty()) {
      if (at_top) res.empty_selection = true;
      break;
    }
    at_top = false;

    std::vector<NodeId> next;
    std::set<NodeId> queued;
    for (const SelectedNode& sel : selection) {
      if (auto it = gen->categories.find(sel.uuid);
          it != gen->categories.end()) {
        selected_categories.insert(sel.uuid);
        if (sel.get_all_children) {
          expand_subtree(sel.uuid);
        } else if (auto ch = gen->children.find(sel.uuid);
                   ch != gen->children.end()) {
          for (NodeId child : ch->second)
            if (queued.insert(child).second) next.push_back(child);
        }
      } else if (store.has_entity(sel.uuid)) {
        selected_entities.insert(sel.uuid);
      }
    }
    frontier = std::move(next);
  }

  if (res.empty_selection) return res;

  // E ∪ episodes_of(E) ∪ edges_of(E) with opposite endpoints, plus every
  // traversed selected category.
  std::set<NodeId> episode_ids;
  std::map<NodeId, const RelationEdge*> edge_rows;
  std::set<NodeId> opposite_entities;
  for (NodeId id : selected_entities) {
    for (const EpisodeRecord& ep : store.episodes_of(id))
      episode_ids.insert(ep.id);
    for (const auto& [edge, other] : store.edges_of(id)) {
      edge_rows.emplace(edge.id, &store.relation_edge(edge.id));
      if (!selected_entities.count(other.id))
        opposite_entities.insert(other.id);
    }
  }

  auto tag_system2 = [](RankedItem item) {
    item.route.insert(Route::system2);
    return item;
  };
  for (NodeId id : selected_categories)
    res.items.push_back(tag_system2(category_item(gen->categories.at(id))));
  for (NodeId id : selected_entities)
    res.items.push_back(tag_system2(entity_item(store.entity(id))));
  for (NodeId id : opposite_entities)
    res.items.push_back(tag_system2(entity_item(store.entity(id))));
  for (NodeId id : episode_ids)
    res.items.push_back(tag_system2(episode_item(store.episode(id))));
  for (const auto& [id, edge] : edge_rows)
    res.items.push_back(tag_system2(edge_item(*edge)));
  return res;
}

CombinedResult combined_search(const MemoryStore& store, ConceptOracle& oracle,
                               const Embedder& embedder,
                               const std::string& query,
                               const RetrievalConfig& config,
                               Reranker& reranker) {
  CombinedResult out;

  RouteLists s1;
  if (config.use_system1) s1 = similarity_search(store, embedder, query, config);
  out.trace["system1"] = to_json(s1);

  GlobalSelectionResult s2;
  if (config.use_system2) s2 = global_selection(store, oracle, query);
  out.trace["system2"] = {{"hierarchy_empty", s2.hierarchy_empty},
                          {"empty_selection", s2.empty_selection},
                          {"trace", s2.trace},
                          {"items", to_json(s2.items)}};

  RouteLists s2_lists;
  for (const RankedItem& item : s2.items) {
    switch (item.kind) {
      case ItemKind::episode: s2_lists.episodes.push_back(item); break;
      case ItemKind::entity:
      case ItemKind::category: s2_lists.entities.push_back(item); break;
      case ItemKind::edge: s2_lists.edges.push_back(item); break;
    }
  }

  const std::size_t k = static_cast<std::size_t>(config.budget.k);
  const std::size_t kk = static_cast<std::size_t>(config.budget.entity_edge_limit());
  auto finish = [&](const std::vector<RankedItem>& a,
                    const std::vector<RankedItem>& b, std::size_t budget) {
    auto ranked = rerank(query, merge_pools(a, b), reranker, out.warnings);
    if (ranked.size() > budget) ranked.resize(budget);
    return ranked;
  };
  out.final_lists.episodes = finish(s1.episodes, s2_lists.episodes, k);
  out.final_lists.entities = finish(s1.entities, s2_lists.entities, kk);
  out.final_lists.edges = finish(s1.edges, s2_lists.edges, kk);

  out.trace["final"] = to_json(out.final_lists);
  if (!out.warnings.empty()) out.trace["warnings"] = out.warnings;
  return out;
}

std::string assemble_context(const MemoryStore& store,
                             const RouteLists& lists) {
  auto gen = store.hierarchy();
  std::string out = "EPISODES:\n";
  for (const RankedItem& item : lists.episodes) {
    const EpisodeRecord& ep = store.episode(item.id);
    out += "- [" + ep.valid_at.to_rfc3339() + "] " + ep.content + "\n";
  }
  out += "ENTITIES:\n";
  for (const RankedItem& item : lists.entities) {
    if (item.kind == ItemKind::category) {
      const CategoryRecord& c = gen->categories.at(item.id);
      out += "- " + c.name + " (layer " + std::to_string(c.layer) +
             "): " + c.summary + "\n";
    } else {
      const EntityRecord& e = store.entity(item.id);
      out += "- " + e.name + ": " + e.summary + "\n";
    }
  }
  out += "FACTS:\n";
  for (const RankedItem& item : lists.edges) {
    const RelationEdge& edge = store.relation_edge(item.id);
    out += "- " + edge.fact + " " + render_validity_span(edge) + "\n";
  }
  return out;
}

AnswerResult answer_query(const MemoryStore& store, ConceptOracle& oracle,
                          const Embedder& embedder, const std::string& query,
                          const RetrievalConfig& config, Reranker& reranker) {
  const std::uint64_t calls_before = oracle.usage().calls;
  CombinedResult combined =
      combined_search(store, oracle, embedder, query, config, reranker);
  const std::string context = assemble_context(store, combined.final_lists);

  AnswerResult res;
  res.trace = std::move(combined.trace);
  res.trace["context_bytes"] = context.size();
  res.answer = oracle.answer(query, context);
  res.evidence = std::move(combined.final_lists);
  res.trace["oracle_calls"] = oracle.usage().calls - calls_before;
  return res;
}

}  // namespace hiermem
