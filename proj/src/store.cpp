#include "hiermem/store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <mutex>

#include "hiermem/embedder.hpp"  // fnv1a64
#include "hiermem/json_codec.hpp"

namespace hiermem {

namespace {

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// Incremental FNV-1a over section bytes; matches fnv1a64 on the
// concatenation.
struct SectionHash {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void update(const std::string& bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
  }
};

constexpr int kSnapshotSchemaVersion = 1;

}  // namespace

MemoryStore::MemoryStore(StoreConfig config)
    : config_(config),
      lexical_(config.bm25),
      vectors_(config.embedding_dim),
      hierarchy_(std::make_shared<HierarchyGeneration>()) {
  if (config_.embedding_dim == 0)
    throw Error(ErrorKind::config, "embedding_dim must be positive");
  if (config_.compression_ratio < 2)
    throw Error(ErrorKind::config, "compression_ratio must be >= 2");
  if (config_.max_layers < 1)
    throw Error(ErrorKind::config, "max_layers must be >= 1");
  if (config_.top_k < 1) throw Error(ErrorKind::config, "top_k must be >= 1");
  if (config_.bm25.k1 < 0.0 || config_.bm25.b < 0.0 || config_.bm25.b > 1.0 ||
      config_.bm25.name_boost < 0.0)
    throw Error(ErrorKind::config, "bm25 parameters out of range");
}

NodeId MemoryStore::allocate_id() { return NodeId{next_id_++}; }

void MemoryStore::check_or_adopt_id(NodeId& id) {
  if (!id.valid()) {
    id = allocate_id();
  } else if (id.value >= next_id_) {
    next_id_ = id.value + 1;
  }
}

void MemoryStore::reject(const char* what, NodeId id,
                         const std::vector<std::string>& violations) const {
  throw Error(ErrorKind::data, std::string(what) + " " + id.to_string() +
                                   " rejected: " + join(violations, "; "));
}

NodeId MemoryStore::upsert(EpisodeRecord r) {
  check_or_adopt_id(r.id);
  if (auto v = validate(r, config_.embedding_dim); !v.empty())
    reject("episode", r.id, v);
  if (entities_.count(r.id) || relation_edges_.count(r.id))
    reject("episode", r.id, {"id already names a node of another type"});

  lexical_.upsert(IndexKind::episode_content, r.id, tokenize(r.content));
  vectors_.upsert(VectorKind::episode_embedding, r.id, r.episode_embedding);
  const NodeId id = r.id;
  episodes_.insert_or_assign(id, std::move(r));
  return id;
}

void MemoryStore::index_entity(const EntityRecord& r) {
  lexical_.upsert(IndexKind::entity_profile, r.id,
                  lexical_.entity_tokens(r.name, r.summary));
  vectors_.upsert(VectorKind::entity_name, r.id, r.name_embedding);
  vectors_.upsert(VectorKind::entity_summary, r.id, r.summary_embedding);
}

NodeId MemoryStore::upsert(EntityRecord r) {
  check_or_adopt_id(r.id);
  auto violations = validate(r, config_.embedding_dim);
  for (NodeId ep : r.episode_idx)
    if (!episodes_.count(ep))
      violations.push_back("episode_idx references unknown episode " +
                           ep.to_string());
  if (!violations.empty()) reject("entity", r.id, violations);
  if (episodes_.count(r.id) || relation_edges_.count(r.id))
    reject("entity", r.id, {"id already names a node of another type"});

  // Keep the derived episodic edges in lockstep with episode_idx.
  if (auto it = entities_.find(r.id); it != entities_.end())
    for (NodeId ep : it->second.episode_idx)
      episodic_edges_.erase(EpisodicEdge{r.id, ep});
  for (NodeId ep : r.episode_idx) episodic_edges_.insert(EpisodicEdge{r.id, ep});

  index_entity(r);
  const NodeId id = r.id;
  entities_.insert_or_assign(id, std::move(r));
  return id;
}

NodeId MemoryStore::upsert(RelationEdge r) {
  check_or_adopt_id(r.id);
  auto violations = validate(r, config_.embedding_dim);
  for (NodeId end : {r.source, r.target})
    if (!entities_.count(end))
      violations.push_back("endpoint references unknown entity " +
                           end.to_string());
  if (!violations.empty()) reject("relation edge", r.id, violations);
  if (episodes_.count(r.id) || entities_.count(r.id))
    reject("relation edge", r.id, {"id already names a node of another type"});

  if (auto it = relation_edges_.find(r.id); it != relation_edges_.end()) {
    incident_[it->second.source].erase(r.id);
    incident_[it->second.target].erase(r.id);
  }
  incident_[r.source].insert(r.id);
  incident_[r.target].insert(r.id);

  lexical_.upsert(IndexKind::edge_fact, r.id, tokenize(r.fact));
  vectors_.upsert(VectorKind::edge_fact, r.id, r.fact_embedding);
  const NodeId id = r.id;
  relation_edges_.insert_or_assign(id, std::move(r));
  return id;
}

const EpisodeRecord& MemoryStore::episode(NodeId id) const {
  auto it = episodes_.find(id);
  if (it == episodes_.end())
    throw Error(ErrorKind::data, "unknown episode " + id.to_string());
  return it->second;
}

const EntityRecord& MemoryStore::entity(NodeId id) const {
  auto it = entities_.find(id);
  if (it == entities_.end())
    throw Error(ErrorKind::data, "unknown entity " + id.to_string());
  return it->second;
}

const RelationEdge& MemoryStore::relation_edge(NodeId id) const {
  auto it = relation_edges_.find(id);
  if (it == relation_edges_.end())
    throw Error(ErrorKind::data, "unknown relation edge " + id.to_string());
  return it->second;
}

std::vector<EpisodeRecord> MemoryStore::recent_episodes(
    Timestamp before, std::size_t count) const {
  std::vector<const EpisodeRecord*> all;
  all.reserve(episodes_.size());
  for (const auto& [id, ep] : episodes_)
    if (ep.valid_at < before) all.push_back(&ep);
  std::sort(all.begin(), all.end(),
            [](const EpisodeRecord* a, const EpisodeRecord* b) {
              if (a->valid_at != b->valid_at) return b->valid_at < a->valid_at;
              return b->id < a->id;
            });
  if (all.size() > count) all.resize(count);
  std::vector<EpisodeRecord> out;
  out.reserve(all.size());
  for (const auto* ep : all) out.push_back(*ep);
  return out;
}

std::vector<EpisodeRecord> MemoryStore::episodes_of(NodeId entity_id) const {
  const EntityRecord& e = entity(entity_id);
  std::vector<EpisodeRecord> out;
  out.reserve(e.episode_idx.size());
  for (NodeId ep : e.episode_idx) out.push_back(episode(ep));
  return out;
}

std::vector<std::pair<RelationEdge, EntityRecord>> MemoryStore::edges_of(
    NodeId entity_id) const {
  entity(entity_id);  // not-found check
  std::vector<std::pair<RelationEdge, EntityRecord>> out;
  auto it = incident_.find(entity_id);
  if (it == incident_.end()) return out;
  out.reserve(it->second.size());
  for (NodeId edge_id : it->second) {
    const RelationEdge& e = relation_edge(edge_id);
    const NodeId other = e.source == entity_id ? e.target : e.source;
    out.emplace_back(e, entity(other));
  }
  return out;
}

std::vector<EntityRecord> MemoryStore::nodes_at_layer(int layer) const {
  if (layer < 0) throw Error(ErrorKind::usage, "layer must be >= 0");
  std::vector<EntityRecord> out;
  if (layer == 0) {
    out.reserve(entities_.size());
    for (const auto& [id, e] : entities_) out.push_back(e);
    return out;
  }
  auto gen = hierarchy();
  for (const auto& [id, c] : gen->categories)
    if (c.layer == layer) out.push_back(c);
  return out;
}

std::shared_ptr<const HierarchyGeneration> MemoryStore::hierarchy() const {
  std::shared_lock lock(hierarchy_mutex_);
  return hierarchy_;
}

std::shared_ptr<const HierarchyGeneration> MemoryStore::swap_hierarchy(
    std::vector<CategoryRecord> categories, std::vector<CategoryEdge> edges) {
  auto gen = std::make_shared<HierarchyGeneration>();
  std::vector<std::string> violations;

  for (auto& c : categories) {
    for (auto& v : validate(c, config_.embedding_dim))
      violations.push_back("category " + c.id.to_string() + ": " + v);
    if (episodes_.count(c.id) || entities_.count(c.id) ||
        relation_edges_.count(c.id))
      violations.push_back("category " + c.id.to_string() +
                           " collides with a base-graph id");
    if (!gen->categories.emplace(c.id, std::move(c)).second)
      violations.push_back("duplicate category id");
  }

  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  for (const CategoryEdge& e : edges) {
    auto parent = gen->categories.find(e.parent);
    if (parent == gen->categories.end()) {
      violations.push_back("edge parent " + e.parent.to_string() +
                           " is not a category");
      continue;
    }
    int child_layer = -1;
    if (auto child = gen->categories.find(e.child);
        child != gen->categories.end())
      child_layer = child->second.layer;
    else if (auto ent = entities_.find(e.child); ent != entities_.end())
      child_layer = 0;
    if (child_layer < 0) {
      violations.push_back("edge child " + e.child.to_string() +
                           " resolves to no node");
      continue;
    }
    if (parent->second.layer != child_layer + 1)
      violations.push_back("edge " + e.parent.to_string() + " -> " +
                           e.child.to_string() + " spans layers " +
                           std::to_string(parent->second.layer) + " -> " +
                           std::to_string(child_layer));
    gen->children[e.parent].push_back(e.child);
    gen->parents[e.child].push_back(e.parent);
  }
  for (const auto& [id, c] : gen->categories)
    if (!gen->children.count(id))
      violations.push_back("category " + id.to_string() + " has no children");

  if (!violations.empty())
    throw Error(ErrorKind::data,
                "hierarchy swap refused: " + join(violations, "; "));

  gen->edges = std::move(edges);
  for (const auto& [id, c] : gen->categories)
    gen->max_layer = std::max(gen->max_layer, c.layer);
  for (const auto& [id, c] : gen->categories)
    if (c.layer == gen->max_layer) gen->top.push_back(id);

  std::unique_lock lock(hierarchy_mutex_);
  gen->generation = hierarchy_->generation + 1;
  auto previous = std::exchange(hierarchy_,
                                std::shared_ptr<const HierarchyGeneration>(gen));
  return previous;
}

std::vector<ScoredId> MemoryStore::bm25_search(IndexKind kind,
                                               const std::string& query,
                                               std::size_t limit) const {
  return lexical_.search(kind, query, limit);
}

std::vector<ScoredId> MemoryStore::vector_search(VectorKind kind,
                                                 const EmbeddingVector& query,
                                                 std::size_t limit) const {
  return vectors_.search(kind, query, limit);
}

std::vector<std::string> MemoryStore::audit() const {
  std::vector<std::string> out;
  const std::size_t dim = config_.embedding_dim;

  std::set<EpisodicEdge> derived;
  for (const auto& [id, e] : entities_) {
    if (id != e.id) out.push_back("entity keyed under foreign id");
    for (auto& v : validate(e, dim))
      out.push_back("entity " + id.to_string() + ": " + v);
    for (NodeId ep : e.episode_idx) {
      if (!episodes_.count(ep))
        out.push_back("entity " + id.to_string() +
                      " references unknown episode " + ep.to_string());
      derived.insert(EpisodicEdge{id, ep});
    }
  }
  if (derived != episodic_edges_)
    out.push_back("episodic edges out of lockstep with episode_idx");

  for (const auto& [id, ep] : episodes_)
    for (auto& v : validate(ep, dim))
      out.push_back("episode " + id.to_string() + ": " + v);

  for (const auto& [id, e] : relation_edges_) {
    for (auto& v : validate(e, dim))
      out.push_back("relation edge " + id.to_string() + ": " + v);
    for (NodeId end : {e.source, e.target})
      if (!entities_.count(end))
        out.push_back("relation edge " + id.to_string() +
                      " references unknown entity " + end.to_string());
  }

  auto gen = hierarchy();
  for (const auto& [id, c] : gen->categories)
    for (auto& v : validate(c, dim))
      out.push_back("category " + id.to_string() + ": " + v);
  for (const CategoryEdge& e : gen->edges) {
    auto parent = gen->categories.find(e.parent);
    if (parent == gen->categories.end()) {
      out.push_back("category edge parent missing");
      continue;
    }
    int child_layer = -1;
    if (auto child = gen->categories.find(e.child);
        child != gen->categories.end())
      child_layer = child->second.layer;
    else if (entities_.count(e.child))
      child_layer = 0;
    if (child_layer < 0)
      out.push_back("category edge child " + e.child.to_string() +
                    " resolves to no node");
    else if (parent->second.layer != child_layer + 1)
      out.push_back("category edge " + e.parent.to_string() + " -> " +
                    e.child.to_string() + " violates the layer rule");
  }
  return out;
}

void MemoryStore::save_snapshot(const std::string& path) const {
  auto gen = hierarchy();

  // Render the five sections first so the manifest can carry their
  // checksums and counts.
  const char* names[5] = {"episodes", "entities", "relation_edges",
                          "categories", "category_edges"};
  std::string sections[5];
  SectionHash hashes[5];
  std::size_t counts[5] = {episodes_.size(), entities_.size(),
                           relation_edges_.size(), gen->categories.size(),
                           gen->edges.size()};

  auto emit = [&](int s, const nlohmann::json& j) {
    std::string line = j.dump();
    line += '\n';
    hashes[s].update(line);
    sections[s] += line;
  };
  for (const auto& [id, r] : episodes_) emit(0, codec::encode(r));
  for (const auto& [id, r] : entities_) emit(1, codec::encode(r));
  for (const auto& [id, r] : relation_edges_) emit(2, codec::encode(r));
  for (const auto& [id, r] : gen->categories) emit(3, codec::encode(r));
  for (const CategoryEdge& e : gen->edges) emit(4, codec::encode(e));

  nlohmann::json manifest{
      {"schema_version", kSnapshotSchemaVersion},
      {"embedding_dim", config_.embedding_dim},
      {"config",
       {{"embedding_dim", config_.embedding_dim},
        {"compression_ratio", config_.compression_ratio},
        {"max_layers", config_.max_layers},
        {"top_k", config_.top_k},
        {"bm25_k1", config_.bm25.k1},
        {"bm25_b", config_.bm25.b},
        {"bm25_name_boost", config_.bm25.name_boost}}},
      {"next_id", next_id_},
  };
  for (int s = 0; s < 5; ++s) {
    manifest["counts"][names[s]] = counts[s];
    manifest["checksums"][names[s]] = hashes[s].hex();
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error(ErrorKind::data, "cannot open snapshot path: " + tmp);
    out << manifest.dump() << '\n';
    for (const auto& section : sections) out << section;
    out.flush();
    if (!out) throw Error(ErrorKind::data, "snapshot write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error(ErrorKind::data, "cannot move snapshot into place: " + path);
}

std::unique_ptr<MemoryStore> MemoryStore::load_snapshot(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open snapshot: " + path);

  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> Error {
    return Error(ErrorKind::data, "snapshot " + path + " line " +
                                      std::to_string(line_no) + ": " + what);
  };

  std::string line;
  ++line_no;
  if (!std::getline(in, line)) throw fail("missing manifest line");

  StoreConfig config;
  nlohmann::json manifest;
  std::size_t expected_counts[5];
  std::string expected_hashes[5];
  std::uint64_t next_id = 1;
  const char* names[5] = {"episodes", "entities", "relation_edges",
                          "categories", "category_edges"};
  try {
    manifest = codec::parse_line(line);
    const int version = manifest.at("schema_version").get<int>();
    if (version != kSnapshotSchemaVersion)
      throw Error(ErrorKind::data,
                  "unsupported schema version " + std::to_string(version));
    const auto& cfg = manifest.at("config");
    config.embedding_dim = cfg.at("embedding_dim").get<std::size_t>();
    config.compression_ratio = cfg.at("compression_ratio").get<int>();
    config.max_layers = cfg.at("max_layers").get<int>();
    config.top_k = cfg.at("top_k").get<int>();
    config.bm25.k1 = cfg.at("bm25_k1").get<double>();
    config.bm25.b = cfg.at("bm25_b").get<double>();
    config.bm25.name_boost = cfg.at("bm25_name_boost").get<double>();
    next_id = manifest.at("next_id").get<std::uint64_t>();
    for (int s = 0; s < 5; ++s) {
      expected_counts[s] = manifest.at("counts").at(names[s]).get<std::size_t>();
      expected_hashes[s] =
          manifest.at("checksums").at(names[s]).get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("bad manifest: ") + e.what());
  }

  auto store = std::make_unique<MemoryStore>(config);
  std::vector<CategoryRecord> categories;
  std::vector<CategoryEdge> category_edges;
  SectionHash hashes[5];
  std::size_t counts[5] = {0, 0, 0, 0, 0};
  int section = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.eof()) break;
    nlohmann::json j;
    std::string type;
    try {
      j = codec::parse_line(line);
      type = codec::record_type(j);
    } catch (const Error& e) {
      throw fail(e.what());
    }
    int s;
    if (type == codec::kTypeEpisode) s = 0;
    else if (type == codec::kTypeEntity) s = 1;
    else if (type == codec::kTypeRelationEdge) s = 2;
    else if (type == codec::kTypeCategory) s = 3;
    else if (type == codec::kTypeCategoryEdge) s = 4;
    else throw fail("unknown record type \"" + type + "\"");
    if (s < section) throw fail("record type \"" + type + "\" out of order");
    section = s;
    hashes[s].update(line + '\n');
    ++counts[s];
    try {
      switch (s) {
        case 0: store->upsert(codec::decode_episode(j)); break;
        case 1: store->upsert(codec::decode_entity(j)); break;
        case 2: store->upsert(codec::decode_relation_edge(j)); break;
        case 3: categories.push_back(codec::decode_category(j)); break;
        case 4: category_edges.push_back(codec::decode_category_edge(j)); break;
      }
    } catch (const Error& e) {
      throw fail(e.what());
    }
  }

  for (int s = 0; s < 5; ++s) {
    if (counts[s] != expected_counts[s])
      throw fail(std::string(names[s]) + " count " +
                 std::to_string(counts[s]) + " does not match manifest " +
                 std::to_string(expected_counts[s]));
    if (hashes[s].hex() != expected_hashes[s])
      throw fail(std::string(names[s]) + " checksum mismatch (corrupt section)");
  }

  if (!categories.empty() || !category_edges.empty()) {
    try {
      store->swap_hierarchy(std::move(categories), std::move(category_edges));
    } catch (const Error& e) {
      throw fail(e.what());
    }
  }
  store->next_id_ = std::max(store->next_id_, next_id);
  return store;
}

}  // namespace hiermem
