#include "hiermem/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "hiermem/retrieval.hpp"

namespace hiermem {

namespace {

std::string fold(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

// Everything one episode produces, held back until the commit point so an
// oracle failure mid-episode leaves the store untouched.
struct EpisodeStage {
  EpisodeRecord episode;
  std::vector<EntityRecord> entities;   // new and merged, in staging order
  std::map<NodeId, std::size_t> by_id;  // entity id -> index in `entities`
  std::map<std::string, std::size_t> by_name;  // folded name -> index
  std::vector<RelationEdge> edges;
};

}  // namespace

void IngestConfig::validate() const {
  if (dedup_candidates == 0)
    throw Error(ErrorKind::config, "dedup candidate budget must be positive");
  if (edge_dedup_threshold < 0.0 || edge_dedup_threshold > 1.0)
    throw Error(ErrorKind::config,
                "edge dedup threshold must be within [0, 1]");
  if (rrf_c < 0.0)
    throw Error(ErrorKind::config, "rrf smoothing must be non-negative");
}

nlohmann::json IngestReport::to_json() const {
  return {{"episodes_created", episodes_created},
          {"entities_created", entities_created},
          {"entities_merged", entities_merged},
          {"edges_created", edges_created},
          {"edges_merged", edges_merged},
          {"oracle_calls", oracle_calls},
          {"warnings", warnings}};
}

std::vector<EpisodeDraft> episode_chunking(const std::vector<Message>& messages,
                                           ChunkPolicy policy) {
  std::vector<EpisodeDraft> out;
  for (std::size_t i = 0; i < messages.size();) {
    const Message& first = messages[i];
    if (policy == ChunkPolicy::per_exchange && i + 1 < messages.size() &&
        messages[i + 1].session_id == first.session_id) {
      const Message& second = messages[i + 1];
      out.push_back(EpisodeDraft{first.speaker + ": " + first.text + "\n" +
                                     second.speaker + ": " + second.text,
                                 first.timestamp, first.session_id});
      i += 2;
    } else {
      out.push_back(EpisodeDraft{first.speaker + ": " + first.text,
                                 first.timestamp, first.session_id});
      i += 1;
    }
  }
  return out;
}

IngestReport ingest(MemoryStore& store, ConceptOracle& oracle,
                    const Embedder& embedder,
                    const std::vector<Message>& messages,
                    const IngestConfig& config) {
  config.validate();
  if (static_cast<int>(embedder.dimension()) != store.config().embedding_dim)
    throw Error(ErrorKind::config,
                "embedder dimension does not match the store");

  std::map<std::string, Timestamp> last_seen;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    auto it = last_seen.find(messages[i].session_id);
    if (it != last_seen.end() && messages[i].timestamp < it->second)
      throw Error(ErrorKind::data,
                  "timestamps regress in session '" + messages[i].session_id +
                      "' at message " + std::to_string(i + 1));
    last_seen[messages[i].session_id] = messages[i].timestamp;
  }

  IngestReport report;
  oracle.set_warning_sink(
      [&report](const std::string& w) { report.warnings.push_back(w); });
  struct SinkGuard {
    ConceptOracle& oracle;
    ~SinkGuard() { oracle.set_warning_sink({}); }
  } sink_guard{oracle};

  const std::uint64_t calls_before = oracle.usage().calls;

  for (const EpisodeDraft& draft :
       episode_chunking(messages, config.chunking)) {
    EpisodeStage stage;
    stage.episode =
        EpisodeRecord{store.allocate_id(), draft.content, draft.valid_at,
                      embedder.embed(draft.content), draft.session_id};
    const std::vector<EpisodeRecord> recents =
        store.recent_episodes(draft.valid_at, config.recent_window);

    // Entity names: extraction plus one reflection pass, case-insensitively
    // de-duplicated with extraction order preserved.
    std::vector<std::string> names =
        oracle.extract_entity_names(stage.episode, recents);
    for (std::string& extra :
         oracle.reflect_missing_names(stage.episode, recents, names)) {
      const std::string key = fold(extra);
      if (std::none_of(names.begin(), names.end(),
                       [&](const std::string& n) { return fold(n) == key; }))
        names.push_back(std::move(extra));
    }

    for (const std::string& name : names) {
      if (stage.by_name.count(fold(name))) continue;  // already this episode

      // Candidate lookup: lexical over the entity profile fused with
      // vector search over the name embedding, then any entities staged
      // earlier in this same episode.
      const auto lex =
          store.bm25_search(IndexKind::entity_profile, name,
                            config.dedup_candidates);
      const auto vec =
          store.vector_search(VectorKind::entity_name, embedder.embed(name),
                              config.dedup_candidates);
      std::vector<std::vector<NodeId>> lists(2);
      for (const ScoredId& s : lex) lists[0].push_back(s.id);
      for (const ScoredId& s : vec) lists[1].push_back(s.id);

      std::vector<EntityRecord> candidates;
      std::set<NodeId> offered;
      for (const ScoredId& s : rrf_fuse(lists, config.rrf_c)) {
        // Fusion runs over committed entities; a merged-in-this-episode
        // record supersedes its committed version.
        if (auto it = stage.by_id.find(s.id); it != stage.by_id.end())
          candidates.push_back(stage.entities[it->second]);
        else
          candidates.push_back(store.entity(s.id));
        offered.insert(s.id);
      }
      for (const EntityRecord& staged : stage.entities)
        if (!offered.count(staged.id)) candidates.push_back(staged);

      const EntityAttributes attrs =
          oracle.extract_entity_attributes(name, stage.episode, recents);
      EntityRecord incoming;
      incoming.name = name;
      incoming.summary = attrs.summary;
      incoming.tag = attrs.tag;
      incoming.episode_idx = {stage.episode.id};

      DuplicateVerdict verdict;
      if (!candidates.empty())
        verdict = oracle.resolve_duplicates(name, candidates);

      if (verdict.same_as.valid()) {
        if (auto it = stage.by_id.find(verdict.same_as);
            it != stage.by_id.end()) {
          EntityRecord& target = stage.entities[it->second];
          target = merge_entity_attributes(target, incoming, embedder);
          stage.by_name[fold(name)] = it->second;
        } else {
          EntityRecord merged = merge_entity_attributes(
              store.entity(verdict.same_as), incoming, embedder);
          stage.by_id[merged.id] = stage.entities.size();
          stage.by_name[fold(merged.name)] = stage.entities.size();
          stage.by_name[fold(name)] = stage.entities.size();
          stage.entities.push_back(std::move(merged));
        }
        report.entities_merged += 1;
      } else {
        incoming.id = store.allocate_id();
        incoming.name_embedding = embedder.embed(incoming.name);
        incoming.summary_embedding = embedder.embed(incoming.summary);
        stage.by_id[incoming.id] = stage.entities.size();
        stage.by_name[fold(name)] = stage.entities.size();
        stage.entities.push_back(std::move(incoming));
        report.entities_created += 1;
      }
    }

    // Edge drafts: extraction plus reflection, offered only this episode's
    // entity set.
    std::vector<EdgeDraft> drafts =
        oracle.extract_edges(stage.episode, recents, stage.entities);
    for (EdgeDraft& extra : oracle.reflect_missing_edges(
             stage.episode, recents, stage.entities, drafts)) {
      const bool dup = std::any_of(
          drafts.begin(), drafts.end(), [&](const EdgeDraft& d) {
            return fold(d.source_name) == fold(extra.source_name) &&
                   fold(d.target_name) == fold(extra.target_name) &&
                   d.fact == extra.fact;
          });
      if (!dup) drafts.push_back(std::move(extra));
    }

    for (const EdgeDraft& edge_draft : drafts) {
      const auto src = stage.by_name.find(fold(edge_draft.source_name));
      const auto tgt = stage.by_name.find(fold(edge_draft.target_name));
      if (src == stage.by_name.end() || tgt == stage.by_name.end()) {
        report.warnings.push_back("edge draft '" + edge_draft.fact +
                                  "' references an entity outside this "
                                  "episode; dropped");
        continue;
      }
      const NodeId src_id = stage.entities[src->second].id;
      const NodeId tgt_id = stage.entities[tgt->second].id;

      RelationEdge candidate;
      candidate.source = src_id;
      candidate.target = tgt_id;
      candidate.fact = edge_draft.fact;
      candidate.fact_embedding = embedder.embed(edge_draft.fact);
      candidate.valid_at = edge_draft.valid_at.value_or(draft.valid_at);
      candidate.invalid_at = edge_draft.invalid_at;
      if (auto problems = validate(candidate, candidate.fact_embedding.size(),
                                   config.allow_reflexive_edges);
          !problems.empty()) {
        report.warnings.push_back("edge draft '" + edge_draft.fact +
                                  "' rejected: " + problems.front());
        continue;
      }

      // Dedup per unordered endpoint pair: committed edges first, then
      // edges staged earlier in this episode, gated on fact similarity.
      std::vector<RelationEdge> matched;
      if (store.has_entity(src_id))
        for (const auto& [edge, other] : store.edges_of(src_id))
          if (other.id == tgt_id &&
              dot(candidate.fact_embedding, edge.fact_embedding) >=
                  config.edge_dedup_threshold)
            matched.push_back(edge);
      for (const RelationEdge& staged : stage.edges) {
        const bool same_pair =
            (staged.source == src_id && staged.target == tgt_id) ||
            (staged.source == tgt_id && staged.target == src_id);
        if (same_pair &&
            dot(candidate.fact_embedding, staged.fact_embedding) >=
                config.edge_dedup_threshold)
          matched.push_back(staged);
      }

      DuplicateVerdict verdict;
      if (!matched.empty())
        verdict = oracle.resolve_edge_duplicates(candidate.fact, matched);
      if (verdict.same_as.valid()) {
        report.edges_merged += 1;
        continue;
      }
      candidate.id = store.allocate_id();
      stage.edges.push_back(std::move(candidate));
      report.edges_created += 1;
    }

    // Commit point: episode first (entity episode_idx references it), then
    // entities (episodic edges follow), then relation edges.
    store.upsert(stage.episode);
    report.episodes_created += 1;
    for (EntityRecord& entity : stage.entities) store.upsert(std::move(entity));
    for (RelationEdge& edge : stage.edges) store.upsert(std::move(edge));
  }

  report.oracle_calls = oracle.usage().calls - calls_before;
  return report;
}

}  // namespace hiermem
