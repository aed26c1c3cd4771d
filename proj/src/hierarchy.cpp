#include "hiermem/hierarchy.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

namespace hiermem {

namespace {

// Replace every standalone occurrence of the connector word "and" (the same
// boundary rule validate() enforces) so a copied entity name like
// "Tom and Jerry" can survive as a category name.
std::string sanitize_connector_words(std::string name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  std::size_t pos = 0;
  while ((pos = lower.find("and", pos)) != std::string::npos) {
    const bool left_ok =
        pos == 0 || !std::isalnum(static_cast<unsigned char>(lower[pos - 1]));
    const std::size_t end = pos + 3;
    const bool right_ok =
        end >= lower.size() ||
        !std::isalnum(static_cast<unsigned char>(lower[end]));
    if (left_ok && right_ok) {
      name.replace(pos, 3, "&");
      lower.replace(pos, 3, "&");
      pos += 1;
    } else {
      pos += 1;
    }
  }
  return name;
}

std::string aggregate_summary(const std::vector<std::string>& member_names) {
  std::string out = "Covers: ";
  for (std::size_t i = 0; i < member_names.size(); ++i) {
    if (i) out += ", ";
    out += member_names[i];
  }
  return out;
}

// A category accumulated across shards and the retry pass. Members are
// indexes into the layer's node list, deduplicated and ordered.
struct StagedCategory {
  std::string name;
  std::vector<std::string> tag;
  std::set<std::size_t> members;
};

void merge_assignments(std::vector<StagedCategory>& staged,
                       std::map<std::string, std::size_t>& by_name,
                       const CategorizationResult& result,
                       const std::vector<std::size_t>& index_map) {
  for (const CategoryAssignment& assignment : result) {
    auto [it, inserted] = by_name.emplace(assignment.category, staged.size());
    if (inserted) staged.push_back(StagedCategory{assignment.category, {}, {}});
    StagedCategory& cat = staged[it->second];
    if (cat.tag.empty()) {
      cat.tag = assignment.tag;
      if (cat.tag.size() > kMaxTags) cat.tag.resize(kMaxTags);
    }
    for (std::size_t index : assignment.indexes)
      cat.members.insert(index_map[index]);
  }
}

CategorizationResult as_result(const std::vector<StagedCategory>& staged) {
  CategorizationResult out;
  out.reserve(staged.size());
  for (const StagedCategory& cat : staged)
    out.push_back(CategoryAssignment{
        cat.name,
        std::vector<std::size_t>(cat.members.begin(), cat.members.end()),
        cat.tag});
  return out;
}

}  // namespace

void BuildConfig::validate() const {
  if (compression_ratio < 2)
    throw Error(ErrorKind::config, "compression ratio must be at least 2");
  if (max_layers < 1)
    throw Error(ErrorKind::config, "max layers must be at least 1");
  if (batch_size < 0)
    throw Error(ErrorKind::config, "batch size must be non-negative");
}

const char* stop_reason_label(StopReason reason) {
  switch (reason) {
    case StopReason::reduction_violation: return "reduction-violation";
    case StopReason::max_layers: return "max-layers";
    case StopReason::converged_to_roots: return "converged-to-roots";
  }
  return "?";
}

nlohmann::json HierarchyReport::to_json() const {
  nlohmann::json layer_rows = nlohmann::json::array();
  for (const LayerStats& row : layers)
    layer_rows.push_back({{"layer", row.layer},
                          {"categories", row.categories},
                          {"promoted", row.promoted}});
  return {{"layers", std::move(layer_rows)},
          {"stopped_because", stop_reason_label(stopped_because)},
          {"generation", generation},
          {"audit", audit}};
}

CompressionSplit check_compression(const CategorizationResult& assignment,
                                   int n) {
  CompressionSplit split;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const std::set<std::size_t> unique(assignment[i].indexes.begin(),
                                       assignment[i].indexes.end());
    (unique.size() >= static_cast<std::size_t>(n) ? split.ok
                                                  : split.undersized)
        .push_back(i);
  }
  return split;
}

bool check_reduction(std::size_t candidate_count, std::size_t previous_count,
                     int layer_index) {
  return layer_index <= 1 || candidate_count <= previous_count;
}

std::vector<CategoryRecord> promote_singletons(
    const std::vector<EntityRecord>& uncovered,
    const std::vector<std::string>& category_names, int layer,
    const Embedder& embedder) {
  std::vector<CategoryRecord> out;
  out.reserve(uncovered.size());
  for (std::size_t i = 0; i < uncovered.size(); ++i) {
    const EntityRecord& child = uncovered[i];
    CategoryRecord rec;
    rec.name = (i < category_names.size() && !category_names[i].empty())
                   ? category_names[i]
                   : sanitize_connector_words(child.name);
    rec.summary = aggregate_summary({child.name});
    rec.tag = child.tag;
    if (rec.tag.size() > kMaxTags) rec.tag.resize(kMaxTags);
    rec.layer = layer;
    rec.promoted = true;
    rec.name_embedding = embedder.embed(rec.name);
    rec.summary_embedding = embedder.embed(rec.summary);
    out.push_back(std::move(rec));
  }
  return out;
}

HierarchyReport build_hierarchy(MemoryStore& store, ConceptOracle& oracle,
                                const Embedder& embedder,
                                const BuildConfig& config) {
  config.validate();
  const int n = config.compression_ratio;

  std::vector<EntityRecord> below = store.nodes_at_layer(0);
  if (below.empty())
    throw Error(ErrorKind::data,
                "hierarchy build requires a non-empty base graph");

  std::vector<CategoryRecord> staged_categories;
  std::vector<CategoryEdge> staged_edges;
  HierarchyReport report;
  StopReason reason = StopReason::max_layers;

  for (int layer = 1;; ++layer) {
    // One node left means one root — but only once that node is a category;
    // a lone base entity still gets its singleton layer first.
    if (below.size() == 1 && layer > 1) {
      reason = StopReason::converged_to_roots;
      break;
    }
    if (layer > config.max_layers) {
      reason = StopReason::max_layers;
      break;
    }

    std::vector<CategorizationNode> nodes;
    nodes.reserve(below.size());
    for (const EntityRecord& rec : below)
      nodes.push_back(CategorizationNode{rec.name, rec.summary});

    std::vector<StagedCategory> staged;
    std::map<std::string, std::size_t> by_name;
    auto existing_from_staged = [&] {
      std::vector<ExistingCategory> existing;
      existing.reserve(staged.size());
      for (const StagedCategory& cat : staged) {
        std::vector<std::string> member_names;
        for (std::size_t m : cat.members) member_names.push_back(below[m].name);
        existing.push_back(
            ExistingCategory{cat.name, aggregate_summary(member_names)});
      }
      return existing;
    };

    // First pass, sharded sequentially so later shards can reuse the
    // categories earlier shards produced.
    const std::size_t shard =
        config.batch_size > 0 ? static_cast<std::size_t>(config.batch_size)
                              : nodes.size();
    for (std::size_t start = 0; start < nodes.size(); start += shard) {
      const std::size_t stop = std::min(start + shard, nodes.size());
      std::vector<CategorizationNode> shard_nodes(nodes.begin() + start,
                                                  nodes.begin() + stop);
      std::vector<std::size_t> index_map(stop - start);
      for (std::size_t i = 0; i < index_map.size(); ++i)
        index_map[i] = start + i;
      merge_assignments(staged, by_name,
                        oracle.categorize_nodes(layer, shard_nodes,
                                                existing_from_staged(), n,
                                                /*attempt=*/1),
                        index_map);
    }

    CompressionSplit split = check_compression(as_result(staged), n);
    std::vector<bool> covered(below.size(), false);
    auto recompute_covered = [&] {
      std::fill(covered.begin(), covered.end(), false);
      for (std::size_t cat : split.ok)
        for (std::size_t m : staged[cat].members) covered[m] = true;
    };
    recompute_covered();

    // Single coarsening retry over the uncovered remainder, with the
    // already-valid categories offered for reuse.
    std::vector<std::size_t> remainder;
    for (std::size_t i = 0; i < below.size(); ++i)
      if (!covered[i]) remainder.push_back(i);
    if (!remainder.empty()) {
      std::vector<CategorizationNode> retry_nodes;
      retry_nodes.reserve(remainder.size());
      for (std::size_t i : remainder) retry_nodes.push_back(nodes[i]);
      std::vector<ExistingCategory> reusable;
      for (std::size_t cat : split.ok) {
        std::vector<std::string> member_names;
        for (std::size_t m : staged[cat].members)
          member_names.push_back(below[m].name);
        reusable.push_back(ExistingCategory{staged[cat].name,
                                            aggregate_summary(member_names)});
      }
      merge_assignments(staged, by_name,
                        oracle.categorize_nodes(layer, retry_nodes, reusable,
                                                n, /*attempt=*/2),
                        remainder);
      split = check_compression(as_result(staged), n);
      recompute_covered();
    }

    // Whatever is still uncovered is promoted standalone. The Speaker
    // category keeps its name even when its sole member carries an alias.
    std::vector<EntityRecord> uncovered;
    std::vector<std::string> promoted_names;
    for (std::size_t i = 0; i < below.size(); ++i) {
      if (covered[i]) continue;
      uncovered.push_back(below[i]);
      std::string name_override;
      for (const StagedCategory& cat : staged)
        if (cat.name == kSpeakerCategoryName && cat.members.count(i)) {
          name_override = kSpeakerCategoryName;
          break;
        }
      promoted_names.push_back(std::move(name_override));
    }
    std::vector<CategoryRecord> promoted =
        promote_singletons(uncovered, promoted_names, layer, embedder);

    const std::size_t candidate_count = split.ok.size() + promoted.size();
    if (!check_reduction(candidate_count, below.size(), layer)) {
      reason = StopReason::reduction_violation;
      break;  // candidate layer discarded; layers beneath it stand
    }

    std::vector<EntityRecord> next_below;
    next_below.reserve(candidate_count);
    for (std::size_t cat : split.ok) {
      CategoryRecord rec;
      rec.id = store.allocate_id();
      rec.name = staged[cat].name;
      std::vector<std::string> member_names;
      for (std::size_t m : staged[cat].members)
        member_names.push_back(below[m].name);
      rec.summary = aggregate_summary(member_names);
      rec.tag = staged[cat].tag;
      rec.layer = layer;
      rec.name_embedding = embedder.embed(rec.name);
      rec.summary_embedding = embedder.embed(rec.summary);
      for (std::size_t m : staged[cat].members)
        staged_edges.push_back(CategoryEdge{rec.id, below[m].id});
      next_below.push_back(rec);
      staged_categories.push_back(std::move(rec));
    }
    for (std::size_t i = 0; i < promoted.size(); ++i) {
      promoted[i].id = store.allocate_id();
      staged_edges.push_back(CategoryEdge{promoted[i].id, uncovered[i].id});
      next_below.push_back(promoted[i]);
      staged_categories.push_back(std::move(promoted[i]));
    }

    report.layers.push_back(
        LayerStats{layer, candidate_count, promoted.size()});
    below = std::move(next_below);
  }

  store.swap_hierarchy(std::move(staged_categories), std::move(staged_edges));
  report.stopped_because = reason;
  report.generation = store.hierarchy()->generation;
  report.audit = store.audit();
  return report;
}

}  // namespace hiermem
