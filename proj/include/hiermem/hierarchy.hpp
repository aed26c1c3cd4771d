#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "hiermem/embedder.hpp"
#include "hiermem/oracle.hpp"
#include "hiermem/store.hpp"

namespace hiermem {

struct BuildConfig {
  int compression_ratio = 3;  // n: minimum members of a non-promoted category
  int max_layers = 5;
  // Layers wider than this are categorized in sequential shards that share
  // one growing existing-category list. 0 means a single call per layer.
  int batch_size = 0;

  void validate() const;  // Error(config) on out-of-range values
};

enum class StopReason { reduction_violation, max_layers, converged_to_roots };
const char* stop_reason_label(StopReason reason);

struct LayerStats {
  int layer = 0;
  std::size_t categories = 0;
  std::size_t promoted = 0;
};

struct HierarchyReport {
  std::vector<LayerStats> layers;  // persisted layers only, bottom-up
  StopReason stopped_because = StopReason::converged_to_roots;
  std::uint64_t generation = 0;
  std::vector<std::string> audit;  // post-swap invariant scan; empty = healthy

  nlohmann::json to_json() const;
};

// Partition of one categorization result by the minimum-member rule.
// Entries are indexes into the assignment vector.
struct CompressionSplit {
  std::vector<std::size_t> ok;          // |members| >= n
  std::vector<std::size_t> undersized;  // |members| < n
};
CompressionSplit check_compression(const CategorizationResult& assignment,
                                   int n);

// Layer 1 may out-count the entities beneath it; from layer 2 on a
// candidate layer must not out-count the layer below.
bool check_reduction(std::size_t candidate_count, std::size_t previous_count,
                     int layer_index);

// Standalone promotion for nodes the retry pass still left uncovered: each
// becomes a one-child category at `layer` carrying the child's name and
// tags. `category_names` parallels `uncovered`; an empty entry means "use
// the child's name" — the builder passes "Speaker" here when the speaker
// entity's own category is what failed compression, so that name survives
// promotion. Returned records have unset ids; the builder assigns them.
std::vector<CategoryRecord> promote_singletons(
    const std::vector<EntityRecord>& uncovered,
    const std::vector<std::string>& category_names, int layer,
    const Embedder& embedder);

// Builds the whole hierarchy bottom-up and publishes it atomically via
// swap_hierarchy. On oracle failure the previous generation stays in place.
HierarchyReport build_hierarchy(MemoryStore& store, ConceptOracle& oracle,
                                const Embedder& embedder,
                                const BuildConfig& config = {});

}  // namespace hiermem
