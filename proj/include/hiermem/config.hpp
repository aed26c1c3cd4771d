#pragma once

#include <string>

#include <json.hpp>

#include "hiermem/hierarchy.hpp"
#include "hiermem/ingest.hpp"
#include "hiermem/retrieval.hpp"
#include "hiermem/store.hpp"

namespace hiermem {

// One JSON document configures the whole harness; command-line flags
// override individual fields. Secrets (endpoint API keys) come only from
// the environment: HIERMEM_ORACLE_KEY, HIERMEM_EMBEDDER_KEY,
// HIERMEM_RERANKER_KEY.
struct HarnessConfig {
  // store + retrieval
  int embedding_dim = static_cast<int>(kDefaultEmbeddingDim);
  int top_k = 10;
  double rrf_c = 0.0;
  int candidate_depth_factor = 2;
  double bm25_k1 = 1.2;
  double bm25_b = 0.75;
  double bm25_name_boost = 2.0;

  // hierarchy
  int compression_ratio = 3;
  int max_layers = 5;
  int batch_size = 0;

  // ingestion
  int recent_window = 4;
  int dedup_candidates = 5;
  double edge_dedup_threshold = 0.9;
  std::string chunking = "per-turn";  // or "per-exchange"

  // evaluation
  int parallelism = 4;
  bool exclude_adversarial = true;

  // backends: a scripted-oracle fixture makes runs hermetic; endpoints
  // switch the oracle / embedder / re-ranker to live services.
  std::string oracle_fixture;
  std::string oracle_endpoint;
  std::string oracle_model;
  std::string embedder_endpoint;
  std::string embedder_model;
  int embedder_source_dim = 0;
  std::string reranker_endpoint;
  std::string reranker_model;

  static HarnessConfig from_json(const nlohmann::json& doc);
  static HarnessConfig from_file(const std::string& path);

  // Echoed into every report so runs are self-describing.
  nlohmann::json to_json() const;

  void validate() const;  // Error(config) with the offending field named

  StoreConfig store_config() const;
  BuildConfig build_config() const;
  IngestConfig ingest_config() const;
  RetrievalConfig retrieval_config() const;
};

}  // namespace hiermem
