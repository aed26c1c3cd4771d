#include "hiermem/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace hiermem {

namespace {

using nlohmann::json;

template <typename T>
void read_field(const json& doc, const char* key, T& into) {
  auto it = doc.find(key);
  if (it == doc.end()) return;
  try {
    into = it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::config,
                std::string("config field '") + key + "' has the wrong type");
  }
}

}  // namespace

HarnessConfig HarnessConfig::from_json(const json& doc) {
  if (!doc.is_object())
    throw Error(ErrorKind::config, "config must be a JSON object");

  static const std::set<std::string> known = {
      "embedding_dim",     "top_k",
      "rrf_c",             "candidate_depth_factor",
      "bm25_k1",           "bm25_b",
      "bm25_name_boost",   "compression_ratio",
      "max_layers",        "batch_size",
      "recent_window",     "dedup_candidates",
      "edge_dedup_threshold", "chunking",
      "parallelism",       "exclude_adversarial",
      "oracle_fixture",    "oracle_endpoint",
      "oracle_model",      "embedder_endpoint",
      "embedder_model",    "embedder_source_dim",
      "reranker_endpoint", "reranker_model"};
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!known.count(it.key()))
      throw Error(ErrorKind::config, "unknown config key '" + it.key() + "'");

  HarnessConfig c;
  read_field(doc, "embedding_dim", c.embedding_dim);
  read_field(doc, "top_k", c.top_k);
  read_field(doc, "rrf_c", c.rrf_c);
  read_field(doc, "candidate_depth_factor", c.candidate_depth_factor);
  read_field(doc, "bm25_k1", c.bm25_k1);
  read_field(doc, "bm25_b", c.bm25_b);
  read_field(doc, "bm25_name_boost", c.bm25_name_boost);
  read_field(doc, "compression_ratio", c.compression_ratio);
  read_field(doc, "max_layers", c.max_layers);
  read_field(doc, "batch_size", c.batch_size);
  read_field(doc, "recent_window", c.recent_window);
  read_field(doc, "dedup_candidates", c.dedup_candidates);
  read_field(doc, "edge_dedup_threshold", c.edge_dedup_threshold);
  read_field(doc, "chunking", c.chunking);
  read_field(doc, "parallelism", c.parallelism);
  read_field(doc, "exclude_adversarial", c.exclude_adversarial);
  read_field(doc, "oracle_fixture", c.oracle_fixture);
  read_field(doc, "oracle_endpoint", c.oracle_endpoint);
  read_field(doc, "oracle_model", c.oracle_model);
  read_field(doc, "embedder_endpoint", c.embedder_endpoint);
  read_field(doc, "embedder_model", c.embedder_model);
  read_field(doc, "embedder_source_dim", c.embedder_source_dim);
  read_field(doc, "reranker_endpoint", c.reranker_endpoint);
  read_field(doc, "reranker_model", c.reranker_model);
  c.validate();
  return c;
}

HarnessConfig HarnessConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::config, "cannot open config '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  json doc = json::parse(buffer.str(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded())
    throw Error(ErrorKind::config, "config '" + path + "' is not valid JSON");
  return from_json(doc);
}

json HarnessConfig::to_json() const {
  return {{"embedding_dim", embedding_dim},
          {"top_k", top_k},
          {"rrf_c", rrf_c},
          {"candidate_depth_factor", candidate_depth_factor},
          {"bm25_k1", bm25_k1},
          {"bm25_b", bm25_b},
          {"bm25_name_boost", bm25_name_boost},
          {"compression_ratio", compression_ratio},
          {"max_layers", max_layers},
          {"batch_size", batch_size},
          {"recent_window", recent_window},
          {"dedup_candidates", dedup_candidates},
          {"edge_dedup_threshold", edge_dedup_threshold},
          {"chunking", chunking},
          {"parallelism", parallelism},
          {"exclude_adversarial", exclude_adversarial},
          {"oracle_fixture", oracle_fixture},
          {"oracle_endpoint", oracle_endpoint},
          {"oracle_model", oracle_model},
          {"embedder_endpoint", embedder_endpoint},
          {"embedder_model", embedder_model},
          {"embedder_source_dim", embedder_source_dim},
          {"reranker_endpoint", reranker_endpoint},
          {"reranker_model", reranker_model}};
}

void HarnessConfig::validate() const {
  if (embedding_dim < 1)
    throw Error(ErrorKind::config, "embedding_dim must be positive");
  if (top_k < 1) throw Error(ErrorKind::config, "top_k must be positive");
  if (rrf_c < 0.0)
    throw Error(ErrorKind::config, "rrf_c must be non-negative");
  if (candidate_depth_factor < 1)
    throw Error(ErrorKind::config, "candidate_depth_factor must be positive");
  if (compression_ratio < 2)
    throw Error(ErrorKind::config, "compression_ratio must be at least 2");
  if (max_layers < 1)
    throw Error(ErrorKind::config, "max_layers must be positive");
  if (batch_size < 0)
    throw Error(ErrorKind::config, "batch_size must be non-negative");
  if (recent_window < 0)
    throw Error(ErrorKind::config, "recent_window must be non-negative");
  if (dedup_candidates < 1)
    throw Error(ErrorKind::config, "dedup_candidates must be positive");
  if (edge_dedup_threshold < 0.0 || edge_dedup_threshold > 1.0)
    throw Error(ErrorKind::config,
                "edge_dedup_threshold must be within [0, 1]");
  if (chunking != "per-turn" && chunking != "per-exchange")
    throw Error(ErrorKind::config,
                "chunking must be 'per-turn' or 'per-exchange'");
  if (parallelism < 1)
    throw Error(ErrorKind::config, "parallelism must be positive");
  if (embedder_source_dim < 0)
    throw Error(ErrorKind::config,
                "embedder_source_dim must be non-negative");
}

StoreConfig HarnessConfig::store_config() const {
  StoreConfig sc;
  sc.embedding_dim = static_cast<std::size_t>(embedding_dim);
  sc.compression_ratio = compression_ratio;
  sc.max_layers = max_layers;
  sc.top_k = top_k;
  sc.bm25 = Bm25Params{bm25_k1, bm25_b, bm25_name_boost};
  return sc;
}

BuildConfig HarnessConfig::build_config() const {
  BuildConfig bc;
  bc.compression_ratio = compression_ratio;
  bc.max_layers = max_layers;
  bc.batch_size = batch_size;
  return bc;
}

IngestConfig HarnessConfig::ingest_config() const {
  IngestConfig ic;
  ic.recent_window = static_cast<std::size_t>(recent_window);
  ic.dedup_candidates = static_cast<std::size_t>(dedup_candidates);
  ic.edge_dedup_threshold = edge_dedup_threshold;
  ic.rrf_c = rrf_c;
  ic.chunking = chunking == "per-exchange" ? ChunkPolicy::per_exchange
                                           : ChunkPolicy::per_turn;
  return ic;
}

RetrievalConfig HarnessConfig::retrieval_config() const {
  RetrievalConfig rc;
  rc.budget.k = top_k;
  rc.rrf_c = rrf_c;
  rc.candidate_depth_factor = candidate_depth_factor;
  return rc;
}

}  // namespace hiermem
