#include "hiermem/embedder.hpp"

#include <random>

#include <httplib.h>
#include <json.hpp>

#include "hiermem/lexical_index.hpp"

namespace hiermem {

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

EmbeddingVector HashEmbedder::token_vector(const std::string& token) const {
  // mt19937_64 output is standard-defined, and the mapping below uses only
  // exact IEEE operations, so token vectors are identical on every platform.
  std::mt19937_64 gen(fnv1a64(token));
  EmbeddingVector v(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;  // [0,1)
    v[i] = 2.0 * u - 1.0;
  }
  return v;
}

EmbeddingVector HashEmbedder::embed(const std::string& text) const {
  EmbeddingVector acc(dim_, 0.0);
  for (const auto& token : tokenize(text)) {
    const EmbeddingVector tv = token_vector(token);
    for (std::size_t i = 0; i < dim_; ++i) acc[i] += tv[i];
  }
  const double norm = vector_norm(acc);
  if (norm > 0.0)
    for (double& x : acc) x /= norm;
  return acc;
}

std::unique_ptr<Embedder> make_hash_embedder(std::size_t dim) {
  return std::make_unique<HashEmbedder>(dim);
}

EmbeddingVector RemoteEmbedder::embed(const std::string& text) const {
  httplib::Client client(config_.endpoint);
  client.set_connection_timeout(10);
  client.set_read_timeout(60);

  httplib::Headers headers;
  if (!config_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + config_.api_key);

  nlohmann::json body = {{"model", config_.model}, {"input", text}};
  auto res = client.Post("/v1/embeddings", headers, body.dump(),
                         "application/json");
  if (!res)
    throw Error(ErrorKind::oracle_unavailable,
                "embedding endpoint unreachable: " + config_.endpoint);
  if (res->status != 200)
    throw Error(ErrorKind::oracle_unavailable,
                "embedding endpoint returned status " +
                    std::to_string(res->status));

  EmbeddingVector full;
  try {
    auto parsed = nlohmann::json::parse(res->body);
    full = parsed.at("data").at(0).at("embedding").get<EmbeddingVector>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::oracle_unavailable,
                std::string("malformed embedding response: ") + e.what());
  }
  if (config_.source_dim != 0 && full.size() != config_.source_dim)
    throw Error(ErrorKind::oracle_unavailable,
                "embedding endpoint returned dimension " +
                    std::to_string(full.size()) + ", expected " +
                    std::to_string(config_.source_dim));
  if (full.size() < config_.target_dim)
    throw Error(ErrorKind::oracle_unavailable,
                "embedding endpoint returned dimension " +
                    std::to_string(full.size()) +
                    ", smaller than store dimension " +
                    std::to_string(config_.target_dim));
  return truncate_embedding(full, config_.target_dim);
}

}  // namespace hiermem
