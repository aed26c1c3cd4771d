#pragma once
// Pluggable text embedders. HashEmbedder is the hermetic default: a
// deterministic bag-of-tokens embedding that is bit-identical across runs
// and platforms. RemoteEmbedder talks to an OpenAI-compatible
// /v1/embeddings endpoint and prefix-truncates to the store dimension.

#include <cstdint>
#include <memory>
#include <string>

#include "hiermem/types.hpp"

namespace hiermem {

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  // Unit-norm embedding of the text; the zero vector for token-free text.
  virtual EmbeddingVector embed(const std::string& text) const = 0;
};

// Deterministic pseudo-embedder. Each token maps to a fixed pseudo-random
// direction seeded by FNV-1a of its bytes; a text embeds as the normalized
// sum of its token vectors, so texts sharing tokens have higher cosine.
// Avoids libm transcendentals so results are platform-stable.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = kDefaultEmbeddingDim) : dim_(dim) {}

  std::size_t dimension() const override { return dim_; }
  EmbeddingVector embed(const std::string& text) const override;

  // Raw per-token direction (unnormalized); exposed for tests.
  EmbeddingVector token_vector(const std::string& token) const;

 private:
  std::size_t dim_;
};

std::uint64_t fnv1a64(const std::string& bytes);

struct RemoteEmbedderConfig {
  std::string endpoint;   // base URL, e.g. http://host:port
  std::string model;
  std::string api_key;
  std::size_t source_dim = 0;  // 0 = accept whatever the endpoint returns
  std::size_t target_dim = kDefaultEmbeddingDim;
};

class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderConfig config)
      : config_(std::move(config)) {}

  std::size_t dimension() const override { return config_.target_dim; }
  // POSTs /v1/embeddings and prefix-truncates the result to target_dim.
  // Throws Error(oracle_unavailable) on transport failure.
  EmbeddingVector embed(const std::string& text) const override;

 private:
  RemoteEmbedderConfig config_;
};

std::unique_ptr<Embedder> make_hash_embedder(std::size_t dim);

}  // namespace hiermem
