#include "hiermem/kernels.hpp"

#include <algorithm>
#include <numeric>

namespace hiermem::kernels {

namespace {

inline double dot(const double* a, const double* b, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t i = 0; i < dim; ++i) acc += a[i] * b[i];
  return acc;
}

inline double bm25_doc_score(const Bm25Doc& d, double k1, double b,
                             double avgdl) {
  const double norm = k1 * (1.0 - b + b * (avgdl > 0.0 ? d.length / avgdl : 0.0));
  double score = 0.0;
  for (std::size_t t = 0; t < d.term_count; ++t) {
    const double tf = d.terms[t].tf;
    if (tf <= 0.0) continue;
    score += d.terms[t].idf * (tf * (k1 + 1.0)) / (tf + norm);
  }
  return score;
}

}  // namespace

void cosine_scores_serial(const double* query, const double* vectors,
                          std::size_t n, std::size_t dim, double* out) {
  for (std::size_t i = 0; i < n; ++i)
    out[i] = dot(query, vectors + i * dim, dim);
}

void cosine_scores(const double* query, const double* vectors, std::size_t n,
                   std::size_t dim, double* out) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    out[i] = dot(query, vectors + static_cast<std::size_t>(i) * dim, dim);
}

void bm25_scores_serial(const Bm25Doc* docs, std::size_t n, double k1,
                        double b, double avgdl, double* out) {
  for (std::size_t i = 0; i < n; ++i)
    out[i] = bm25_doc_score(docs[i], k1, b, avgdl);
}

void bm25_scores(const Bm25Doc* docs, std::size_t n, double k1, double b,
                 double avgdl, double* out) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    out[i] = bm25_doc_score(docs[i], k1, b, avgdl);
}

std::vector<std::size_t> top_k_indices(const double* scores,
                                       const std::uint64_t* ids, std::size_t n,
                                       std::size_t k) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  if (k >= n) {
    std::sort(order.begin(), order.end(), better);
    return order;
  }
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), better);
  order.resize(k);
  return order;
}

}  // namespace hiermem::kernels
