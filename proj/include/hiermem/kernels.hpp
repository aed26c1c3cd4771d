#pragma once
// Scoring kernels behind the two similarity-search primitives. Each kernel
// has an OpenMP-parallel variant (used by the indexes) and a serial
// reference kept for equivalence tests and the benchmark target. Scores are
// computed independently per item with a fixed per-item summation order, so
// parallel and serial results are bit-identical.

#include <cstdint>
#include <vector>

namespace hiermem::kernels {

// Cosine of a unit (or zero) query against n stored vectors laid out as one
// flat row-major array of n * dim doubles. Stored vectors are unit or zero,
// so the dot product is the cosine.
void cosine_scores(const double* query, const double* vectors, std::size_t n,
                   std::size_t dim, double* out);
void cosine_scores_serial(const double* query, const double* vectors,
                          std::size_t n, std::size_t dim, double* out);

// One posting list entry per (document, term) with the data needed by the
// Okapi score: the candidate's per-term frequencies are gathered by the
// caller in query-term order so the summation order is fixed per document.
struct Bm25Term {
  double idf;        // ln(1 + (N - df + 0.5) / (df + 0.5))
  double tf;         // term frequency in this document (0 if absent)
};

struct Bm25Doc {
  double length;     // token count of the document
  const Bm25Term* terms;
  std::size_t term_count;
};

// Okapi BM25 over pre-gathered candidates: for each document,
//   sum_t idf_t * tf_t * (k1 + 1) / (tf_t + k1 * (1 - b + b * len / avgdl)).
void bm25_scores(const Bm25Doc* docs, std::size_t n, double k1, double b,
                 double avgdl, double* out);
void bm25_scores_serial(const Bm25Doc* docs, std::size_t n, double k1,
                        double b, double avgdl, double* out);

// Deterministic top-k selection over scored ids: descending score,
// ties broken by ascending id. Returns indices into `ids`.
std::vector<std::size_t> top_k_indices(const double* scores,
                                       const std::uint64_t* ids, std::size_t n,
                                       std::size_t k);

}  // namespace hiermem::kernels
