#include "hiermem/lexical_index.hpp"

#include <algorithm>
#include <cmath>

#include "hiermem/kernels.hpp"

namespace hiermem {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    const bool constituent =
        (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
        (c >= 'A' && c <= 'Z') || c >= 0x80;
    if (constituent) {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                         : static_cast<char>(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

void LexicalIndex::upsert(IndexKind kind, NodeId id,
                          const std::vector<std::string>& tokens) {
  remove(kind, id);
  auto& p = part(kind);
  std::map<std::string, double> tf;
  for (const auto& t : tokens) tf[t] += 1.0;
  for (const auto& [term, f] : tf) {
    auto& list = p.postings[term];
    const auto it = std::lower_bound(
        list.begin(), list.end(), id.value,
        [](const Posting& a, std::uint64_t b) { return a.doc < b; });
    list.insert(it, Posting{id.value, f});
  }
  const double len = static_cast<double>(tokens.size());
  p.doc_len[id.value] = len;
  p.total_len += len;
}

void LexicalIndex::remove(IndexKind kind, NodeId id) {
  auto& p = part(kind);
  const auto it = p.doc_len.find(id.value);
  if (it == p.doc_len.end()) return;
  p.total_len -= it->second;
  p.doc_len.erase(it);
  for (auto pit = p.postings.begin(); pit != p.postings.end();) {
    auto& list = pit->second;
    const auto lit = std::lower_bound(
        list.begin(), list.end(), id.value,
        [](const Posting& a, std::uint64_t b) { return a.doc < b; });
    if (lit != list.end() && lit->doc == id.value) list.erase(lit);
    pit = list.empty() ? p.postings.erase(pit) : std::next(pit);
  }
}

void LexicalIndex::clear() {
  episodes_ = {};
  entities_ = {};
  edges_ = {};
}

std::vector<ScoredId> LexicalIndex::search(IndexKind kind,
                                           const std::string& query,
                                           std::size_t limit) const {
  const auto& p = part(kind);
  const std::size_t n_docs = p.doc_len.size();
  if (n_docs == 0 || limit == 0) return {};

  // Unique query terms in first-occurrence order.
  std::vector<std::string> terms;
  for (auto& t : tokenize(query))
    if (std::find(terms.begin(), terms.end(), t) == terms.end())
      terms.push_back(std::move(t));
  if (terms.empty()) return {};

  struct TermInfo {
    double idf;
    const std::vector<Posting>* postings;
  };
  std::vector<TermInfo> infos;
  std::vector<std::uint64_t> candidates;
  for (const auto& term : terms) {
    const auto it = p.postings.find(term);
    if (it == p.postings.end()) continue;
    const double df = static_cast<double>(it->second.size());
    const double n = static_cast<double>(n_docs);
    infos.push_back({std::log(1.0 + (n - df + 0.5) / (df + 0.5)), &it->second});
    for (const auto& post : it->second) candidates.push_back(post.doc);
  }
  if (candidates.empty()) return {};
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  // Gather per-candidate term frequencies in query-term order so the
  // kernel's per-document summation order is fixed.
  const std::size_t n_cand = candidates.size();
  const std::size_t n_terms = infos.size();
  std::vector<kernels::Bm25Term> term_data(n_cand * n_terms);
  std::vector<kernels::Bm25Doc> docs(n_cand);
  for (std::size_t i = 0; i < n_cand; ++i) {
    const std::uint64_t doc = candidates[i];
    for (std::size_t t = 0; t < n_terms; ++t) {
      const auto& list = *infos[t].postings;
      const auto it = std::lower_bound(
          list.begin(), list.end(), doc,
          [](const Posting& a, std::uint64_t b) { return a.doc < b; });
      const double tf = (it != list.end() && it->doc == doc) ? it->tf : 0.0;
      term_data[i * n_terms + t] = {infos[t].idf, tf};
    }
    docs[i] = {p.doc_len.at(doc), &term_data[i * n_terms], n_terms};
  }

  const double avgdl = p.total_len / static_cast<double>(n_docs);
  std::vector<double> scores(n_cand);
  kernels::bm25_scores(docs.data(), n_cand, params_.k1, params_.b, avgdl,
                       scores.data());

  const auto order =
      kernels::top_k_indices(scores.data(), candidates.data(), n_cand,
                             std::min(limit, n_cand));
  std::vector<ScoredId> out;
  out.reserve(order.size());
  for (std::size_t idx : order) {
    if (scores[idx] <= 0.0) break;  // descending order: rest are zero too
    out.push_back({NodeId{candidates[idx]}, scores[idx]});
  }
  return out;
}

std::size_t LexicalIndex::doc_count(IndexKind kind) const {
  return part(kind).doc_len.size();
}

std::vector<std::string> LexicalIndex::entity_tokens(
    const std::string& name, const std::string& summary) const {
  std::vector<std::string> out;
  const auto name_toks = tokenize(name);
  const long reps = std::max(1L, std::lround(params_.name_boost));
  for (long r = 0; r < reps; ++r)
    out.insert(out.end(), name_toks.begin(), name_toks.end());
  for (auto& t : tokenize(summary)) out.push_back(std::move(t));
  return out;
}

const LexicalIndex::Partition& LexicalIndex::part(IndexKind kind) const {
  switch (kind) {
    case IndexKind::episode_content: return episodes_;
    case IndexKind::entity_profile: return entities_;
    case IndexKind::edge_fact: return edges_;
  }
  throw Error(ErrorKind::usage, "unknown index kind");
}

LexicalIndex::Partition& LexicalIndex::part(IndexKind kind) {
  return const_cast<Partition&>(
      static_cast<const LexicalIndex*>(this)->part(kind));
}

}  // namespace hiermem
