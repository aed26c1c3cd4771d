#include "hiermem/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "hiermem/embedder.hpp"

namespace hiermem {

namespace {

// Civil-date conversion (proleptic Gregorian), exact over the useful range.
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

bool parse_fixed_uint(const std::string& s, std::size_t pos, std::size_t len,
                      long& out) {
  if (pos + len > s.size()) return false;
  long v = 0;
  for (std::size_t i = 0; i < len; ++i) {
    const char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

}  // namespace

std::string Timestamp::to_rfc3339() const {
  std::int64_t days = seconds / 86400;
  std::int64_t rem = seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  int y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, m,
                d, static_cast<long long>(rem / 3600),
                static_cast<long long>(rem / 60 % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

std::string Timestamp::to_date() const {
  std::int64_t days = seconds / 86400;
  if (seconds % 86400 < 0) days -= 1;
  int y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y, m, d);
  return buf;
}

Timestamp Timestamp::parse(const std::string& text) {
  long y, mo, da;
  const auto fail = [&]() -> Timestamp {
    throw Error(ErrorKind::data, "invalid timestamp: '" + text + "'");
  };
  if (!parse_fixed_uint(text, 0, 4, y) || text.size() < 10 || text[4] != '-' ||
      !parse_fixed_uint(text, 5, 2, mo) || text[7] != '-' ||
      !parse_fixed_uint(text, 8, 2, da))
    return fail();
  if (mo < 1 || mo > 12 || da < 1 || da > 31) return fail();

  std::int64_t secs = days_from_civil(static_cast<int>(y),
                                      static_cast<unsigned>(mo),
                                      static_cast<unsigned>(da)) *
                      86400;
  if (text.size() == 10) return Timestamp{secs};

  if (text[10] != 'T' && text[10] != 't' && text[10] != ' ') return fail();
  long hh, mi, ss;
  if (!parse_fixed_uint(text, 11, 2, hh) || text.size() < 19 ||
      text[13] != ':' || !parse_fixed_uint(text, 14, 2, mi) ||
      text[16] != ':' || !parse_fixed_uint(text, 17, 2, ss))
    return fail();
  if (hh > 23 || mi > 59 || ss > 60) return fail();
  secs += hh * 3600 + mi * 60 + ss;

  std::size_t pos = 19;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;  // fractional seconds: truncate
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
  }
  if (pos >= text.size()) return fail();  // offset is mandatory with a time
  const char c = text[pos];
  if (c == 'Z' || c == 'z') {
    if (pos + 1 != text.size()) return fail();
    return Timestamp{secs};
  }
  if (c != '+' && c != '-') return fail();
  long oh, om;
  if (!parse_fixed_uint(text, pos + 1, 2, oh) || pos + 6 != text.size() ||
      text[pos + 3] != ':' || !parse_fixed_uint(text, pos + 4, 2, om))
    return fail();
  const std::int64_t offset = oh * 3600 + om * 60;
  return Timestamp{c == '+' ? secs - offset : secs + offset};
}

double vector_norm(const EmbeddingVector& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

bool vector_is_finite(const EmbeddingVector& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

EmbeddingVector truncate_embedding(const EmbeddingVector& v,
                                   std::size_t target_dim) {
  if (target_dim > v.size())
    throw Error(ErrorKind::data,
                "truncate_embedding: target dimension " +
                    std::to_string(target_dim) + " exceeds input dimension " +
                    std::to_string(v.size()));
  EmbeddingVector out(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(target_dim));
  const double norm = vector_norm(out);
  // A norm within round-off of 1 is left untouched: dividing by
  // 1.0 +/- 1ulp would perturb components and break idempotence.
  if (norm > 0.0 && std::abs(norm - 1.0) >
                        8 * std::numeric_limits<double>::epsilon()) {
    for (double& x : out) x /= norm;
  }
  return out;
}

std::size_t word_count(const std::string& text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = (c == ' ' || c == '\t' || c == '\n' || c == '\r');
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

bool name_contains_standalone_and(const std::string& name) {
  const std::string lower = [&] {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
      return static_cast<char>(std::tolower(c));
    });
    return s;
  }();
  std::size_t pos = 0;
  while ((pos = lower.find("and", pos)) != std::string::npos) {
    const bool left_ok = pos == 0 || !std::isalnum(static_cast<unsigned char>(lower[pos - 1]));
    const std::size_t end = pos + 3;
    const bool right_ok =
        end >= lower.size() || !std::isalnum(static_cast<unsigned char>(lower[end]));
    if (left_ok && right_ok) return true;
    pos += 1;
  }
  return false;
}

namespace {

void check_embedding(std::vector<std::string>& out, const EmbeddingVector& e,
                     const char* which, std::size_t dim) {
  if (e.size() != dim)
    out.push_back(std::string(which) + ": dimension " +
                  std::to_string(e.size()) + " != store dimension " +
                  std::to_string(dim));
  if (!vector_is_finite(e))
    out.push_back(std::string(which) + ": non-finite component");
}

void check_entity_core(std::vector<std::string>& out, const EntityRecord& r,
                       std::size_t dim) {
  if (r.name.empty()) out.push_back("name is empty");
  if (r.tag.size() > kMaxTags)
    out.push_back("tag has " + std::to_string(r.tag.size()) +
                  " descriptors (max 5)");
  for (const auto& t : r.tag)
    if (word_count(t) > kMaxTagWords)
      out.push_back("tag descriptor '" + t + "' exceeds 3 words");
  check_embedding(out, r.name_embedding, "name_embedding", dim);
  check_embedding(out, r.summary_embedding, "summary_embedding", dim);
}

}  // namespace

std::vector<std::string> validate(const EpisodeRecord& r, std::size_t dim) {
  std::vector<std::string> out;
  if (r.content.empty()) out.push_back("content is empty");
  check_embedding(out, r.episode_embedding, "episode_embedding", dim);
  return out;
}

std::vector<std::string> validate(const EntityRecord& r, std::size_t dim) {
  std::vector<std::string> out;
  check_entity_core(out, r, dim);
  if (r.layer != 0) out.push_back("entity layer must be 0");
  return out;
}

std::vector<std::string> validate(const CategoryRecord& r, std::size_t dim) {
  std::vector<std::string> out;
  check_entity_core(out, r, dim);
  if (r.layer < 1) out.push_back("category layer must be >= 1");
  if (name_contains_standalone_and(r.name))
    out.push_back("category name '" + r.name +
                  "' contains the standalone connector word \"and\"");
  return out;
}

std::vector<std::string> validate(const RelationEdge& r, std::size_t dim,
                                  bool allow_reflexive) {
  std::vector<std::string> out;
  if (!r.source.valid() || !r.target.valid())
    out.push_back("edge endpoint id is unset");
  if (r.source == r.target && !allow_reflexive)
    out.push_back("reflexive edge (source == target) not allowed");
  if (r.fact.empty()) out.push_back("fact is empty");
  if (r.invalid_at && *r.invalid_at < r.valid_at)
    out.push_back("invalid_at precedes valid_at");
  check_embedding(out, r.fact_embedding, "fact_embedding", dim);
  return out;
}

EntityRecord merge_entity_attributes(const EntityRecord& existing,
                                     const EntityRecord& incoming,
                                     const Embedder& embedder) {
  if (existing.name_embedding.size() != embedder.dimension())
    throw Error(ErrorKind::config,
                "merge_entity_attributes: embedding dimension mismatch");

  EntityRecord merged = existing;  // canonical name + id stay
  merged.summary = incoming.summary.empty() ? existing.summary : incoming.summary;
  merged.episode_idx.insert(incoming.episode_idx.begin(),
                            incoming.episode_idx.end());

  // Tags: union, incoming first (newest wins on order), capped at 5.
  std::vector<std::string> tags;
  for (const auto& t : incoming.tag)
    if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
  for (const auto& t : existing.tag)
    if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
  if (tags.size() > kMaxTags) tags.resize(kMaxTags);
  merged.tag = std::move(tags);

  merged.name_embedding = embedder.embed(merged.name);
  merged.summary_embedding = embedder.embed(merged.summary);
  return merged;
}

}  // namespace hiermem
