#include "hiermem/json_codec.hpp"

namespace hiermem::codec {
namespace {

using nlohmann::json;

json encode_id(NodeId id) { return id.value; }

NodeId decode_id(const json& j, const char* field) {
  if (!j.is_number_unsigned())
    throw Error(ErrorKind::data,
                std::string(field) + " must be an unsigned integer id");
  return NodeId{j.get<std::uint64_t>()};
}

json encode_embedding(const EmbeddingVector& v) { return v; }

EmbeddingVector decode_embedding(const json& j, const char* field) {
  if (!j.is_array())
    throw Error(ErrorKind::data, std::string(field) + " must be an array");
  EmbeddingVector v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number())
      throw Error(ErrorKind::data,
                  std::string(field) + " must contain only numbers");
    v.push_back(x.get<double>());
  }
  if (!vector_is_finite(v))
    throw Error(ErrorKind::data,
                std::string(field) + " contains a non-finite component");
  return v;
}

const json& require(const json& j, const char* field, const char* record) {
  auto it = j.find(field);
  if (it == j.end())
    throw Error(ErrorKind::data, std::string(record) + " record is missing "
                                     "field \"" + field + "\"");
  return *it;
}

std::string decode_string(const json& j, const char* field) {
  if (!j.is_string())
    throw Error(ErrorKind::data, std::string(field) + " must be a string");
  return j.get<std::string>();
}

Timestamp decode_timestamp(const json& j, const char* field) {
  return Timestamp::parse(decode_string(j, field));
}

void decode_entity_core(const json& j, const char* record, EntityRecord& r) {
  r.id = decode_id(require(j, "id", record), "id");
  r.name = decode_string(require(j, "name", record), "name");
  r.summary = decode_string(require(j, "summary", record), "summary");
  const json& tags = require(j, "tag", record);
  if (!tags.is_array())
    throw Error(ErrorKind::data, "tag must be an array of strings");
  for (const auto& t : tags) r.tag.push_back(decode_string(t, "tag"));
  const json& eps = require(j, "episode_idx", record);
  if (!eps.is_array())
    throw Error(ErrorKind::data, "episode_idx must be an array of ids");
  for (const auto& e : eps) r.episode_idx.insert(decode_id(e, "episode_idx"));
  r.name_embedding =
      decode_embedding(require(j, "name_embedding", record), "name_embedding");
  r.summary_embedding = decode_embedding(
      require(j, "summary_embedding", record), "summary_embedding");
  const json& layer = require(j, "layer", record);
  if (!layer.is_number_integer())
    throw Error(ErrorKind::data, "layer must be an integer");
  r.layer = layer.get<int>();
}

json encode_entity_core(const EntityRecord& r, const char* type) {
  json eps = json::array();
  for (NodeId e : r.episode_idx) eps.push_back(encode_id(e));
  return json{{"type", type},
              {"id", encode_id(r.id)},
              {"name", r.name},
              {"summary", r.summary},
              {"tag", r.tag},
              {"episode_idx", std::move(eps)},
              {"name_embedding", encode_embedding(r.name_embedding)},
              {"summary_embedding", encode_embedding(r.summary_embedding)},
              {"layer", r.layer}};
}

}  // namespace

json encode(const EpisodeRecord& r) {
  return json{{"type", kTypeEpisode},
              {"id", encode_id(r.id)},
              {"content", r.content},
              {"valid_at", r.valid_at.to_rfc3339()},
              {"episode_embedding", encode_embedding(r.episode_embedding)},
              {"source_session", r.source_session}};
}

json encode(const EntityRecord& r) {
  return encode_entity_core(r, kTypeEntity);
}

json encode(const CategoryRecord& r) {
  json j = encode_entity_core(r, kTypeCategory);
  j["promoted"] = r.promoted;
  return j;
}

json encode(const RelationEdge& r) {
  json j{{"type", kTypeRelationEdge},
         {"id", encode_id(r.id)},
         {"source", encode_id(r.source)},
         {"target", encode_id(r.target)},
         {"fact", r.fact},
         {"fact_embedding", encode_embedding(r.fact_embedding)},
         {"valid_at", r.valid_at.to_rfc3339()}};
  if (r.invalid_at) j["invalid_at"] = r.invalid_at->to_rfc3339();
  return j;
}

json encode(const CategoryEdge& r) {
  return json{{"type", kTypeCategoryEdge},
              {"parent", encode_id(r.parent)},
              {"child", encode_id(r.child)}};
}

json encode(const EpisodicEdge& r) {
  return json{{"type", kTypeEpisodicEdge},
              {"entity", encode_id(r.entity)},
              {"episode", encode_id(r.episode)}};
}

EpisodeRecord decode_episode(const json& j) {
  EpisodeRecord r;
  r.id = decode_id(require(j, "id", kTypeEpisode), "id");
  r.content = decode_string(require(j, "content", kTypeEpisode), "content");
  r.valid_at = decode_timestamp(require(j, "valid_at", kTypeEpisode), "valid_at");
  r.episode_embedding = decode_embedding(
      require(j, "episode_embedding", kTypeEpisode), "episode_embedding");
  r.source_session =
      decode_string(require(j, "source_session", kTypeEpisode), "source_session");
  return r;
}

EntityRecord decode_entity(const json& j) {
  EntityRecord r;
  decode_entity_core(j, kTypeEntity, r);
  return r;
}

CategoryRecord decode_category(const json& j) {
  CategoryRecord r;
  decode_entity_core(j, kTypeCategory, r);
  const json& promoted = require(j, "promoted", kTypeCategory);
  if (!promoted.is_boolean())
    throw Error(ErrorKind::data, "promoted must be a boolean");
  r.promoted = promoted.get<bool>();
  return r;
}

RelationEdge decode_relation_edge(const json& j) {
  RelationEdge r;
  r.id = decode_id(require(j, "id", kTypeRelationEdge), "id");
  r.source = decode_id(require(j, "source", kTypeRelationEdge), "source");
  r.target = decode_id(require(j, "target", kTypeRelationEdge), "target");
  r.fact = decode_string(require(j, "fact", kTypeRelationEdge), "fact");
  r.fact_embedding = decode_embedding(
      require(j, "fact_embedding", kTypeRelationEdge), "fact_embedding");
  r.valid_at =
      decode_timestamp(require(j, "valid_at", kTypeRelationEdge), "valid_at");
  if (auto it = j.find("invalid_at"); it != j.end() && !it->is_null())
    r.invalid_at = decode_timestamp(*it, "invalid_at");
  return r;
}

CategoryEdge decode_category_edge(const json& j) {
  CategoryEdge r;
  r.parent = decode_id(require(j, "parent", kTypeCategoryEdge), "parent");
  r.child = decode_id(require(j, "child", kTypeCategoryEdge), "child");
  return r;
}

std::string record_type(const json& j) {
  if (!j.is_object())
    throw Error(ErrorKind::data, "record line is not a JSON object");
  return decode_string(require(j, "type", "record"), "type");
}

nlohmann::json parse_line(const std::string& line) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded())
    throw Error(ErrorKind::data, "malformed JSON line");
  return j;
}

}  // namespace hiermem::codec
