#pragma once
// JSON encoding of the graph records, used by the snapshot file, the CLI
// reports, and the inspect dumps. Field names are part of the on-disk
// contract; decoders reject records with missing or mistyped fields.
//
// nlohmann::json keeps object keys sorted, and doubles are emitted as
// shortest round-trippable decimals, so encode() output is byte-stable and
// decode(encode(x)) reproduces x exactly.

#include <string>

#include <json.hpp>

#include "hiermem/types.hpp"

namespace hiermem::codec {

// Each encoded record carries a "type" discriminator so snapshot lines are
// self-describing.
inline constexpr const char* kTypeEpisode = "episode";
inline constexpr const char* kTypeEntity = "entity";
inline constexpr const char* kTypeCategory = "category";
inline constexpr const char* kTypeRelationEdge = "relation_edge";
inline constexpr const char* kTypeCategoryEdge = "category_edge";
inline constexpr const char* kTypeEpisodicEdge = "episodic_edge";

nlohmann::json encode(const EpisodeRecord& r);
nlohmann::json encode(const EntityRecord& r);
nlohmann::json encode(const CategoryRecord& r);
nlohmann::json encode(const RelationEdge& r);   // omits invalid_at when open
nlohmann::json encode(const CategoryEdge& r);
nlohmann::json encode(const EpisodicEdge& r);

EpisodeRecord decode_episode(const nlohmann::json& j);
EntityRecord decode_entity(const nlohmann::json& j);
CategoryRecord decode_category(const nlohmann::json& j);
RelationEdge decode_relation_edge(const nlohmann::json& j);
CategoryEdge decode_category_edge(const nlohmann::json& j);

// The "type" discriminator, or Error(data) when absent.
std::string record_type(const nlohmann::json& j);

// Parses one snapshot/report line. Error(data) on malformed JSON.
nlohmann::json parse_line(const std::string& line);

}  // namespace hiermem::codec
