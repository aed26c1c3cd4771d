#pragma once
// Prompt templates for the remote oracle. The categorization and node-
// selection templates are the engine's canonical versions and must not be
// edited casually — scripted tests pin their wording. The remaining stages
// use minimal in-house templates that demand strict JSON so responses can
// be schema-validated.

#include <string>
#include <vector>

namespace hiermem::prompts {

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

using Messages = std::vector<ChatMessage>;

// content: indexed "i. name: [description]" lines.
// existing_categories: rendered list offered for reuse.
// prev_example: sample of the previous layer's category names.
Messages categorization(int layer, const std::string& content,
                        const std::string& existing_categories,
                        const std::string& prev_example);

// nodes_info: one JSON object per offered node (name, uuid, tags, layer).
Messages node_selection(const std::string& query,
                        const std::string& nodes_info);

Messages entity_extraction(const std::string& current,
                           const std::string& recent);
Messages entity_reflection(const std::string& current,
                           const std::string& recent,
                           const std::string& already_found_json);
Messages duplicate_resolution(const std::string& candidate,
                              const std::string& existing_json);
Messages attribute_extraction(const std::string& name,
                              const std::string& current,
                              const std::string& recent);
Messages edge_extraction(const std::string& current, const std::string& recent,
                         const std::string& entities_json);
Messages edge_reflection(const std::string& current, const std::string& recent,
                         const std::string& entities_json,
                         const std::string& already_found_json);
Messages edge_duplicate_resolution(const std::string& fact,
                                   const std::string& existing_json);
Messages answer(const std::string& query, const std::string& context);
Messages judge(const std::string& question, const std::string& gold,
               const std::string& predicted);

}  // namespace hiermem::prompts
