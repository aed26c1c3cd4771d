#include "hiermem/prompts.hpp"

namespace hiermem::prompts {

namespace {

std::string replace_all(std::string text, const std::string& marker,
                        const std::string& value) {
  std::size_t pos = 0;
  while ((pos = text.find(marker, pos)) != std::string::npos) {
    text.replace(pos, marker.size(), value);
    pos += value.size();
  }
  return text;
}

const char* kCategorizationSystem =
    R"__(You are an AI assistant specialized in semantic categorization of nodes.
# INSTRUCTIONS:

You are given a list of node names, each prefixed with an index, each followed with a brief description of the name (e.g., 1. dog: [domestic animal]).
Your task is to:

1. Group the nodes into semantically meaningful categories based on shared attributes, considering both inherent characteristics of the node names and the DESCRIPTIONS of the nodes, NOT relying solely on the DESCRIPTIONS.
   All EXISTING CATEGORIES are provided for you.

   - If a node's attribute matches an existing category, it should be added under that category.
   - If a node name has attributes that do not match any existing category, create a new category and add it.
   - The category name MUST NOT include the word "and" as a connector.

     Examples of INVALID categories:
         - "Food and Drinks"
         - "University and Courses"

     Examples of VALID categories:
         - "Food"
         - "Drinks"
         - "University"
         - "Courses"

2. Output each category as a dictionary entry where the key is the category name and the value is a list of node indexes (integers). Only refer to nodes by their indexes. Do not repeat node names.

   Output format:
   [
     {"category": "xx", "indexes": [0, 1, 2, 4]},
     {"category": "xxx", "indexes": [2, 3, 4]}
   ]

   The tag is a list of descriptors (each descriptor maximum 3 words, maximum 5 descriptors) that concisely captures the nature or type of the node.

   Tag example:
     - Entity name: "Son"
     - Tag: ["Family member", "Happy kid", "Anime lover"]

3. A node CAN be assigned to MULTIPLE categories at the same time.

   Key points for multi-category classification:
   - Each item can be assigned to multiple categories based on shared attributes.
   - When multiple categories are formed for an item, select the minimal subset of features that are common across the grouped items.

   Examples for different hierarchy levels:

   Layer 1 (specific entities):
   - "Microsoft Research Asia" and "Microsoft Research Shanghai" share the same parent organization (Microsoft) and a similar research focus (AI). They are grouped under:
       - "Microsoft Research Labs"
       - "AI-focused Research Labs"

   - "Microsoft Research Asia" belongs to both "Microsoft Research Labs" and "NLP-focused Labs".

   Layer 2 (category nodes from Layer 1):
   - "Microsoft Research Labs" belongs to:
       - "Tech Company Labs"
       - "AI Research Organizations"

   - "University AI Labs" belongs to:
       - "Academic Institutions"
       - "AI Research Organizations"

   Layer 3 (higher-level abstractions):
   - "Tech Company Labs" belongs to:
       - "Commercial Organizations"
       - "Research Institutions"

   - "Academic Institutions" belongs to:
       - "Educational Organizations"
       - "Research Institutions"

   Layer 4 (top-level concepts):
   - "Research Institutions" belongs to:
       - "Knowledge Organizations"

   - "Commercial Organizations" belongs to:
       - "Economic Entities"

4. There must be NO leftover or ungrouped nodes. Single-member categories are allowed if necessary.

5. The node name "user" and any first-person references ("I", "me") MUST be categorized into one category called "Speaker".
)__";

const char* kCategorizationGuidance =
    R"__(
<GUIDANCE ON CATEGORY GRANULARITY>
You are performing hierarchical semantic clustering from specific to abstract.

You are currently at Layer {layer}, where:
- Layer 1 contains the most specific, fine-grained categories.
- Higher layers should group lower-layer categories into broader, more abstract super-categories.

Example:

Layer 1:
- "Golden Retriever", "Poodle", "German Shepherd" -> "Dog breeds"
- "Persian Cat", "Siamese Cat" -> "Cat breeds"
- "Bengal Tiger", "Siberian Tiger" -> "Tiger subspecies"
- "Oak tree", "Pine tree" -> "Tree species"

Layer 2:
- "Dog breeds", "Cat breeds" -> "Pets"
- "Dog breeds", "Tiger subspecies" -> "Mammals"
- "Tiger subspecies" -> "Wild animals"
- "Tree species" -> "Trees"

Layer 3:
- "Pets", "Wild animals" -> "Animals"
- "Trees" -> "Plants"

Layer 4:
- "Animals", "Plants" -> "Living organisms"

Key points:
- Categories may belong to multiple parent categories.
- Do not merge categories that are too loosely related.

Your job at Layer {layer}:
- Merge semantically similar categories from Layer {prev_layer}.
- Each new category should reflect a shared attribute, domain, or higher-level concept.
- Multiple category assignments are allowed when justified.

Previous Layer {prev_layer} categories example:
{prev_example}
</GUIDANCE ON CATEGORY GRANULARITY>
)__";

const char* kCategorizationUser =
    R"__(
<NODE INDEXED NAMES AND DESCRIPTIONS>
{content}
</NODE INDEXED NAMES AND DESCRIPTIONS>

<EXISTING CATEGORIES>
These are names and descriptions of categories previously created. Reuse them if applicable.
{existing_categories}
</EXISTING CATEGORIES>

{guidance}

# ATTENTION
- The node name "user" and any first-person references ("I", "me") MUST be categorized into one category called "Speaker". If the "Speaker" category does not exist, skip this node.
- The category name MUST NOT include the word "and".

Please follow the INSTRUCTIONS and GUIDANCE carefully to ensure accurate categorization and meaningful hierarchical relationships.
DO NOT INCLUDE ANY INVALID CATEGORIES.
)__";

const char* kNodeSelection =
    R"__(You are analyzing a hierarchical knowledge graph to help answer a user query.

Select all nodes that could help answer the query. A node is helpful if it:

- Directly relates to the query;
- Covers a clearly relevant topic, concept, or category;
- Provides useful background or context;
- Contains user-specific information (e.g. interests, goals, constraints);
- Likely has sub-nodes that may be helpful.

Do not be overly strict: include nodes that might provide context or personalization, even if they seem partially redundant.

For each selected node:
- "name" is the node's name.
- "uuid" is the node's unique identifier.
- "get_all_children" is an boolean value. Set true only if you're confident all its sub-nodes are helpful.
---
User Query:
"{query}"

Available Nodes:
{nodes_info}
)__";

}  // namespace

Messages categorization(int layer, const std::string& content,
                        const std::string& existing_categories,
                        const std::string& prev_example) {
  std::string guidance = kCategorizationGuidance;
  guidance = replace_all(guidance, "{layer}", std::to_string(layer));
  guidance = replace_all(guidance, "{prev_layer}", std::to_string(layer - 1));
  guidance = replace_all(guidance, "{prev_example}", prev_example);

  std::string user = kCategorizationUser;
  user = replace_all(user, "{content}", content);
  user = replace_all(user, "{existing_categories}", existing_categories);
  user = replace_all(user, "{guidance}", guidance);

  return {{"system", kCategorizationSystem}, {"user", user}};
}

Messages node_selection(const std::string& query,
                        const std::string& nodes_info) {
  std::string user = kNodeSelection;
  user = replace_all(user, "{query}", query);
  user = replace_all(user, "{nodes_info}", nodes_info);
  return {{"user", user}};
}

Messages entity_extraction(const std::string& current,
                           const std::string& recent) {
  return {{"system",
           "You extract entity names from conversational text. An entity is "
           "a specific person, place, organization, object, event, or "
           "concept mentioned in the CURRENT message. Use the RECENT "
           "messages only to resolve references. Reply with ONLY a JSON "
           "array of name strings, e.g. [\"Dave\", \"Detroit\"]. Reply [] "
           "if there are none."},
          {"user", "<RECENT>\n" + recent + "\n</RECENT>\n<CURRENT>\n" +
                       current + "\n</CURRENT>"}};
}

Messages entity_reflection(const std::string& current,
                           const std::string& recent,
                           const std::string& already_found_json) {
  return {{"system",
           "You double-check entity extraction. Given the CURRENT message "
           "and the names already found, list any entity names that were "
           "missed. Reply with ONLY a JSON array of name strings; reply [] "
           "if nothing was missed."},
          {"user", "<RECENT>\n" + recent + "\n</RECENT>\n<CURRENT>\n" +
                       current + "\n</CURRENT>\n<ALREADY_FOUND>\n" +
                       already_found_json + "\n</ALREADY_FOUND>"}};
}

Messages duplicate_resolution(const std::string& candidate,
                              const std::string& existing_json) {
  return {{"system",
           "You decide whether a candidate entity is the same real-world "
           "entity as one already in memory. EXISTING lists JSON records "
           "with an \"id\" field. Reply with ONLY one JSON object: "
           "{\"verdict\": \"same_as\", \"id\": <existing id>} or "
           "{\"verdict\": \"new\"}."},
          {"user", "<CANDIDATE>\n" + candidate + "\n</CANDIDATE>\n<EXISTING>\n" +
                       existing_json + "\n</EXISTING>"}};
}

Messages attribute_extraction(const std::string& name,
                              const std::string& current,
                              const std::string& recent) {
  return {{"system",
           "You profile one entity from conversational context. Write a "
           "one-sentence factual summary of the entity and a tag list of "
           "at most 5 descriptors, each at most 3 words. Reply with ONLY "
           "one JSON object: {\"summary\": \"...\", \"tag\": [\"...\"]}."},
          {"user", "<ENTITY>\n" + name + "\n</ENTITY>\n<RECENT>\n" + recent +
                       "\n</RECENT>\n<CURRENT>\n" + current + "\n</CURRENT>"}};
}

Messages edge_extraction(const std::string& current, const std::string& recent,
                         const std::string& entities_json) {
  return {{"system",
           "You extract factual relations between the listed entities from "
           "the CURRENT message. Each relation names two DIFFERENT entities "
           "from ENTITIES (by exact name) and states the fact as one "
           "sentence. Include \"valid_at\"/\"invalid_at\" RFC 3339 "
           "timestamps only when the text states them explicitly. Reply "
           "with ONLY a JSON array: [{\"source\": \"..\", \"target\": "
           "\"..\", \"fact\": \"..\"}]. Reply [] if there are none."},
          {"user", "<ENTITIES>\n" + entities_json + "\n</ENTITIES>\n<RECENT>\n" +
                       recent + "\n</RECENT>\n<CURRENT>\n" + current +
                       "\n</CURRENT>"}};
}

Messages edge_reflection(const std::string& current, const std::string& recent,
                         const std::string& entities_json,
                         const std::string& already_found_json) {
  return {{"system",
           "You double-check relation extraction. Given the CURRENT message, "
           "the entity list, and the relations already found, list any "
           "relations that were missed, in the same JSON array format. "
           "Reply [] if nothing was missed."},
          {"user", "<ENTITIES>\n" + entities_json + "\n</ENTITIES>\n<RECENT>\n" +
                       recent + "\n</RECENT>\n<CURRENT>\n" + current +
                       "\n</CURRENT>\n<ALREADY_FOUND>\n" + already_found_json +
                       "\n</ALREADY_FOUND>"}};
}

Messages edge_duplicate_resolution(const std::string& fact,
                                   const std::string& existing_json) {
  return {{"system",
           "You decide whether a candidate fact states the same relation as "
           "one already in memory. EXISTING lists JSON records with an "
           "\"id\" field. Reply with ONLY one JSON object: {\"verdict\": "
           "\"same_as\", \"id\": <existing id>} or {\"verdict\": \"new\"}."},
          {"user", "<CANDIDATE>\n" + fact + "\n</CANDIDATE>\n<EXISTING>\n" +
                       existing_json + "\n</EXISTING>"}};
}

Messages answer(const std::string& query, const std::string& context) {
  return {{"system",
           "You answer the user's question using ONLY the memory context "
           "below. Be concise and factual. If the context does not contain "
           "the answer, say so."},
          {"user", "<MEMORY>\n" + context + "\n</MEMORY>\n<QUESTION>\n" +
                       query + "\n</QUESTION>"}};
}

Messages judge(const std::string& question, const std::string& gold,
               const std::string& predicted) {
  return {{"system",
           "You grade an answer against a gold reference. Reply with ONLY "
           "one JSON object: {\"score\": 1} if the answer conveys the gold "
           "information, else {\"score\": 0}."},
          {"user", "<QUESTION>\n" + question + "\n</QUESTION>\n<GOLD>\n" +
                       gold + "\n</GOLD>\n<ANSWER>\n" + predicted +
                       "\n</ANSWER>"}};
}

}  // namespace hiermem::prompts
