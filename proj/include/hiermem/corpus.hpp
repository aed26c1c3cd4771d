#pragma once

#include <string>
#include <vector>

#include "hiermem/ingest.hpp"

namespace hiermem {

// Line-JSON corpus: one {"speaker","text","timestamp","session_id"} object
// per line. Blank lines are ignored; every error cites its 1-based line.
std::vector<Message> load_messages_jsonl(const std::string& path);

// Multi-session conversation document:
//   {"conversation": {"session_1": [{"speaker","text"}, ...],
//                     "session_1_date_time": "2023-05-08T13:56:00Z", ...}}
// Sessions are ordered by number; turn i of a session is stamped with the
// session timestamp advanced by i seconds so within-session order is
// preserved.
std::vector<Message> load_messages_conversation(const std::string& path);

// Format sniffing: a file that parses as one JSON document with a
// "conversation" object goes through the conversation adapter; anything
// else is treated as line-JSON.
std::vector<Message> load_messages(const std::string& path);

struct EvalCase {
  std::string question;
  std::string gold_answer;
  std::string category;       // e.g. single-hop, multi-hop, temporal
  std::string session_scope;  // optional provenance label
};

// Line-JSON: {"question","gold_answer","category"?,"session_scope"?}.
// Question and gold must be non-empty; a missing category becomes
// "uncategorized".
std::vector<EvalCase> load_eval_cases(const std::string& path);

}  // namespace hiermem
