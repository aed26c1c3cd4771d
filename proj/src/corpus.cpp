#include "hiermem/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hiermem {

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) {
    return std::isspace(c);
  });
}

[[noreturn]] void fail_line(const std::string& path, std::size_t line,
                            const std::string& reason) {
  throw Error(ErrorKind::data, "corpus " + path + " line " +
                                   std::to_string(line) + ": " + reason);
}

std::string required_string(const json& record, const char* field,
                            const std::string& path, std::size_t line) {
  if (!record.contains(field) || !record[field].is_string())
    fail_line(path, line, std::string("missing string field '") + field + "'");
  return record[field].get<std::string>();
}

// Per-line JSON records, invoking `consume(record, line_number)` per line.
template <typename Fn>
void for_each_record(const std::string& path, Fn&& consume) {
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (blank(line)) continue;
    json record = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (record.is_discarded()) fail_line(path, line_number, "malformed JSON");
    if (!record.is_object()) fail_line(path, line_number, "expected an object");
    consume(record, line_number);
  }
}

}  // namespace

std::vector<Message> load_messages_jsonl(const std::string& path) {
  std::vector<Message> out;
  for_each_record(path, [&](const json& record, std::size_t line) {
    Message m;
    m.speaker = required_string(record, "speaker", path, line);
    m.text = required_string(record, "text", path, line);
    m.session_id = required_string(record, "session_id", path, line);
    if (m.speaker.empty()) fail_line(path, line, "speaker is empty");
    if (m.text.empty()) fail_line(path, line, "text is empty");
    if (m.session_id.empty()) fail_line(path, line, "session_id is empty");
    try {
      m.timestamp =
          Timestamp::parse(required_string(record, "timestamp", path, line));
    } catch (const Error& e) {
      fail_line(path, line, e.what());
    }
    out.push_back(std::move(m));
  });
  return out;
}

std::vector<Message> load_messages_conversation(const std::string& path) {
  const std::string text = read_file(path);
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("conversation") ||
      !doc["conversation"].is_object())
    throw Error(ErrorKind::data,
                "corpus " + path + ": expected a {\"conversation\": {...}} "
                                   "document");
  const json& conversation = doc["conversation"];

  // Keys shaped "session_<number>" carry turn arrays; anything else
  // (speaker names, date-time keys) is consulted on demand.
  std::vector<std::pair<long long, std::string>> sessions;
  for (auto it = conversation.begin(); it != conversation.end(); ++it) {
    const std::string& key = it.key();
    const std::string prefix = "session_";
    if (key.rfind(prefix, 0) != 0) continue;
    const std::string suffix = key.substr(prefix.size());
    if (suffix.empty() || !std::all_of(suffix.begin(), suffix.end(), [](unsigned char c) {
          return std::isdigit(c);
        }))
      continue;
    sessions.emplace_back(std::stoll(suffix), key);
  }
  std::sort(sessions.begin(), sessions.end());

  std::vector<Message> out;
  for (const auto& [number, key] : sessions) {
    const std::string date_key = key + "_date_time";
    if (!conversation.contains(date_key) ||
        !conversation[date_key].is_string())
      throw Error(ErrorKind::data, "corpus " + path + ": session '" + key +
                                       "' lacks a " + date_key + " string");
    Timestamp base;
    try {
      base = Timestamp::parse(conversation[date_key].get<std::string>());
    } catch (const Error& e) {
      throw Error(ErrorKind::data,
                  "corpus " + path + ": " + date_key + ": " + e.what());
    }
    if (!conversation[key].is_array())
      throw Error(ErrorKind::data, "corpus " + path + ": session '" + key +
                                       "' must be an array of turns");
    std::int64_t offset = 0;
    for (const json& turn : conversation[key]) {
      if (!turn.is_object() || !turn.contains("speaker") ||
          !turn["speaker"].is_string() || !turn.contains("text") ||
          !turn["text"].is_string())
        throw Error(ErrorKind::data,
                    "corpus " + path + ": session '" + key +
                        "' turn " + std::to_string(offset + 1) +
                        " needs speaker and text strings");
      Message m;
      m.speaker = turn["speaker"].get<std::string>();
      m.text = turn["text"].get<std::string>();
      m.timestamp = Timestamp{base.seconds + offset};
      m.session_id = key;
      out.push_back(std::move(m));
      ++offset;
    }
  }
  return out;
}

std::vector<Message> load_messages(const std::string& path) {
  const std::string text = read_file(path);
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (!doc.is_discarded() && doc.is_object() && doc.contains("conversation"))
    return load_messages_conversation(path);
  return load_messages_jsonl(path);
}

std::vector<EvalCase> load_eval_cases(const std::string& path) {
  std::vector<EvalCase> out;
  for_each_record(path, [&](const json& record, std::size_t line) {
    EvalCase c;
    c.question = required_string(record, "question", path, line);
    c.gold_answer = required_string(record, "gold_answer", path, line);
    if (c.question.empty()) fail_line(path, line, "question is empty");
    if (c.gold_answer.empty()) fail_line(path, line, "gold_answer is empty");
    c.category = record.contains("category") && record["category"].is_string()
                     ? record["category"].get<std::string>()
                     : std::string("uncategorized");
    if (c.category.empty()) c.category = "uncategorized";
    c.session_scope =
        record.contains("session_scope") && record["session_scope"].is_string()
            ? record["session_scope"].get<std::string>()
            : std::string();
    out.push_back(std::move(c));
  });
  return out;
}

}  // namespace hiermem
