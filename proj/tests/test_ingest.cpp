// Ingestion tests: chunking policies, the staged per-episode pipeline with
// hand-walked expected graphs, duplicate resolution through the fused
// candidate lookup (committed and staged), edge dedup gating, the
// clean-boundary abort guarantee, and the corpus loaders.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <hiermem/corpus.hpp>
#include <hiermem/embedder.hpp>
#include <hiermem/ingest.hpp>
#include <hiermem/scripted_oracle.hpp>
#include <hiermem/store.hpp>

using namespace hiermem;
using nlohmann::json;

namespace {

constexpr std::size_t kDim = 8;

StoreConfig small_config() {
  StoreConfig c;
  c.embedding_dim = kDim;
  return c;
}

const HashEmbedder& embedder() {
  static HashEmbedder e(kDim);
  return e;
}

Message msg(const std::string& speaker, const std::string& text,
            const std::string& at, const std::string& session = "s1") {
  return Message{speaker, text, Timestamp::parse(at), session};
}

// Lexicon fixture for the three-turn move-to-Detroit conversation.
json move_fixture() {
  return json{
      {"lexicon", {"Dave", "Detroit", "Sarah"}},
      {"summaries", {{"Dave", "a software engineer"}}},
      {"edges",
       json::array({{{"source", "Dave"},
                     {"target", "Detroit"},
                     {"fact", "Dave moved to Detroit"},
                     {"trigger", "moved to Detroit"}}})},
  };
}

std::vector<Message> move_messages() {
  return {
      msg("Dave", "I moved to Detroit last month.", "2023-06-17T09:00:00Z"),
      msg("Sarah", "Nice! How is Detroit?", "2023-06-17T09:01:00Z"),
      msg("Dave", "I love Detroit.", "2023-06-17T09:02:00Z"),
  };
}

const EntityRecord* find_entity(const MemoryStore& store,
                                const std::string& name) {
  for (const auto& [id, e] : store.entities())
    if (e.name == name) return &e;
  return nullptr;
}

// Delegating oracle that simulates an outage on the nth extraction call.
class OutageOracle final : public ConceptOracle {
 public:
  OutageOracle(ConceptOracle& inner, int fail_on_extraction)
      : inner_(inner), fail_on_(fail_on_extraction) {}

  std::vector<std::string> extract_entity_names(
      const EpisodeRecord& current,
      const std::vector<EpisodeRecord>& recent) override {
    if (++extraction_calls_ == fail_on_)
      throw Error(ErrorKind::oracle_unavailable, "simulated outage");
    return inner_.extract_entity_names(current, recent);
  }
  std::vector<std::string> reflect_missing_names(
      const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
      const std::vector<std::string>& already_found) override {
    return inner_.reflect_missing_names(current, recent, already_found);
  }
  DuplicateVerdict resolve_duplicates(
      const std::string& candidate_name,
      const std::vector<EntityRecord>& matched_existing) override {
    return inner_.resolve_duplicates(candidate_name, matched_existing);
  }
  EntityAttributes extract_entity_attributes(
      const std::string& name, const EpisodeRecord& current,
      const std::vector<EpisodeRecord>& recent) override {
    return inner_.extract_entity_attributes(name, current, recent);
  }
  std::vector<EdgeDraft> extract_edges(
      const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
      const std::vector<EntityRecord>& entities) override {
    return inner_.extract_edges(current, recent, entities);
  }
  std::vector<EdgeDraft> reflect_missing_edges(
      const EpisodeRecord& current, const std::vector<EpisodeRecord>& recent,
      const std::vector<EntityRecord>& entities,
      const std::vector<EdgeDraft>& already_found) override {
    return inner_.reflect_missing_edges(current, recent, entities,
                                        already_found);
  }
  DuplicateVerdict resolve_edge_duplicates(
      const std::string& candidate_fact,
      const std::vector<RelationEdge>& matched_existing) override {
    return inner_.resolve_edge_duplicates(candidate_fact, matched_existing);
  }
  CategorizationResult categorize_nodes(
      int layer, const std::vector<CategorizationNode>& nodes,
      const std::vector<ExistingCategory>& existing, int n,
      int attempt) override {
    return inner_.categorize_nodes(layer, nodes, existing, n, attempt);
  }
  NodeSelection select_nodes(const std::string& query,
                             const std::vector<OfferedNode>& offered) override {
    return inner_.select_nodes(query, offered);
  }
  std::string answer(const std::string& query,
                     const std::string& context) override {
    return inner_.answer(query, context);
  }
  int judge(const std::string& question, const std::string& gold,
            const std::string& predicted) override {
    return inner_.judge(question, gold, predicted);
  }

 private:
  ConceptOracle& inner_;
  int fail_on_;
  int extraction_calls_ = 0;
};

}  // namespace

TEST_CASE("per-turn chunking yields one prefixed episode per message") {
  const auto drafts =
      episode_chunking(move_messages(), ChunkPolicy::per_turn);
  REQUIRE(drafts.size() == 3);
  CHECK(drafts[0].content == "Dave: I moved to Detroit last month.");
  CHECK(drafts[1].content == "Sarah: Nice! How is Detroit?");
  CHECK(drafts[0].valid_at == Timestamp::parse("2023-06-17T09:00:00Z"));
  CHECK(drafts[0].session_id == "s1");

  CHECK(episode_chunking({}, ChunkPolicy::per_turn).empty());
  CHECK(episode_chunking({}, ChunkPolicy::per_exchange).empty());
}

TEST_CASE("per-exchange chunking pairs turns within a session") {
  SUBCASE("even count pairs cleanly") {
    const auto drafts =
        episode_chunking(move_messages(), ChunkPolicy::per_exchange);
    REQUIRE(drafts.size() == 2);
    CHECK(drafts[0].content ==
          "Dave: I moved to Detroit last month.\nSarah: Nice! How is "
          "Detroit?");
    // The pair is stamped with the first turn's timestamp.
    CHECK(drafts[0].valid_at == Timestamp::parse("2023-06-17T09:00:00Z"));
    CHECK(drafts[1].content == "Dave: I love Detroit.");
  }
  SUBCASE("session boundaries never pair across") {
    const std::vector<Message> cross = {
        msg("A", "one", "2023-06-01T00:00:00Z", "s1"),
        msg("B", "two", "2023-06-01T00:01:00Z", "s2"),
        msg("C", "three", "2023-06-01T00:02:00Z", "s2"),
    };
    const auto drafts = episode_chunking(cross, ChunkPolicy::per_exchange);
    REQUIRE(drafts.size() == 2);
    CHECK(drafts[0].content == "A: one");
    CHECK(drafts[0].session_id == "s1");
    CHECK(drafts[1].content == "B: two\nC: three");
    CHECK(drafts[1].session_id == "s2");
  }
  SUBCASE("alternating sessions degrade to singles") {
    const std::vector<Message> alternating = {
        msg("A", "one", "2023-06-01T00:00:00Z", "s1"),
        msg("B", "two", "2023-06-01T00:00:00Z", "s2"),
        msg("A", "three", "2023-06-01T00:01:00Z", "s1"),
    };
    CHECK(episode_chunking(alternating, ChunkPolicy::per_exchange).size() ==
          3);
  }
}

TEST_CASE("the three-turn conversation builds the hand-computed graph") {
  MemoryStore store(small_config());
  ScriptedOracle oracle(move_fixture());
  const auto report = ingest(store, oracle, embedder(), move_messages());

  CHECK(report.episodes_created == 3);
  CHECK(report.entities_created == 3);  // Dave, Detroit, Sarah
  CHECK(report.entities_merged == 3);   // Detroit (ep2), Dave+Detroit (ep3)
  CHECK(report.edges_created == 1);     // Dave moved to Detroit (ep1)
  CHECK(report.edges_merged == 0);
  CHECK(report.warnings.empty());
  CHECK(report.oracle_calls == oracle.usage().calls);
  CHECK(report.oracle_calls > 0);

  REQUIRE(store.episodes().size() == 3);
  REQUIRE(store.entities().size() == 3);
  REQUIRE(store.relation_edges().size() == 1);

  const EntityRecord* dave = find_entity(store, "Dave");
  const EntityRecord* detroit = find_entity(store, "Detroit");
  const EntityRecord* sarah = find_entity(store, "Sarah");
  REQUIRE(dave);
  REQUIRE(detroit);
  REQUIRE(sarah);

  CHECK(dave->summary == "a software engineer");
  // Episode membership follows the mentions: Dave in 1 and 3, Detroit in
  // all three, Sarah in 2 only.
  CHECK(dave->episode_idx.size() == 2);
  CHECK(detroit->episode_idx.size() == 3);
  CHECK(sarah->episode_idx.size() == 1);

  // Every episode_idx entry points at a committed episode whose text
  // actually mentions the entity.
  for (const auto& [id, e] : store.entities())
    for (const NodeId ep : e.episode_idx) {
      REQUIRE(store.has_episode(ep));
      const auto tokens = tokenize(store.episode(ep).content);
      const auto name_tokens = tokenize(e.name);
      CHECK(std::search(tokens.begin(), tokens.end(), name_tokens.begin(),
                        name_tokens.end()) != tokens.end());
    }

  // The edge defaulted its validity to the first episode's timestamp.
  const RelationEdge& edge = store.relation_edges().begin()->second;
  CHECK(edge.source == dave->id);
  CHECK(edge.target == detroit->id);
  CHECK(edge.fact == "Dave moved to Detroit");
  CHECK(edge.valid_at == Timestamp::parse("2023-06-17T09:00:00Z"));
  CHECK_FALSE(edge.invalid_at.has_value());
  CHECK(store.audit().empty());
}

TEST_CASE("re-ingesting the same conversation creates no new graph nodes") {
  MemoryStore store(small_config());
  ScriptedOracle oracle(move_fixture());
  ingest(store, oracle, embedder(), move_messages());

  const auto again = ingest(store, oracle, embedder(), move_messages());
  CHECK(again.episodes_created == 3);  // episodes are raw history, always kept
  CHECK(again.entities_created == 0);
  CHECK(again.entities_merged == 6);  // every mention resolves to a merge
  CHECK(again.edges_created == 0);
  CHECK(again.edges_merged == 1);

  CHECK(store.episodes().size() == 6);
  CHECK(store.entities().size() == 3);
  CHECK(store.relation_edges().size() == 1);
  CHECK(store.audit().empty());
}

TEST_CASE("aliases staged in the same episode merge instead of duplicating") {
  MemoryStore store(small_config());
  ScriptedOracle oracle(json{
      {"lexicon", {"Detroit", "Motor City"}},
      {"aliases", {{"motor city", "Detroit"}}},
  });
  const auto report = ingest(
      store, oracle, embedder(),
      {msg("Dave", "Detroit is called the Motor City.",
           "2023-06-17T09:00:00Z")});

  CHECK(report.entities_created == 1);
  CHECK(report.entities_merged == 1);
  REQUIRE(store.entities().size() == 1);
  // The first-seen surface form is the canonical name.
  CHECK(store.entities().begin()->second.name == "Detroit");
  CHECK(store.audit().empty());
}

TEST_CASE("edge drafts naming entities outside the episode are dropped") {
  MemoryStore store(small_config());
  // The oracle is allowed to draft "Motor City" (it canonicalizes to an
  // offered entity), but the stage only knows the extracted surface forms,
  // so ingestion warns and drops the draft.
  ScriptedOracle oracle(json{
      {"lexicon", {"Dave", "Detroit"}},
      {"aliases", {{"motor city", "Detroit"}}},
      {"edges",
       json::array({{{"source", "Dave"},
                     {"target", "Motor City"},
                     {"fact", "Dave moved to the Motor City"},
                     {"trigger", "moved"}}})},
  });
  const auto report =
      ingest(store, oracle, embedder(),
             {msg("Dave", "Dave moved to Detroit.", "2023-06-17T09:00:00Z")});

  CHECK(report.edges_created == 0);
  CHECK(store.relation_edges().empty());
  REQUIRE(report.warnings.size() == 1);
  CHECK(report.warnings[0].find("outside this episode") != std::string::npos);
  CHECK(report.warnings[0].find("dropped") != std::string::npos);
}

TEST_CASE("invalid edge drafts are rejected with a warning, not an abort") {
  MemoryStore store(small_config());
  // invalid_at earlier than valid_at fails record validation.
  ScriptedOracle oracle(json{
      {"lexicon", {"Dave", "Detroit"}},
      {"edges",
       json::array({{{"source", "Dave"},
                     {"target", "Detroit"},
                     {"fact", "Dave briefly visited Detroit"},
                     {"trigger", "visited"},
                     {"valid_at", "2023-07-01T00:00:00Z"},
                     {"invalid_at", "2023-06-01T00:00:00Z"}}})},
  });
  const auto report =
      ingest(store, oracle, embedder(),
             {msg("Dave", "Dave visited Detroit.", "2023-06-17T09:00:00Z")});

  CHECK(report.episodes_created == 1);
  CHECK(report.entities_created == 2);
  CHECK(report.edges_created == 0);
  CHECK(store.relation_edges().empty());
  REQUIRE(report.warnings.size() == 1);
  CHECK(report.warnings[0].find("rejected") != std::string::npos);
  CHECK(store.audit().empty());
}

TEST_CASE("same-pair facts above the similarity gate merge; others coexist") {
  SUBCASE("identical facts drafted twice merge") {
    MemoryStore store(small_config());
    ScriptedOracle oracle(json{
        {"lexicon", {"Dave", "Detroit"}},
        {"edges",
         json::array({{{"source", "Dave"},
                       {"target", "Detroit"},
                       {"fact", "Dave lives in Detroit"},
                       {"trigger", "lives in"}},
                      {{"source", "Dave"},
                       {"target", "Detroit"},
                       {"fact", "Dave lives in Detroit"},
                       {"trigger", "Detroit now"}}})},
    });
    const auto report = ingest(
        store, oracle, embedder(),
        {msg("Dave", "Dave lives in Detroit now.", "2023-06-17T09:00:00Z")});
    CHECK(report.edges_created == 1);
    CHECK(report.edges_merged == 1);
    CHECK(store.relation_edges().size() == 1);
  }
  SUBCASE("dissimilar facts on the same pair both survive") {
    MemoryStore store(small_config());
    ScriptedOracle oracle(json{
        {"lexicon", {"Dave", "Detroit"}},
        {"edges",
         json::array({{{"source", "Dave"},
                       {"target", "Detroit"},
                       {"fact", "Dave lives in Detroit"},
                       {"trigger", "lives in"}},
                      {{"source", "Dave"},
                       {"target", "Detroit"},
                       {"fact", "favorite pizza downtown"},
                       {"trigger", "pizza"}}})},
    });
    const auto report = ingest(store, oracle, embedder(),
                               {msg("Dave", "Dave lives in Detroit and loves "
                                            "the pizza there.",
                                    "2023-06-17T09:00:00Z")});
    CHECK(report.edges_created == 2);
    CHECK(report.edges_merged == 0);
    CHECK(store.relation_edges().size() == 2);
  }
}

TEST_CASE("an oracle outage aborts at the episode boundary") {
  MemoryStore store(small_config());
  ScriptedOracle inner(move_fixture());
  OutageOracle oracle(inner, /*fail_on_extraction=*/3);

  CHECK_THROWS_AS(ingest(store, oracle, embedder(), move_messages()), Error);

  // Episodes one and two are committed in full; episode three never
  // becomes visible in any table or index.
  CHECK(store.episodes().size() == 2);
  CHECK(store.entities().size() == 3);       // Dave, Detroit, Sarah
  CHECK(store.relation_edges().size() == 1);
  for (const auto& [id, ep] : store.episodes())
    CHECK(ep.content.find("I love Detroit") == std::string::npos);
  CHECK(store.bm25_search(IndexKind::episode_content, "love", 5).empty());
  CHECK(store.audit().empty());

  // A later healthy run picks up from the committed state.
  ScriptedOracle healthy(move_fixture());
  const auto report = ingest(store, healthy, embedder(),
                             {move_messages()[2]});
  CHECK(report.episodes_created == 1);
  CHECK(report.entities_created == 0);
  CHECK(store.episodes().size() == 3);
}

TEST_CASE("within-session timestamp regressions abort before any mutation") {
  MemoryStore store(small_config());
  ScriptedOracle oracle(move_fixture());
  const std::vector<Message> regressing = {
      msg("Dave", "later message", "2023-06-17T09:05:00Z"),
      msg("Dave", "earlier message", "2023-06-17T09:00:00Z"),
  };
  try {
    ingest(store, oracle, embedder(), regressing);
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
    CHECK(std::string(e.what()).find("regress") != std::string::npos);
    CHECK(std::string(e.what()).find("message 2") != std::string::npos);
  }
  CHECK(store.episodes().empty());
  CHECK(oracle.usage().calls == 0);

  // Interleaved sessions may be non-monotone overall, as long as each
  // session's own clock never runs backwards.
  const std::vector<Message> interleaved = {
      msg("Dave", "session two starts late", "2023-06-18T09:00:00Z", "s2"),
      msg("Dave", "session one catches up", "2023-06-17T09:00:00Z", "s1"),
  };
  CHECK(ingest(store, oracle, embedder(), interleaved).episodes_created == 2);
}

TEST_CASE("embedder and store dimensions must agree") {
  MemoryStore store(small_config());
  ScriptedOracle oracle(move_fixture());
  HashEmbedder wrong(kDim + 1);
  try {
    ingest(store, oracle, wrong, move_messages());
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
  CHECK(store.episodes().empty());
}

TEST_CASE("ingest config bounds are enforced") {
  IngestConfig config;
  config.dedup_candidates = 0;
  CHECK_THROWS_AS(config.validate(), Error);
  config = {};
  config.edge_dedup_threshold = 1.5;
  CHECK_THROWS_AS(config.validate(), Error);
  config = {};
  config.rrf_c = -1.0;
  CHECK_THROWS_AS(config.validate(), Error);
  config = {};
  CHECK_NOTHROW(config.validate());
}

TEST_CASE("ingest report serializes every counter") {
  IngestReport report;
  report.episodes_created = 3;
  report.warnings = {"w1"};
  const json j = report.to_json();
  for (const char* key :
       {"episodes_created", "entities_created", "entities_merged",
        "edges_created", "edges_merged", "oracle_calls", "warnings"})
    CHECK(j.contains(key));
  CHECK(j["episodes_created"] == 3);
  CHECK(j["warnings"][0] == "w1");
}

// ---------------------------------------------------------------------------
// Corpus loaders

namespace {
std::string write_temp(const std::string& stem, const std::string& body) {
  const auto path =
      (std::filesystem::temp_directory_path() / (stem + ".json")).string();
  std::ofstream(path) << body;
  return path;
}
}  // namespace

TEST_CASE("line-JSON corpora load with blank lines skipped") {
  const std::string path = write_temp(
      "corpus_ok",
      R"({"speaker": "Dave", "text": "hello", "timestamp": "2023-06-17T09:00:00Z", "session_id": "s1"})"
      "\n\n"
      R"({"speaker": "Sarah", "text": "hi", "timestamp": "2023-06-17T09:01:00Z", "session_id": "s1"})"
      "\n");
  const auto messages = load_messages_jsonl(path);
  REQUIRE(messages.size() == 2);
  CHECK(messages[0].speaker == "Dave");
  CHECK(messages[1].text == "hi");
  CHECK(messages[1].timestamp == Timestamp::parse("2023-06-17T09:01:00Z"));

  // Format sniffing sends line-JSON through the same loader.
  CHECK(load_messages(path).size() == 2);
  std::filesystem::remove(path);
}

TEST_CASE("corpus errors cite the offending line") {
  struct Case {
    const char* body;
    const char* needle;
  };
  const Case table[] = {
      {"{\"speaker\": \"Dave\"}\n", "line 1"},
      {"{\"speaker\": \"Dave\", \"text\": \"hi\", \"timestamp\": "
       "\"2023-06-17T09:00:00Z\", \"session_id\": \"s1\"}\nnot json\n",
       "line 2"},
      {"{\"speaker\": \"\", \"text\": \"hi\", \"timestamp\": "
       "\"2023-06-17T09:00:00Z\", \"session_id\": \"s1\"}\n",
       "speaker is empty"},
      {"{\"speaker\": \"Dave\", \"text\": \"hi\", \"timestamp\": \"17 June\", "
       "\"session_id\": \"s1\"}\n",
       "line 1"},
  };
  for (const auto& c : table) {
    CAPTURE(c.body);
    const std::string path = write_temp("corpus_bad", c.body);
    try {
      load_messages_jsonl(path);
      FAIL("expected Error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::data);
      CHECK(std::string(e.what()).find(c.needle) != std::string::npos);
    }
    std::filesystem::remove(path);
  }
  CHECK_THROWS_AS(load_messages_jsonl("/no/such/file.jsonl"), Error);
}

TEST_CASE("conversation documents order sessions and offset turns") {
  const std::string path = write_temp("corpus_conv", R"({
    "conversation": {
      "session_2": [{"speaker": "A", "text": "third"},
                    {"speaker": "B", "text": "fourth"}],
      "session_2_date_time": "2023-06-18T12:00:00Z",
      "session_1": [{"speaker": "A", "text": "first"},
                    {"speaker": "B", "text": "second"}],
      "session_1_date_time": "2023-06-17T09:00:00Z",
      "speaker_a": "A"
    }
  })");
  const auto messages = load_messages_conversation(path);
  REQUIRE(messages.size() == 4);
  CHECK(messages[0].text == "first");
  CHECK(messages[1].text == "second");
  CHECK(messages[2].text == "third");
  CHECK(messages[3].text == "fourth");
  CHECK(messages[0].session_id == "session_1");
  CHECK(messages[2].session_id == "session_2");
  // Turn i is the session timestamp advanced by i seconds.
  CHECK(messages[0].timestamp == Timestamp::parse("2023-06-17T09:00:00Z"));
  CHECK(messages[1].timestamp.seconds == messages[0].timestamp.seconds + 1);

  // Sniffing routes the document form automatically, and the loaded
  // messages ingest cleanly (session clocks are monotone by construction).
  CHECK(load_messages(path).size() == 4);
  std::filesystem::remove(path);

  const std::string missing_date = write_temp("corpus_conv_bad", R"({
    "conversation": {"session_1": [{"speaker": "A", "text": "x"}]}
  })");
  CHECK_THROWS_AS(load_messages_conversation(missing_date), Error);
  std::filesystem::remove(missing_date);
}

TEST_CASE("eval cases load with category defaulting") {
  const std::string path = write_temp(
      "eval_cases",
      R"({"question": "Where does Dave live?", "gold_answer": "Detroit", "category": "single-hop"})"
      "\n"
      R"({"question": "What breed?", "gold_answer": "Poodle"})"
      "\n");
  const auto cases = load_eval_cases(path);
  REQUIRE(cases.size() == 2);
  CHECK(cases[0].category == "single-hop");
  CHECK(cases[1].category == "uncategorized");
  std::filesystem::remove(path);

  const std::string bad =
      write_temp("eval_bad", R"({"question": "", "gold_answer": "x"})");
  CHECK_THROWS_AS(load_eval_cases(bad), Error);
  std::filesystem::remove(bad);
}
