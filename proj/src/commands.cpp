#include "hiermem/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>
#include <thread>

#include "hiermem/hierarchy.hpp"
#include "hiermem/ingest.hpp"
#include "hiermem/remote_oracle.hpp"
#include "hiermem/scripted_oracle.hpp"

namespace hiermem {

namespace {

using nlohmann::json;

std::string fold(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

std::string env_or_empty(const char* name) {
  const char* value = std::getenv(name);
  return value ? value : "";
}

template <typename Fn>
int run_guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(ErrorKind::data);
  }
}

json store_stats(const MemoryStore& store) {
  auto gen = store.hierarchy();
  json layers = json::object();
  for (const auto& [id, cat] : gen->categories) {
    const std::string key = std::to_string(cat.layer);
    layers[key] = layers.value(key, std::size_t{0}) + 1;
  }
  return {{"episodes", store.episodes().size()},
          {"entities", store.entities().size()},
          {"relation_edges", store.relation_edges().size()},
          {"episodic_edges", store.episodic_edges().size()},
          {"categories", gen->categories.size()},
          {"category_edges", gen->edges.size()},
          {"max_layer", gen->max_layer},
          {"generation", gen->generation},
          {"layers", std::move(layers)}};
}

void emit(std::ostream& out, const json& doc) { out << doc.dump(2) << "\n"; }

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return 1;
    case ErrorKind::config: return 1;
    case ErrorKind::data: return 2;
    case ErrorKind::oracle_unavailable: return 3;
  }
  return 2;
}

Backends make_backends(const HarnessConfig& config) {
  Backends b;
  if (!config.oracle_fixture.empty()) {
    b.oracle = ScriptedOracle::from_file(config.oracle_fixture);
  } else if (!config.oracle_endpoint.empty()) {
    RemoteOracleConfig oc;
    oc.endpoint = config.oracle_endpoint;
    oc.model = config.oracle_model;
    oc.api_key = env_or_empty("HIERMEM_ORACLE_KEY");
    oc.parallelism = config.parallelism;
    b.oracle = std::make_unique<RemoteOracle>(std::move(oc));
  } else {
    throw Error(ErrorKind::config,
                "no oracle configured: set oracle_fixture or oracle_endpoint");
  }

  if (!config.embedder_endpoint.empty()) {
    RemoteEmbedderConfig ec;
    ec.endpoint = config.embedder_endpoint;
    ec.model = config.embedder_model;
    ec.api_key = env_or_empty("HIERMEM_EMBEDDER_KEY");
    ec.source_dim = static_cast<std::size_t>(config.embedder_source_dim);
    ec.target_dim = static_cast<std::size_t>(config.embedding_dim);
    b.embedder = std::make_unique<RemoteEmbedder>(std::move(ec));
  } else {
    b.embedder = make_hash_embedder(static_cast<std::size_t>(config.embedding_dim));
  }

  if (!config.reranker_endpoint.empty()) {
    RemoteRerankerConfig rc;
    rc.endpoint = config.reranker_endpoint;
    rc.model = config.reranker_model;
    rc.api_key = env_or_empty("HIERMEM_RERANKER_KEY");
    b.reranker = std::make_unique<RemoteReranker>(std::move(rc));
  } else {
    b.reranker = std::make_unique<LexicalReranker>();
  }
  return b;
}

int cmd_ingest(const HarnessConfig& config, const std::string& corpus_path,
               const std::string& store_path, std::ostream& out,
               std::ostream& err) {
  return run_guarded(err, [&]() -> int {
    config.validate();
    const std::vector<Message> messages = load_messages(corpus_path);
    std::unique_ptr<MemoryStore> store =
        std::filesystem::exists(store_path)
            ? MemoryStore::load_snapshot(store_path)
            : std::make_unique<MemoryStore>(config.store_config());
    Backends backends = make_backends(config);
    const IngestReport report = ingest(*store, *backends.oracle,
                                       *backends.embedder, messages,
                                       config.ingest_config());
    store->save_snapshot(store_path);

    emit(out, json{{"command", "ingest"},
                   {"corpus", corpus_path},
                   {"report", report.to_json()},
                   {"store", store_stats(*store)},
                   {"config", config.to_json()}});
    err << "ingested " << report.episodes_created << " episode(s): "
        << report.entities_created << " entities created, "
        << report.entities_merged << " merged; " << report.edges_created
        << " edges created, " << report.edges_merged << " merged ("
        << report.oracle_calls << " oracle calls)\n";
    return 0;
  });
}

int cmd_build_hierarchy(const HarnessConfig& config,
                        const std::string& store_path, std::ostream& out,
                        std::ostream& err) {
  return run_guarded(err, [&]() -> int {
    config.validate();
    std::unique_ptr<MemoryStore> store = MemoryStore::load_snapshot(store_path);
    Backends backends = make_backends(config);
    const HierarchyReport report = build_hierarchy(
        *store, *backends.oracle, *backends.embedder, config.build_config());
    store->save_snapshot(store_path);

    emit(out, json{{"command", "build-hierarchy"},
                   {"report", report.to_json()},
                   {"store", store_stats(*store)},
                   {"config", config.to_json()}});
    err << "built " << report.layers.size() << " layer(s), stopped because "
        << stop_reason_label(report.stopped_because) << "\n";
    return 0;
  });
}

int cmd_ask(const HarnessConfig& config, const std::string& store_path,
            const std::string& question, const std::string& route,
            std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&]() -> int {
    config.validate();
    if (route != "s1" && route != "s2" && route != "both")
      throw Error(ErrorKind::usage, "route must be s1, s2, or both");
    std::unique_ptr<MemoryStore> store = MemoryStore::load_snapshot(store_path);
    Backends backends = make_backends(config);

    RetrievalConfig rc = config.retrieval_config();
    rc.use_system1 = route != "s2";
    rc.use_system2 = route != "s1";
    if (route == "s2" && store->hierarchy()->empty())
      throw Error(ErrorKind::data,
                  "hierarchy absent: run build-hierarchy before asking with "
                  "--route s2");

    const std::uint64_t calls_before = backends.oracle->usage().calls;
    CombinedResult combined =
        combined_search(*store, *backends.oracle, *backends.embedder,
                        question, rc, *backends.reranker);
    const bool s2_silent =
        rc.use_system2 &&
        (combined.trace["system2"]["hierarchy_empty"].get<bool>() ||
         combined.trace["system2"]["empty_selection"].get<bool>());
    if (route == "s2" && s2_silent)
      throw Error(ErrorKind::data,
                  "global selection found nothing for this question and "
                  "System-1 is disabled");
    if (route == "both" && s2_silent)
      err << "note: global selection contributed nothing; evidence is "
             "System-1 only\n";

    const std::string context = assemble_context(*store, combined.final_lists);
    const std::string answer = backends.oracle->answer(question, context);
    json trace = std::move(combined.trace);
    trace["context_bytes"] = context.size();
    trace["oracle_calls"] = backends.oracle->usage().calls - calls_before;

    emit(out, json{{"command", "ask"},
                   {"question", question},
                   {"route", route},
                   {"answer", answer},
                   {"evidence", to_json(combined.final_lists)},
                   {"trace", std::move(trace)},
                   {"config", config.to_json()}});
    err << "answer: " << answer << "\n";
    return 0;
  });
}

int cmd_eval(const HarnessConfig& config, const std::string& store_path,
             const std::string& cases_path, std::ostream& out,
             std::ostream& err) {
  return run_guarded(err, [&]() -> int {
    config.validate();
    std::unique_ptr<MemoryStore> store = MemoryStore::load_snapshot(store_path);
    Backends backends = make_backends(config);
    const std::vector<EvalCase> all_cases = load_eval_cases(cases_path);

    std::vector<EvalCase> cases;
    std::size_t excluded = 0;
    for (const EvalCase& c : all_cases) {
      if (config.exclude_adversarial && fold(c.category) == "adversarial")
        ++excluded;
      else
        cases.push_back(c);
    }

    struct Row {
      std::string prediction;
      int score = 0;
      std::string note;
      std::size_t episodes = 0, entities = 0, edges = 0;
    };
    std::vector<Row> rows(cases.size());
    const RetrievalConfig rc = config.retrieval_config();

    auto run_case = [&](std::size_t i) {
      try {
        const AnswerResult res =
            answer_query(*store, *backends.oracle, *backends.embedder,
                         cases[i].question, rc, *backends.reranker);
        rows[i].prediction = res.answer;
        rows[i].episodes = res.evidence.episodes.size();
        rows[i].entities = res.evidence.entities.size();
        rows[i].edges = res.evidence.edges.size();
        rows[i].score = backends.oracle->judge(cases[i].question,
                                               cases[i].gold_answer,
                                               res.answer);
      } catch (const std::exception& e) {
        rows[i].score = 0;
        rows[i].note = e.what();
      }
    };

    const std::size_t workers = std::min<std::size_t>(
        static_cast<std::size_t>(config.parallelism),
        std::max<std::size_t>(cases.size(), 1));
    if (workers <= 1) {
      for (std::size_t i = 0; i < cases.size(); ++i) run_case(i);
    } else {
      std::atomic<std::size_t> cursor{0};
      std::vector<std::thread> pool;
      pool.reserve(workers);
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (std::size_t i = cursor.fetch_add(1); i < cases.size();
               i = cursor.fetch_add(1))
            run_case(i);
        });
      for (std::thread& t : pool) t.join();
    }

    struct Bucket {
      std::size_t count = 0;
      std::size_t correct = 0;
    };
    std::map<std::string, Bucket> buckets;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      Bucket& bucket = buckets[cases[i].category];
      bucket.count += 1;
      bucket.correct += static_cast<std::size_t>(rows[i].score);
    }
    std::size_t total = 0, correct = 0;
    json categories = json::object();
    for (const auto& [category, bucket] : buckets) {
      total += bucket.count;
      correct += bucket.correct;
      categories[category] = {
          {"count", bucket.count},
          {"correct", bucket.correct},
          {"score", bucket.count ? 100.0 * static_cast<double>(bucket.correct) /
                                       static_cast<double>(bucket.count)
                                 : 0.0}};
    }
    const double overall =
        total ? 100.0 * static_cast<double>(correct) /
                    static_cast<double>(total)
              : 0.0;

    json case_rows = json::array();
    for (std::size_t i = 0; i < cases.size(); ++i) {
      json row{{"question", cases[i].question},
               {"category", cases[i].category},
               {"gold_answer", cases[i].gold_answer},
               {"prediction", rows[i].prediction},
               {"score", rows[i].score},
               {"evidence",
                {{"episodes", rows[i].episodes},
                 {"entities", rows[i].entities},
                 {"edges", rows[i].edges}}}};
      if (!rows[i].note.empty()) row["note"] = rows[i].note;
      case_rows.push_back(std::move(row));
    }

    emit(out, json{{"command", "eval"},
                   {"overall", overall},
                   {"categories", categories},
                   {"excluded_adversarial", excluded},
                   {"cases", std::move(case_rows)},
                   {"config", config.to_json()}});

    err << std::left << std::setw(18) << "category" << std::right
        << std::setw(7) << "count" << std::setw(9) << "score" << "\n";
    for (const auto& [category, bucket] : buckets) {
      err << std::left << std::setw(18) << category << std::right
          << std::setw(7) << bucket.count << std::setw(8) << std::fixed
          << std::setprecision(1)
          << (bucket.count ? 100.0 * static_cast<double>(bucket.correct) /
                                 static_cast<double>(bucket.count)
                           : 0.0)
          << "%\n";
    }
    err << std::left << std::setw(18) << "overall" << std::right
        << std::setw(7) << total << std::setw(8) << std::fixed
        << std::setprecision(1) << overall << "%\n";
    if (excluded)
      err << "(" << excluded << " adversarial case(s) excluded)\n";
    return 0;
  });
}

int cmd_inspect(const HarnessConfig& config, const std::string& store_path,
                const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err) {
  return run_guarded(err, [&]() -> int {
    config.validate();
    if (args.empty())
      throw Error(ErrorKind::usage,
                  "inspect needs a subcommand: stats | entity <name> | "
                  "path <name>...");
    std::unique_ptr<MemoryStore> store = MemoryStore::load_snapshot(store_path);
    auto gen = store->hierarchy();

    if (args[0] == "stats") {
      if (args.size() != 1)
        throw Error(ErrorKind::usage, "inspect stats takes no arguments");
      emit(out, json{{"command", "inspect"},
                     {"subcommand", "stats"},
                     {"stats", store_stats(*store)}});
      err << store->episodes().size() << " episodes, "
          << store->entities().size() << " entities, "
          << store->relation_edges().size() << " relation edges, "
          << gen->categories.size() << " categories over " << gen->max_layer
          << " layer(s)\n";
      return 0;
    }

    if (args[0] == "entity") {
      if (args.size() != 2)
        throw Error(ErrorKind::usage, "usage: inspect entity <name>");
      const std::string wanted = fold(args[1]);
      json matches = json::array();
      for (const auto& [id, entity] : store->entities()) {
        if (fold(entity.name) != wanted) continue;
        json episodes = json::array();
        for (const EpisodeRecord& ep : store->episodes_of(id))
          episodes.push_back({{"id", ep.id.value},
                              {"valid_at", ep.valid_at.to_rfc3339()},
                              {"content", ep.content}});
        json edges = json::array();
        for (const auto& [edge, other] : store->edges_of(id)) {
          json row{{"id", edge.id.value},
                   {"fact", edge.fact},
                   {"valid_at", edge.valid_at.to_rfc3339()},
                   {"other", {{"id", other.id.value}, {"name", other.name}}}};
          if (edge.invalid_at) row["invalid_at"] = edge.invalid_at->to_rfc3339();
          edges.push_back(std::move(row));
        }
        matches.push_back({{"id", id.value},
                           {"name", entity.name},
                           {"summary", entity.summary},
                           {"tag", entity.tag},
                           {"episodes", std::move(episodes)},
                           {"edges", std::move(edges)}});
      }
      if (matches.empty())
        throw Error(ErrorKind::data, "unknown entity '" + args[1] + "'");
      emit(out, json{{"command", "inspect"},
                     {"subcommand", "entity"},
                     {"name", args[1]},
                     {"matches", std::move(matches)}});
      err << matches.size() << " match(es) for '" << args[1] << "'\n";
      return 0;
    }

    if (args[0] == "path") {
      if (args.size() < 2)
        throw Error(ErrorKind::usage, "usage: inspect path <name> [<name>...]");
      const std::vector<std::string> names(args.begin() + 1, args.end());

      // Witness chains: categories and entities both match by folded name;
      // each following name must label a child of the previous node.
      struct Link {
        NodeId id;
        int parent = -1;  // index into the previous frontier
      };
      auto name_of = [&](NodeId id) -> std::string {
        if (auto it = gen->categories.find(id); it != gen->categories.end())
          return it->second.name;
        return store->entity(id).name;
      };
      std::vector<Link> frontier;
      for (const auto& [id, cat] : gen->categories)
        if (fold(cat.name) == fold(names[0])) frontier.push_back(Link{id, -1});
      for (const auto& [id, entity] : store->entities())
        if (fold(entity.name) == fold(names[0]))
          frontier.push_back(Link{id, -1});

      std::vector<std::vector<Link>> levels{frontier};
      for (std::size_t step = 1; step < names.size() && !levels.back().empty();
           ++step) {
        std::vector<Link> next;
        const std::vector<Link>& previous = levels.back();
        for (std::size_t p = 0; p < previous.size(); ++p) {
          auto it = gen->children.find(previous[p].id);
          if (it == gen->children.end()) continue;
          for (NodeId child : it->second)
            if (fold(name_of(child)) == fold(names[step]))
              next.push_back(Link{child, static_cast<int>(p)});
        }
        levels.push_back(std::move(next));
      }

      const bool exists =
          levels.size() == names.size() && !levels.back().empty();
      json ids = json::array();
      if (exists) {
        std::vector<std::uint64_t> witness;
        int index = 0;
        for (std::size_t level = levels.size(); level-- > 0;) {
          witness.push_back(levels[level][static_cast<std::size_t>(index)].id.value);
          index = levels[level][static_cast<std::size_t>(index)].parent;
          if (level == 0) break;
        }
        std::reverse(witness.begin(), witness.end());
        for (std::uint64_t id : witness) ids.push_back(id);
      }
      emit(out, json{{"command", "inspect"},
                     {"subcommand", "path"},
                     {"names", names},
                     {"exists", exists},
                     {"ids", std::move(ids)}});
      err << "path " << (exists ? "exists" : "not found") << "\n";
      return 0;
    }

    throw Error(ErrorKind::usage,
                "unknown inspect subcommand '" + args[0] + "'");
  });
}

}  // namespace hiermem
