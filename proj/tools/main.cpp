#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hiermem/commands.hpp"

namespace {

// Config file first, explicit flags second.
hiermem::HarnessConfig assemble_config(const std::string& config_path) {
  return config_path.empty() ? hiermem::HarnessConfig{}
                             : hiermem::HarnessConfig::from_file(config_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hiermem: dual-route long-term conversational memory"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path,
                 "JSON config file (flags override its fields)");

  // ingest
  auto* ingest = app.add_subcommand(
      "ingest", "Run the extraction pipeline over a corpus into a snapshot");
  std::string ingest_corpus, ingest_store, ingest_fixture, ingest_chunking;
  int ingest_dim = 0;
  ingest->add_option("corpus", ingest_corpus,
                     "messages JSONL or conversation JSON")
      ->required();
  ingest->add_option("--store", ingest_store,
                     "snapshot path (created if absent, extended if present)")
      ->required();
  ingest->add_option("--fixture", ingest_fixture, "scripted-oracle fixture");
  ingest->add_option("--chunking", ingest_chunking, "episode granularity")
      ->check(CLI::IsMember({"per-turn", "per-exchange"}));
  ingest->add_option("--dim", ingest_dim, "embedding dimension for new stores");

  // build-hierarchy
  auto* build = app.add_subcommand(
      "build-hierarchy", "Construct the category hierarchy bottom-up");
  std::string build_store, build_fixture;
  int build_n = 0, build_max_layers = 0, build_batch = -1;
  build->add_option("--store", build_store, "snapshot path")->required();
  build->add_option("--fixture", build_fixture, "scripted-oracle fixture");
  build->add_option("--n", build_n, "compression ratio (min category size)");
  build->add_option("--max-layers", build_max_layers, "layer ceiling");
  build->add_option("--batch-size", build_batch, "categorization shard size");

  // ask
  auto* ask = app.add_subcommand(
      "ask", "Answer one question from the store, printing the evidence");
  std::string ask_store, ask_fixture, ask_question, ask_route = "both";
  int ask_k = 0;
  ask->add_option("question", ask_question, "the question")->required();
  ask->add_option("--store", ask_store, "snapshot path")->required();
  ask->add_option("--fixture", ask_fixture, "scripted-oracle fixture");
  ask->add_option("--route", ask_route, "retrieval route")
      ->check(CLI::IsMember({"s1", "s2", "both"}));
  ask->add_option("--k", ask_k, "episode budget (entities/edges get 2k)");

  // eval
  auto* eval = app.add_subcommand(
      "eval", "Score a question set with the 0/1 judge, per category");
  std::string eval_store, eval_fixture, eval_cases;
  int eval_parallelism = 0, eval_k = 0;
  bool eval_include_adversarial = false;
  eval->add_option("cases", eval_cases, "eval cases JSONL")->required();
  eval->add_option("--store", eval_store, "snapshot path")->required();
  eval->add_option("--fixture", eval_fixture, "scripted-oracle fixture");
  eval->add_option("--k", eval_k, "episode budget (entities/edges get 2k)");
  eval->add_option("--parallelism", eval_parallelism, "concurrent cases");
  eval->add_flag("--include-adversarial", eval_include_adversarial,
                 "score adversarial-category cases too");

  // inspect
  auto* inspect =
      app.add_subcommand("inspect", "Dump store statistics and adjacency");
  inspect->require_subcommand(1);
  inspect->fallthrough();  // allow --store after the nested subcommand
  std::string inspect_store;
  inspect->add_option("--store", inspect_store, "snapshot path")->required();
  auto* inspect_stats =
      inspect->add_subcommand("stats", "node and edge counts per kind/layer");
  auto* inspect_entity =
      inspect->add_subcommand("entity", "one entity with edges and episodes");
  std::string inspect_entity_name;
  inspect_entity->add_option("name", inspect_entity_name, "entity name")
      ->required();
  auto* inspect_path = inspect->add_subcommand(
      "path", "verify a top-down category chain exists");
  std::vector<std::string> inspect_path_names;
  inspect_path->add_option("names", inspect_path_names, "category chain")
      ->required()
      ->expected(-1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    hiermem::HarnessConfig config = assemble_config(config_path);

    if (ingest->parsed()) {
      if (!ingest_fixture.empty()) config.oracle_fixture = ingest_fixture;
      if (!ingest_chunking.empty()) config.chunking = ingest_chunking;
      if (ingest->count("--dim")) config.embedding_dim = ingest_dim;
      return hiermem::cmd_ingest(config, ingest_corpus, ingest_store,
                                 std::cout, std::cerr);
    }
    if (build->parsed()) {
      if (!build_fixture.empty()) config.oracle_fixture = build_fixture;
      if (build->count("--n")) config.compression_ratio = build_n;
      if (build->count("--max-layers")) config.max_layers = build_max_layers;
      if (build->count("--batch-size")) config.batch_size = build_batch;
      return hiermem::cmd_build_hierarchy(config, build_store, std::cout,
                                          std::cerr);
    }
    if (ask->parsed()) {
      if (!ask_fixture.empty()) config.oracle_fixture = ask_fixture;
      if (ask->count("--k")) config.top_k = ask_k;
      return hiermem::cmd_ask(config, ask_store, ask_question, ask_route,
                              std::cout, std::cerr);
    }
    if (eval->parsed()) {
      if (!eval_fixture.empty()) config.oracle_fixture = eval_fixture;
      if (eval->count("--k")) config.top_k = eval_k;
      if (eval->count("--parallelism")) config.parallelism = eval_parallelism;
      if (eval_include_adversarial) config.exclude_adversarial = false;
      return hiermem::cmd_eval(config, eval_store, eval_cases, std::cout,
                               std::cerr);
    }
    if (inspect->parsed()) {
      std::vector<std::string> args;
      if (inspect_stats->parsed()) {
        args = {"stats"};
      } else if (inspect_entity->parsed()) {
        args = {"entity", inspect_entity_name};
      } else if (inspect_path->parsed()) {
        args = {"path"};
        args.insert(args.end(), inspect_path_names.begin(),
                    inspect_path_names.end());
      }
      return hiermem::cmd_inspect(config, inspect_store, args, std::cout,
                                  std::cerr);
    }
  } catch (const hiermem::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return hiermem::exit_code_for(e.kind());
  }
  return 1;
}
