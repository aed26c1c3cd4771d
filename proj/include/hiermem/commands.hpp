#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "hiermem/config.hpp"
#include "hiermem/corpus.hpp"
#include "hiermem/oracle.hpp"
#include "hiermem/retrieval.hpp"

namespace hiermem {

// Stable scripting contract (also the process exit codes).
int exit_code_for(ErrorKind kind);  // usage/config 1, data 2, oracle 3

// The pluggable backends a command runs against, resolved from config:
// scripted fixture vs. remote oracle, hash vs. remote embedder, lexical
// vs. remote re-ranker. API keys come from HIERMEM_*_KEY env vars only.
struct Backends {
  std::unique_ptr<ConceptOracle> oracle;
  std::unique_ptr<Embedder> embedder;
  std::unique_ptr<Reranker> reranker;
};
Backends make_backends(const HarnessConfig& config);

// Every command prints a JSON report to `out` (stable field order, so CI
// can diff runs) and a short human summary to `err`; the int is the
// process exit code. Errors are reported on `err`, never thrown.
int cmd_ingest(const HarnessConfig& config, const std::string& corpus_path,
               const std::string& store_path, std::ostream& out,
               std::ostream& err);

int cmd_build_hierarchy(const HarnessConfig& config,
                        const std::string& store_path, std::ostream& out,
                        std::ostream& err);

// route: "s1", "s2", or "both".
int cmd_ask(const HarnessConfig& config, const std::string& store_path,
            const std::string& question, const std::string& route,
            std::ostream& out, std::ostream& err);

int cmd_eval(const HarnessConfig& config, const std::string& store_path,
             const std::string& cases_path, std::ostream& out,
             std::ostream& err);

// args: {"stats"} | {"entity", <name>} | {"path", <name>, <name>, ...}
int cmd_inspect(const HarnessConfig& config, const std::string& store_path,
                const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err);

}  // namespace hiermem
