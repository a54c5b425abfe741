#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mpcjoin/data.hpp"
#include "mpcjoin/joins.hpp"
#include "mpcjoin/runtime.hpp"

namespace mpcjoin {

// Algorithm labels accepted by run_experiment: binary, yannakakis, line3, acyclic, rhier, count.
const std::vector<std::string>& algorithm_labels();
// Empty when `algo` can run on q, otherwise the reason.
std::optional<std::string> inapplicable_reason(const Query& q, const std::string& algo);

struct RunOptions {
  std::uint64_t seed = 0;
  bool verify = false;       // compare with the brute-force oracle when every relation is under the guard
  std::string join_order;    // yannakakis plan; default_plan(q) when empty
  std::string result_tsv;    // written when non-empty
  bool shuffle_delivery = false;
  AlgoConfig cfg;
};

struct RunResult {
  LoadReport report;
  JoinStats stats;
  bool verify_attempted = false;
  std::uint64_t duplicates = 0;
  std::string mismatch;  // empty when verification passed or was skipped
};

// One (algorithm, p) run on a fresh cluster.
RunResult run_one(const Instance& inst, const std::string& query_label, const std::string& algo, int p,
                  const RunOptions& opt);

struct ExperimentPlan {
  std::string query_label;
  Instance inst;
  std::vector<std::string> algos;
  std::vector<int> ps;
  RunOptions opt;
};

// Raises PlanInvalid (unknown label, empty lists, p < 1) or AlgorithmInapplicable before running anything.
void check_experiment_plan(const ExperimentPlan& plan);
// Rows in plan order: algorithms outer, p inner. Stops after the first row whose
// verification failed (its `mismatch` is set).
std::vector<RunResult> run_experiment(const ExperimentPlan& plan);

void emit_report(const std::vector<LoadReport>& rows, const std::string& path);

}  // namespace mpcjoin
