#include "mpcjoin/experiment.hpp"

#include <algorithm>
#include <fstream>

#include "mpcjoin/aggregates.hpp"
#include "mpcjoin/analysis.hpp"
#include "mpcjoin/errors.hpp"

namespace mpcjoin {

namespace {
bool is_line3_shape(const Query& q) {
  if (q.m() != 3) return false;
  auto mp = find_minimal_path3(q);
  if (!mp) return false;
  for (int i = 0; i < 3; ++i)
    if (q.edge(mp->e[i]).mask != (bit(mp->x[i]) | bit(mp->x[i + 1]))) return false;
  return mp->e[0] != mp->e[1] && mp->e[1] != mp->e[2] && mp->e[0] != mp->e[2];
}

bool under_guard(const Instance& inst) {
  for (auto& r : inst.rels)
    if (r.size() > kOracleGuard) return false;
  return true;
}
}  // namespace

const std::vector<std::string>& algorithm_labels() {
  static const std::vector<std::string> v{"binary", "yannakakis", "line3", "acyclic", "rhier", "count"};
  return v;
}

std::optional<std::string> inapplicable_reason(const Query& q, const std::string& algo) {
  if (std::find(algorithm_labels().begin(), algorithm_labels().end(), algo) == algorithm_labels().end())
    return "unknown algorithm " + algo;
  if (!is_acyclic(q)) return "query is cyclic; no cyclic join algorithm is available";
  if (algo == "binary" && q.m() != 2) return "binary needs exactly two relations";
  if (algo == "line3" && !is_line3_shape(q)) return "line3 needs R1(A,B), R2(B,C), R3(C,D)";
  if (algo == "rhier" && !at_most_r_hierarchical(classify(q).cls)) return "query is not r-hierarchical";
  return std::nullopt;
}

RunResult run_one(const Instance& inst, const std::string& query_label, const std::string& algo, int p,
                  const RunOptions& opt) {
  if (auto why = inapplicable_reason(inst.q, algo)) fail(Err::AlgorithmInapplicable, algo + ": " + *why);
  Cluster c(p, opt.seed);
  if (opt.shuffle_delivery) c.set_shuffle_delivery(true, opt.seed + 1);
  Group g = c.all();
  std::uint64_t in = inst.input_size();
  c.check_regime(in);
  std::vector<DRel> rels = distribute_input(g, inst, opt.seed);

  RunResult res;
  res.verify_attempted = opt.verify && under_guard(inst);
  bool collect = res.verify_attempted || !opt.result_tsv.empty();
  CollectSink collector(inst.q.n(), opt.cfg.sr);
  CountSink counter;
  EmitSink& sink = collect ? static_cast<EmitSink&>(collector) : static_cast<EmitSink&>(counter);

  std::uint64_t out = 0;
  if (algo == "binary") {
    BinaryOut bo;
    bo.sink = &sink;
    bo.sr = opt.cfg.sr;
    auto br = binary_join(g, rels[0], rels[1], bo);
    res.stats.out = br.out;
    res.stats.heavy = br.heavy_keys;
    res.stats.max_virtual_servers = br.virtual_servers;
  } else if (algo == "yannakakis") {
    res.stats = yannakakis_join(g, inst.q, rels, opt.join_order.empty() ? default_plan(inst.q) : opt.join_order, sink, opt.cfg);
  } else if (algo == "line3") {
    res.stats = line3_join(g, inst.q, rels, sink, opt.cfg);
  } else if (algo == "acyclic") {
    res.stats = acyclic_join(g, inst.q, rels, sink, opt.cfg);
  } else if (algo == "rhier") {
    res.stats = r_hierarchical_join(g, inst.q, rels, sink, opt.cfg);
  } else {
    res.stats.out = count_output(g, rels);
  }
  if (algo == "count") out = res.stats.out;
  else out = collect ? collector.size() : counter.count();

  res.report = c.report(algo);
  res.report.query = query_label;
  res.report.in = in;
  res.report.out = out;
  res.report.seed = opt.seed;
  res.report.predicted = predicted_load(algo, static_cast<double>(in), static_cast<double>(out), p).value;

  if (res.verify_attempted) {
    Relation want = brute_force_join(inst, opt.cfg.sr);
    if (algo == "count") {
      if (out != want.size()) res.mismatch = "count " + std::to_string(out) + " != oracle " + std::to_string(want.size());
    } else {
      Relation got = collector.result(inst.q);
      res.duplicates = collector.duplicates();
      if (res.duplicates) res.mismatch = std::to_string(res.duplicates) + " duplicate results";
      else if (collector.inconsistent() || collector.incomplete()) res.mismatch = "inconsistent or incomplete emissions";
      else if (got.values != want.values) res.mismatch = "result set differs from oracle (" + std::to_string(got.size()) + " vs " + std::to_string(want.size()) + ")";
      else if (got.weights != want.weights) res.mismatch = "annotations differ from oracle";
    }
    res.report.verified = res.mismatch.empty();
  }
  if (!opt.result_tsv.empty()) save_relation(collector.result(inst.q), opt.result_tsv);
  return res;
}

void check_experiment_plan(const ExperimentPlan& plan) {
  if (plan.algos.empty()) fail(Err::PlanInvalid, "no algorithms given");
  if (plan.ps.empty()) fail(Err::PlanInvalid, "no server counts given");
  for (int p : plan.ps)
    if (p < 1) fail(Err::PlanInvalid, "p must be at least 1");
  for (auto& a : plan.algos) {
    if (std::find(algorithm_labels().begin(), algorithm_labels().end(), a) == algorithm_labels().end())
      fail(Err::PlanInvalid, "unknown algorithm " + a);
    if (auto why = inapplicable_reason(plan.inst.q, a)) fail(Err::AlgorithmInapplicable, a + ": " + *why);
  }
  if (!plan.opt.join_order.empty()) {
    try {
      validate_plan(plan.inst.q, parse_plan(plan.inst.q, plan.opt.join_order));
    } catch (const MpcError& e) {
      fail(Err::PlanInvalid, std::string("join order: ") + e.what());
    }
  }
}

std::vector<RunResult> run_experiment(const ExperimentPlan& plan) {
  check_experiment_plan(plan);
  std::vector<RunResult> rows;
  for (auto& a : plan.algos)
    for (int p : plan.ps) {
      rows.push_back(run_one(plan.inst, plan.query_label, a, p, plan.opt));
      if (!rows.back().mismatch.empty()) return rows;
    }
  return rows;
}

void emit_report(const std::vector<LoadReport>& rows, const std::string& path) {
  if (rows.empty()) fail(Err::IoError, "no report rows to write");
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(Err::IoError, "cannot write " + path);
  f << report_csv_header() << "\n";
  for (auto& r : rows) f << report_csv_row(r) << "\n";
  if (!f) fail(Err::IoError, "write failed: " + path);
}

}  // namespace mpcjoin
