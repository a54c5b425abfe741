#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mpcjoin/analysis.hpp"
#include "mpcjoin/errors.hpp"
#include "mpcjoin/experiment.hpp"
#include "mpcjoin/generators.hpp"

using namespace mpcjoin;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kVerifyFailed = 1, kInvalid = 2;

// A path to a query JSON file, or one of the built-in names.
Query load_query(const std::string& spec) {
  if (std::filesystem::exists(spec)) return load_query_file(spec).q;
  return named_query(spec);
}

std::map<std::string, double> parse_params(const std::vector<std::string>& kv) {
  std::map<std::string, double> m;
  for (auto& s : kv) {
    auto eq = s.find('=');
    if (eq == std::string::npos) fail(Err::ParamOutOfRange, "expected key=value, got " + s);
    try {
      m[s.substr(0, eq)] = std::stod(s.substr(eq + 1));
    } catch (const std::exception&) {
      fail(Err::ParamOutOfRange, "bad number in " + s);
    }
  }
  return m;
}

// --data is a manifest path or gen:<family>:k=v,k=v
Instance load_data(const Query& q, const std::string& data, std::uint64_t seed, const Semiring& sr) {
  if (data.rfind("gen:", 0) == 0) {
    std::string rest = data.substr(4);
    auto colon = rest.find(':');
    std::string family = rest.substr(0, colon);
    std::vector<std::string> kv;
    if (colon != std::string::npos) {
      std::stringstream ss(rest.substr(colon + 1));
      for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) kv.push_back(item);
    }
    Generated g = generate(family, parse_params(kv), seed, &q);
    if (g.inst.q.describe() != q.describe()) fail(Err::SchemaMismatch, "generator family does not produce this query");
    return g.inst;
  }
  return load_instance(q, data, sr);
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> v;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) v.push_back(item);
  return v;
}

std::vector<int> parse_ps(const std::string& s) {
  std::vector<int> v;
  for (auto& x : split(s)) {
    try {
      v.push_back(std::stoi(x));
    } catch (const std::exception&) {
      fail(Err::PlanInvalid, "bad server count " + x);
    }
  }
  return v;
}

std::uint64_t sequential_out(const Instance& inst) {
  if (is_acyclic(inst.q)) return count_join_sequential(inst);
  for (auto& r : inst.rels)
    if (r.size() > kOracleGuard) fail(Err::TooLarge, "cyclic query above the oracle guard");
  return brute_force_join(inst).size();
}

int cmd_classify(const std::string& qspec) {
  Query q = load_query(qspec);
  Classification c = classify(q);
  json j;
  j["class"] = class_name(c.cls);
  j["acyclic"] = is_acyclic(q);
  j["hierarchical"] = is_hierarchical(q);
  if (is_acyclic(q)) {
    JoinTree t = build_join_tree(q);
    json tree = json::array();
    for (int e = 0; e < t.size(); ++e)
      tree.push_back({{"edge", q.edge(e).name}, {"parent", t.parent[e] < 0 ? json(nullptr) : json(q.edge(t.parent[e]).name)}});
    j["join_tree"] = tree;
    json cover = json::array();
    for (int e : integral_edge_cover(q)) cover.push_back(q.edge(e).name);
    j["edge_cover"] = cover;
    if (auto mp = find_minimal_path3(q)) {
      json path = json::array(), edges = json::array();
      for (AttrId x : mp->x) path.push_back(q.attr_name(x));
      for (int e : mp->e) edges.push_back(q.edge(e).name);
      j["minimal_path"] = {{"attrs", path}, {"edges", edges}};
    }
  }
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_gen(const std::string& family, const std::vector<std::string>& kv, std::uint64_t seed, const std::string& qspec,
            const std::string& out) {
  if (out.empty()) fail(Err::PlanInvalid, "gen needs --out DIR");
  std::optional<Query> q;
  if (!qspec.empty()) q = load_query(qspec);
  Generated g = generate(family, parse_params(kv), seed, q ? &*q : nullptr);
  std::filesystem::create_directories(out);
  save_instance(g.inst, out);
  {
    std::ofstream f(out + "/query.json");
    if (!f) fail(Err::IoError, "cannot write " + out + "/query.json");
    f << query_to_json(g.inst.q) << "\n";
  }
  json p;
  p["family"] = family;
  p["seed"] = seed;
  p["IN"] = g.in;
  p["OUT"] = g.out;
  p["tau"] = g.tau;
  p["rejections"] = g.rejections;
  p["within_tolerance"] = g.within_tolerance;
  p["realized"] = g.params;
  std::ofstream f(out + "/params.json");
  if (!f) fail(Err::IoError, "cannot write " + out + "/params.json");
  f << p.dump(2) << "\n";
  if (g.rejections) std::cerr << "gen: " << g.rejections << " rejected draws\n";
  std::cout << "IN=" << g.in << " OUT=" << g.out << "\n";
  return kOk;
}

int cmd_run(const std::string& qspec, const std::string& data, const std::string& algos, const std::string& ps,
            std::uint64_t seed, const std::string& out, bool verify, const std::string& order, const std::string& result,
            const std::string& semiring) {
  ExperimentPlan plan;
  Query q = load_query(qspec);
  plan.query_label = std::filesystem::exists(qspec) ? std::filesystem::path(qspec).stem().string() : qspec;
  plan.opt.cfg.sr = Semiring::from_name(semiring);
  plan.inst = load_data(q, data, seed, plan.opt.cfg.sr);
  plan.algos = split(algos);
  plan.ps = parse_ps(ps);
  plan.opt.seed = seed;
  plan.opt.verify = verify;
  plan.opt.join_order = order;
  plan.opt.result_tsv = result;
  if (!result.empty() && (plan.algos.size() != 1 || plan.ps.size() != 1))
    fail(Err::PlanInvalid, "--result needs exactly one algorithm and one p");
  auto rows = run_experiment(plan);
  std::vector<LoadReport> reps;
  for (auto& r : rows) reps.push_back(r.report);
  if (out.empty()) {
    std::cout << report_csv_header() << "\n";
    for (auto& r : reps) std::cout << report_csv_row(r) << "\n";
  } else {
    emit_report(reps, out);
  }
  for (auto& r : rows) {
    if (!r.mismatch.empty()) {
      std::cerr << "verification failed: " << r.report.algorithm << " p=" << r.report.p << ": " << r.mismatch << "\n";
      return kVerifyFailed;
    }
    if (verify && !r.verify_attempted)
      std::cerr << "note: " << r.report.algorithm << " p=" << r.report.p << " not verified (instance above oracle guard)\n";
  }
  return kOk;
}

int cmd_bounds(const std::string& qspec, const std::string& data, const std::string& algos, const std::string& ps,
               std::uint64_t seed, const std::string& out) {
  Query q = load_query(qspec);
  Instance inst = load_data(q, data, seed, Semiring::counting());
  double in = static_cast<double>(inst.input_size()), o = static_cast<double>(sequential_out(inst));
  std::ostringstream os;
  os << bounds_csv_header() << "\n";
  for (auto& a : split(algos))
    for (int p : parse_ps(ps)) {
      if (p < 1) fail(Err::PlanInvalid, "p must be at least 1");
      os << bounds_csv_row(predicted_load(a, in, o, p), in, o, p) << "\n";
    }
  if (out.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(out);
    if (!f) fail(Err::IoError, "cannot write " + out);
    f << os.str();
  }
  return kOk;
}

int cmd_oracle(const std::string& qspec, const std::string& data, std::uint64_t seed, const std::string& out,
               const std::string& semiring) {
  Query q = load_query(qspec);
  Semiring sr = Semiring::from_name(semiring);
  Instance inst = load_data(q, data, seed, sr);
  for (auto& r : inst.rels)
    if (r.size() > kOracleGuard) fail(Err::TooLarge, "relation " + r.name + " above the oracle guard");
  Relation res = brute_force_join(inst, sr);
  if (is_acyclic(q) && count_join_sequential(inst) != res.size()) {
    std::cerr << "oracle disagreement: enumeration " << res.size() << " vs count " << count_join_sequential(inst) << "\n";
    return kVerifyFailed;
  }
  if (!out.empty()) save_relation(res, out);
  std::cout << "IN=" << inst.input_size() << " OUT=" << res.size() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MPC join simulator"};
  app.require_subcommand(1);
  std::string qspec, data, algos = "acyclic", ps = "4", out, order, result, family, semiring = "counting";
  std::uint64_t seed = 1;
  bool verify = false;
  std::vector<std::string> params;

  auto* classify_cmd = app.add_subcommand("classify", "Classify a query and print its structure as JSON");
  classify_cmd->add_option("--query", qspec, "Query JSON file or built-in name")->required();

  auto* gen = app.add_subcommand("gen", "Generate an instance (manifest, TSVs, params.json)");
  gen->add_option("family", family, "Generator family")->required();
  gen->add_option("--param", params, "key=value generator parameter");
  gen->add_option("--query", qspec, "Query for acyclic_hard and random_acyclic");
  gen->add_option("--seed", seed);
  gen->add_option("--out", out, "Output directory")->required();

  auto* run = app.add_subcommand("run", "Run algorithms on the simulator and report loads");
  run->add_option("--query", qspec)->required();
  run->add_option("--data", data, "Manifest path or gen:<family>:k=v,...")->required();
  run->add_option("--algos", algos, "Comma-separated algorithm labels");
  run->add_option("--p", ps, "Comma-separated server counts");
  run->add_option("--seed", seed);
  run->add_option("--out", out, "Report CSV path (stdout when absent)");
  run->add_flag("--verify", verify, "Check results against the brute-force oracle");
  run->add_option("--order", order, "Yannakakis join order, e.g. ((R1,R2),R3)");
  run->add_option("--result", result, "Write the join result as TSV");
  run->add_option("--semiring", semiring, "counting, sum-product or min-plus");

  auto* bounds = app.add_subcommand("bounds", "Predicted loads for an instance");
  bounds->add_option("--query", qspec)->required();
  bounds->add_option("--data", data)->required();
  bounds->add_option("--algos", algos);
  bounds->add_option("--p", ps);
  bounds->add_option("--seed", seed);
  bounds->add_option("--out", out);

  auto* oracle = app.add_subcommand("oracle-check", "Brute-force join of an instance");
  oracle->add_option("--query", qspec)->required();
  oracle->add_option("--data", data)->required();
  oracle->add_option("--seed", seed);
  oracle->add_option("--out", out, "Result TSV path");
  oracle->add_option("--semiring", semiring);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  try {
    if (*classify_cmd) return cmd_classify(qspec);
    if (*gen) return cmd_gen(family, params, seed, qspec, out);
    if (*run) return cmd_run(qspec, data, algos, ps, seed, out, verify, order, result, semiring);
    if (*bounds) return cmd_bounds(qspec, data, algos, ps, seed, out);
    if (*oracle) return cmd_oracle(qspec, data, seed, out, semiring);
  } catch (const MpcError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return kInvalid;
}
