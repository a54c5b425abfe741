#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "mpcjoin/analysis.hpp"
#include "mpcjoin/errors.hpp"
#include "mpcjoin/experiment.hpp"
#include "test_util.hpp"

using namespace mpcjoin;
namespace fs = std::filesystem;

namespace {
std::string bin() {
  const char* b = std::getenv("MPCJOIN_BIN");
  return b ? b : "mpcjoin";
}

struct Out {
  int code;
  std::string text;
};

Out sh(const std::string& args) {
  std::string cmd = bin() + " " + args + " 2>&1";
  FILE* f = popen(cmd.c_str(), "r");
  std::string text;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
  int st = pclose(f);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, text};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("mpcjoin_test_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

Err code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const MpcError& e) {
    return e.code();
  }
  return Err::Internal;
}
}  // namespace

TEST_CASE("classify: built-in names and files") {
  auto r = sh("classify --query a_ab_b");
  REQUIRE(r.code == 0);
  auto j = nlohmann::json::parse(r.text);
  CHECK(j["class"] == "r-hierarchical");
  CHECK(j["acyclic"] == true);

  auto d = scratch("classify");
  std::ofstream(d / "q.json") << query_to_json(named_query("line3"));
  auto f = sh("classify --query " + (d / "q.json").string());
  REQUIRE(f.code == 0);
  auto jf = nlohmann::json::parse(f.text);
  CHECK(jf["class"] == "acyclic");
  CHECK(jf["minimal_path"]["attrs"] == nlohmann::json({"A", "B", "C", "D"}));
  CHECK(jf["minimal_path"]["edges"].size() == 3);

  CHECK(sh("classify --query triangle").code == 0);
  CHECK(sh("classify --query " + (d / "missing.json").string()).code == 2);
  CHECK(sh("classify").code == 2);
}

TEST_CASE("gen writes the instance and is deterministic") {
  auto d = scratch("gen");
  auto a = sh("gen line3_hard --param IN=900 --param OUT=9000 --seed 4 --out " + (d / "a").string());
  REQUIRE(a.code == 0);
  for (const char* f : {"manifest.json", "R1.tsv", "R2.tsv", "R3.tsv", "params.json", "query.json"})
    CHECK(fs::exists(d / "a" / f));
  auto params = nlohmann::json::parse(slurp(d / "a" / "params.json"));
  auto g = gen_line3_hard(900, 9000, 4);
  CHECK(params["IN"] == g.in);
  CHECK(params["OUT"] == g.out);
  CHECK(params["tau"] == g.tau);

  REQUIRE(sh("gen line3_hard --param IN=900 --param OUT=9000 --seed 4 --out " + (d / "b").string()).code == 0);
  for (const char* f : {"R1.tsv", "R2.tsv", "R3.tsv", "params.json"}) CHECK(slurp(d / "a" / f) == slurp(d / "b" / f));

  CHECK(sh("gen line3_hard --param IN=900 --out " + (d / "c").string()).code == 2);
  CHECK(sh("gen nosuch --out " + (d / "c").string()).code == 2);
  CHECK(sh("gen order_gap --param N=10 --param OUT=5 --out " + (d / "c").string()).code == 2);
  CHECK(sh("gen order_gap --param N=ten --param OUT=5 --out " + (d / "c").string()).code == 2);
}

TEST_CASE("run: verified report, byte-identical reruns, result TSV matches the oracle") {
  auto d = scratch("run");
  REQUIRE(sh("gen random_acyclic --query star3 --param IN=1200 --param zipf=1.1 --seed 2 --out " + (d / "inst").string()).code == 0);
  std::string data = (d / "inst" / "manifest.json").string();
  std::string common = "run --query star3 --data " + data + " --algos acyclic,yannakakis,count --p 4,9 --seed 3 --verify";
  REQUIRE(sh(common + " --out " + (d / "r1.csv").string()).code == 0);
  REQUIRE(sh(common + " --out " + (d / "r2.csv").string()).code == 0);
  std::string csv = slurp(d / "r1.csv");
  CHECK(csv == slurp(d / "r2.csv"));
  CHECK(lines(csv) == 1 + 6);
  CHECK(csv.rfind(report_csv_header(), 0) == 0);

  REQUIRE(sh("run --query star3 --data " + data + " --algos acyclic --p 4 --result " + (d / "res.tsv").string()).code == 0);
  REQUIRE(sh("oracle-check --query star3 --data " + data + " --out " + (d / "oracle.tsv").string()).code == 0);
  std::string res = slurp(d / "res.tsv");
  CHECK(!res.empty());
  CHECK(res == slurp(d / "oracle.tsv"));
}

TEST_CASE("run: generator specs and the two-algorithm plan") {
  auto r = sh("run --query line3 --data gen:line3_hard:IN=30000,OUT=1000000 --algos yannakakis,line3 --p 4,16 --seed 1");
  REQUIRE(r.code == 0);
  CHECK(lines(r.text) == 5);

  // on the doubled order-gap instance line3 is clearly below both orders
  auto d = scratch("gap");
  std::string base = "run --query line3 --data gen:order_gap:N=2000,OUT=128000,doubled=1 --p 16 --seed 1 --out ";
  REQUIRE(sh(base + (d / "l.csv").string() + " --algos line3").code == 0);
  REQUIRE(sh(base + (d / "y1.csv").string() + " --algos yannakakis --order \"((R1,R2),R3)\"").code == 0);
  REQUIRE(sh(base + (d / "y2.csv").string() + " --algos yannakakis --order \"(R1,(R2,R3))\"").code == 0);
  auto load_of = [&](const std::string& f) {
    std::string row = slurp(d / f);
    row = row.substr(row.find('\n') + 1);
    std::vector<std::string> cells;
    std::stringstream ss(row);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    return std::stod(cells.at(7));
  };
  CHECK(load_of("l.csv") < load_of("y1.csv"));
  CHECK(load_of("l.csv") < load_of("y2.csv"));
}

TEST_CASE("run: invalid plans exit with 2") {
  CHECK(sh("run --query triangle --data gen:triangle_hard:IN=900,OUT=1000 --algos acyclic --p 4").code == 2);
  CHECK(sh("run --query line3 --data gen:order_gap:N=20,OUT=100 --algos rhier --p 4").code == 2);
  CHECK(sh("run --query line3 --data gen:order_gap:N=20,OUT=100 --algos nosuch --p 4").code == 2);
  CHECK(sh("run --query line3 --data gen:order_gap:N=20,OUT=100 --algos line3 --p 0").code == 2);
  CHECK(sh("run --query line3 --data gen:order_gap:N=20,OUT=100 --algos yannakakis --order \"((R1,R3),R2)\" --p 4").code == 2);
  CHECK(sh("run --query line3 --data /nonexistent/manifest.json --algos line3 --p 4").code == 2);
  CHECK(sh("run --query line3 --data gen:order_gap:N=20,OUT=100 --algos line3 --p 4 --out /nonexistent/dir/r.csv").code == 2);
}

TEST_CASE("bounds subcommand") {
  auto r = sh("bounds --query line3 --data gen:order_gap:N=100,OUT=1000 --algos line3,yannakakis --p 4");
  REQUIRE(r.code == 0);
  CHECK(r.text.rfind("algorithm,IN,OUT,p,predicted", 0) == 0);
  CHECK(r.text.find("line3,300,1000,4," + sig3(predicted_load("line3", 300, 1000, 4).value)) != std::string::npos);
}

TEST_CASE("run_experiment and emit_report") {
  ExperimentPlan plan;
  plan.query_label = "line3";
  plan.inst = gen_line3_order_gap(50, 500, false).inst;
  plan.algos = {"line3", "acyclic"};
  plan.ps = {2, 5};
  plan.opt.verify = true;
  auto rows = run_experiment(plan);
  REQUIRE(rows.size() == 4);
  for (auto& r : rows) {
    CHECK(r.report.verified);
    CHECK(r.mismatch.empty());
  }
  CHECK(rows[0].report.algorithm == "line3");
  CHECK(rows[1].report.p == 5);

  auto d = scratch("emit");
  emit_report({rows[0].report}, (d / "one.csv").string());
  CHECK(lines(slurp(d / "one.csv")) == 2);
  CHECK(code_of([&] { emit_report({}, (d / "none.csv").string()); }) == Err::IoError);

  ExperimentPlan tri = plan;
  tri.query_label = "triangle";
  tri.inst = gen_triangle_hard(900, 1000, 1).inst;
  CHECK(code_of([&] { check_experiment_plan(tri); }) == Err::AlgorithmInapplicable);
  ExperimentPlan empty = plan;
  empty.ps.clear();
  CHECK(code_of([&] { check_experiment_plan(empty); }) == Err::PlanInvalid);
}
