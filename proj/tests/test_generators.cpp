#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "doctest.h"
#include "mpcjoin/aggregates.hpp"
#include "mpcjoin/analysis.hpp"
#include "mpcjoin/errors.hpp"
#include "test_util.hpp"

using namespace mpcjoin;

namespace {
Err code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const MpcError& e) {
    return e.code();
  }
  return Err::Internal;
}

bool same_instance(const Instance& a, const Instance& b) {
  if (a.rels.size() != b.rels.size()) return false;
  for (size_t i = 0; i < a.rels.size(); ++i)
    if (a.rels[i].values != b.rels[i].values || a.rels[i].weights != b.rels[i].weights) return false;
  return true;
}

std::set<Value> column(const Relation& r, int c) {
  std::set<Value> s;
  for (size_t i = 0; i < r.size(); ++i) s.insert(r.row(i)[c]);
  return s;
}

std::uint64_t mpc_count(const Instance& inst, int p = 8) {
  Cluster c(p, 1);
  Group g = c.all();
  return count_output(g, distribute_input(g, inst, 1));
}

bool within10(double got, double want) { return std::abs(got - want) <= 0.1 * want; }
}  // namespace

TEST_CASE("order gap: domain sizes and exact OUT") {
  auto g = gen_line3_order_gap(100, 1000, false);
  CHECK(column(g.inst.rel(0), 0).size() == 10);
  CHECK(column(g.inst.rel(0), 1).size() == 10);
  CHECK(column(g.inst.rel(1), 1).size() == 100);
  CHECK(column(g.inst.rel(2), 1).size() == 1);
  CHECK(g.out == 1000);
  CHECK(brute_force_join(g.inst).size() == 1000);
  CHECK(g.in == g.inst.input_size());

  auto d = gen_line3_order_gap(100, 100, false);
  CHECK(column(d.inst.rel(0), 0).size() == 1);
  CHECK(d.out == 100);

  CHECK(code_of([] { gen_line3_order_gap(100, 99, false); }) == Err::ParamOutOfRange);
  CHECK(code_of([] { gen_line3_order_gap(100, 10001, false); }) == Err::ParamOutOfRange);
}

TEST_CASE("order gap doubled: twice IN and OUT, no cross-copy results") {
  for (auto [N, OUT] : std::vector<std::pair<std::uint64_t, std::uint64_t>>{{40, 160}, {60, 600}, {50, 2500}}) {
    CAPTURE(N);
    auto one = gen_line3_order_gap(N, OUT, false);
    auto two = gen_line3_order_gap(N, OUT, true);
    CHECK(two.in == 2 * one.in);
    CHECK(two.out == 2 * one.out);
    Relation r = brute_force_join(two.inst);
    CHECK(r.size() == two.out);
    // both halves live on disjoint value ranges; a result mixing them would join across copies
    Value split = 1ull << 32;
    for (size_t i = 0; i < r.size(); ++i) {
      bool lo = r.row(i)[1] < split;
      CHECK((r.row(i)[2] < split) == lo);
    }
  }
}

TEST_CASE("line3 hard at IN = 3e4: realized sizes within 10%") {
  const std::uint64_t IN = 30000, OUT = 1000000;
  auto g = gen_line3_hard(IN, OUT, 1);
  double N = IN / 3.0;
  CHECK(g.tau == doctest::Approx(std::sqrt(OUT / N)).epsilon(0.05));
  CHECK(within10(double(g.inst.rel(1).size()), N));
  CHECK(within10(double(g.in), double(IN)));
  std::uint64_t counted = mpc_count(g.inst);
  CHECK(counted == g.out);
  CHECK(counted == count_join_sequential(g.inst));
  CHECK(within10(double(counted), double(OUT)));
  CHECK(g.within_tolerance);

  // every B value has exactly tau partners in R1, every C value tau partners in R3
  std::map<Value, int> deg;
  for (size_t i = 0; i < g.inst.rel(0).size(); ++i) ++deg[g.inst.rel(0).row(i)[1]];
  for (auto& [b, d] : deg) CHECK(d == static_cast<int>(g.tau));

  CHECK(same_instance(gen_line3_hard(IN, OUT, 1).inst, g.inst));
  CHECK_FALSE(same_instance(gen_line3_hard(IN, OUT, 2).inst, g.inst));
  CHECK(code_of([] { gen_line3_hard(3000, 2000, 1); }) == Err::ParamOutOfRange);
  CHECK(code_of([] { gen_line3_hard(30, 1000, 1); }) == Err::ParamOutOfRange);
}

TEST_CASE("acyclic hard embedding") {
  auto base = gen_line3_hard(900, 9000, 3);
  auto same = gen_acyclic_hard(named_query("line3"), 900, 9000, 3);
  std::uint64_t base_out = brute_force_join(base.inst).size();
  CHECK(brute_force_join(same.inst).size() == base_out);
  CHECK(same.in == base.in);

  auto chain = gen_acyclic_hard(named_query("chain4"), 900, 9000, 3);
  CHECK(brute_force_join(chain.inst).size() == base_out);
  CHECK(chain.out == base_out);

  auto star = gen_acyclic_hard(named_query("star3"), 900, 9000, 3);
  CHECK(brute_force_join(star.inst).size() == base_out);

  CHECK(code_of([] { gen_acyclic_hard(named_query("q1"), 900, 9000, 1); }) == Err::IsRHierarchical);
  CHECK(code_of([] { gen_acyclic_hard(named_query("a_ab_b"), 900, 9000, 1); }) == Err::IsRHierarchical);
}

TEST_CASE("triangle hard") {
  const std::uint64_t IN = 30000, OUT = 200000;
  auto g = gen_triangle_hard(IN, OUT, 5);
  double N = IN / 3.0, tau = std::round(OUT / N);
  CHECK(g.tau == tau);
  // R3(A,B) = dom(A) x dom(B)
  CHECK(column(g.inst.rel(2), 1).size() == static_cast<size_t>(N / tau));
  CHECK(column(g.inst.rel(2), 0).size() == static_cast<size_t>(tau));
  // expected OUT = (N/tau)^2 (tau^2/N) tau, up to flooring of the domains
  double d = std::floor(N / tau);
  double expect = d * d * std::min(1.0, double(OUT) / (tau * d * d)) * tau;
  CHECK(expect == doctest::Approx(double(OUT)));
  // a second count: every A value against every R1 edge, by set lookups
  std::set<std::pair<Value, Value>> ac, ab;
  for (size_t i = 0; i < g.inst.rel(1).size(); ++i) ac.insert({g.inst.rel(1).row(i)[0], g.inst.rel(1).row(i)[1]});
  for (size_t i = 0; i < g.inst.rel(2).size(); ++i) ab.insert({g.inst.rel(2).row(i)[0], g.inst.rel(2).row(i)[1]});
  std::uint64_t tri = 0;
  for (Value a : column(g.inst.rel(2), 0))
    for (size_t i = 0; i < g.inst.rel(0).size(); ++i)
      tri += ab.count({a, g.inst.rel(0).row(i)[0]}) && ac.count({a, g.inst.rel(0).row(i)[1]});
  CHECK(tri == g.out);
  CHECK(count_triangles(g.inst) == g.out);
  CHECK(within10(double(g.out), double(OUT)));
  CHECK(code_of([] { gen_triangle_hard(3000, 2000, 1); }) == Err::ParamOutOfRange);
  CHECK(code_of([] { gen_triangle_hard(3000, 100000, 1); }) == Err::ParamOutOfRange);
}

TEST_CASE("random acyclic: uniform, skewed, deterministic") {
  auto u = gen_random_acyclic(named_query("line3"), 300, {}, 1);
  CHECK(u.in == 300);
  CHECK(brute_force_join(u.inst).size() == u.out);

  Skew sk;
  sk.zipf = 1.2;
  auto z = gen_random_acyclic(named_query("line3"), 3000, sk, 2);
  std::map<Value, int> deg;
  for (size_t i = 0; i < z.inst.rel(1).size(); ++i) ++deg[z.inst.rel(1).row(i)[0]];
  int mx = 0;
  for (auto& [k, d] : deg) mx = std::max(mx, d);
  double avg = double(z.inst.rel(1).size()) / deg.size();
  CHECK(mx > 2 * avg);

  CHECK(same_instance(gen_random_acyclic(named_query("q2"), 500, sk, 9).inst, gen_random_acyclic(named_query("q2"), 500, sk, 9).inst));
  CHECK(code_of([] { gen_random_acyclic(named_query("triangle"), 300, {}, 1); }) == Err::CyclicQuery);
}

TEST_CASE("property: reported IN and OUT match recounts") {
  std::vector<Generated> gs;
  gs.push_back(gen_line3_order_gap(30, 300, true));
  gs.push_back(gen_line3_hard(600, 3000, 4));
  gs.push_back(gen_acyclic_hard(named_query("chain4"), 600, 3000, 4));
  gs.push_back(gen_triangle_hard(900, 1000, 4));
  gs.push_back(gen_case2_trap(200, 3));
  for (const char* name : {"star3", "q1", "a_ab_b"}) gs.push_back(gen_random_acyclic(named_query(name), 400, {}, 6));
  for (auto& g : gs) {
    CAPTURE(g.inst.q.describe());
    CHECK(g.in == g.inst.input_size());
    CHECK(g.out == brute_force_join(g.inst).size());
  }
}

TEST_CASE("generate dispatch") {
  auto a = generate("order_gap", {{"N", 100}, {"OUT", 1000}}, 0);
  CHECK(a.out == 1000);
  Query q = named_query("chain4");
  auto b = generate("random_acyclic", {{"IN", 400}, {"zipf", 1.0}}, 3, &q);
  Skew sk;
  sk.zipf = 1.0;
  CHECK(same_instance(b.inst, gen_random_acyclic(q, 400, sk, 3).inst));
  CHECK(code_of([] { generate("order_gap", {{"N", 100}}, 0); }) == Err::ParamOutOfRange);
  CHECK(code_of([] { generate("acyclic_hard", {{"IN", 100}, {"OUT", 1000}}, 0); }) == Err::ParamOutOfRange);
  CHECK(code_of([] { generate("nope", {}, 0); }) == Err::ParamOutOfRange);
  CHECK(generator_families().size() == 6);
}
