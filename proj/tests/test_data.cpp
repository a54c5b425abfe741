#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "doctest.h"
#include "mpcjoin/errors.hpp"
#include "test_util.hpp"

using namespace mpcjoin;
using testutil::rel;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("mpcjoin_test_data_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}
void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }
Err code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const MpcError& e) {
    return e.code();
  }
  return Err::Internal;
}
}  // namespace

TEST_CASE("load_relation examples") {
  auto d = scratch("load");
  write(d / "r.tsv", "A\tB\n1\t2\n1\t3\n");
  Relation r = load_relation((d / "r.tsv").string(), {"A", "B"});
  CHECK(r.size() == 2);
  CHECK(r.weights == std::vector<Weight>{1, 1});

  write(d / "empty.tsv", "A\tB\n");
  CHECK(load_relation((d / "empty.tsv").string(), {"A", "B"}).size() == 0);

  write(d / "w.tsv", "A\tB\t#w\n1\t2\t5\n4\t2\t7\n");
  Relation w = load_relation((d / "w.tsv").string(), {"A", "B"}, Semiring::sum_product());
  CHECK(w.weighted);
  CHECK(w.weights == std::vector<Weight>{5, 7});

  Relation mp = load_relation((d / "r.tsv").string(), {"A", "B"}, Semiring::min_plus());
  CHECK(mp.weights == std::vector<Weight>{0, 0});  // the multiplicative identity of min-plus

  write(d / "bad.tsv", "A\tB\n1\n");
  CHECK(code_of([&] { load_relation((d / "bad.tsv").string(), {"A", "B"}); }) == Err::ParseError);
  write(d / "nan.tsv", "A\tB\n1\tx\n");
  CHECK(code_of([&] { load_relation((d / "nan.tsv").string(), {"A", "B"}); }) == Err::ParseError);
  CHECK(code_of([&] { load_relation((d / "r.tsv").string(), {"B", "A"}); }) == Err::SchemaMismatch);
  write(d / "dup.tsv", "A\tB\n1\t2\n1\t2\n");
  CHECK(code_of([&] { load_relation((d / "dup.tsv").string(), {"A", "B"}); }) == Err::DuplicateTuple);
}

TEST_CASE("save/load round trip is exact") {
  auto d = scratch("roundtrip");
  std::mt19937_64 rng(7);
  Relation r;
  r.name = "R";
  r.schema = {"X", "Y", "Z"};
  r.weighted = true;
  std::set<std::vector<Value>> seen;
  while (seen.size() < 200) {
    std::vector<Value> row{rng(), rng() % 5, rng() >> 1};
    if (seen.insert(row).second) r.add(row, static_cast<Weight>(rng() % 1000) - 500);
  }
  save_relation(r, (d / "r.tsv").string());
  Relation back = load_relation((d / "r.tsv").string(), r.schema, Semiring::sum_product());
  CHECK(back.values == r.values);
  CHECK(back.weights == r.weights);
}

TEST_CASE("input_size") {
  Query q({"A", "B", "C", "D"}, {{"R1", {"A", "B"}}, {"R2", {"B", "C"}}, {"R3", {"C", "D"}}});
  std::vector<Relation> rs{rel("R1", {"A", "B"}, {{1, 1}, {1, 2}, {1, 3}, {1, 4}}),
                           rel("R2", {"B", "C"}, {{1, 1}, {2, 1}, {3, 1}, {4, 1}, {5, 1}}),
                           rel("R3", {"C", "D"}, {{1, 1}, {1, 2}, {1, 3}, {1, 4}, {1, 5}, {1, 6}})};
  Instance a = make_instance(q, rs);
  CHECK(input_size(a) == 15);
  std::reverse(rs.begin(), rs.end());
  CHECK(make_instance(q, rs).input_size() == 15);  // matched by name

  std::vector<Relation> none{rel("R1", {"A", "B"}, {}), rel("R2", {"B", "C"}, {}), rel("R3", {"C", "D"}, {})};
  CHECK(make_instance(q, none).input_size() == 0);

  auto g = gen_line3_order_gap(100, 1000, false);
  CHECK(g.in == g.inst.input_size());
}

TEST_CASE("make_instance reorders columns and rejects mismatches") {
  Query q({"A", "B"}, {{"R", {"A", "B"}}});
  Instance i = make_instance(q, {rel("R", {"B", "A"}, {{2, 1}})});
  CHECK(i.rel(0).schema == std::vector<std::string>{"A", "B"});
  CHECK(i.rel(0).row(0)[0] == 1);
  CHECK(code_of([&] { make_instance(q, {rel("R", {"A"}, {{1}})}); }) == Err::SchemaMismatch);
  CHECK(code_of([&] { make_instance(q, {rel("S", {"A", "B"}, {{1, 2}})}); }) == Err::SchemaMismatch);
}

TEST_CASE("project and select") {
  Relation r = rel("R", {"A", "B"}, {{1, 2}, {3, 4}}, {5, 6});
  Relation p = project(rel("R", {"A", "B"}, {{1, 2}}), {"B"});
  CHECK(p.schema == std::vector<std::string>{"B"});
  CHECK(p.values == std::vector<Value>{2});

  Relation s = select(r, {"B"}, {2});
  CHECK(s.size() == 1);
  CHECK(s.values == std::vector<Value>{1, 2});
  CHECK(s.weights == std::vector<Weight>{5});

  Relation e = project(r, {});
  CHECK(e.size() == 1);  // one empty tuple
  CHECK(e.arity() == 0);

  CHECK(code_of([&] { project(r, {"Z"}); }) == Err::UnknownAttribute);
  CHECK(code_of([&] { select(r, {"Z"}, {1}); }) == Err::UnknownAttribute);

  Relation many = rel("R", {"A", "B"}, {{1, 2}, {1, 3}, {2, 2}});
  CHECK(project(many, {"A"}).size() == 2);
  CHECK(project(many, {"B", "A"}).values == std::vector<Value>{2, 1, 3, 1, 2, 2});
}

TEST_CASE("semiring axioms on sampled triples") {
  std::mt19937_64 rng(11);
  for (Semiring sr : {Semiring::counting(), Semiring::sum_product(), Semiring::min_plus()}) {
    CAPTURE(sr.name());
    for (int i = 0; i < 1000; ++i) {
      auto draw = [&] { return static_cast<Weight>(rng() % 2001) - (sr.id == SemiringId::Counting ? 0 : 1000); };
      Weight a = draw(), b = draw(), c = draw();
      CHECK(sr.plus(a, b) == sr.plus(b, a));
      CHECK(sr.times(a, b) == sr.times(b, a));
      CHECK(sr.plus(sr.plus(a, b), c) == sr.plus(a, sr.plus(b, c)));
      CHECK(sr.times(sr.times(a, b), c) == sr.times(a, sr.times(b, c)));
      CHECK(sr.times(a, sr.plus(b, c)) == sr.plus(sr.times(a, b), sr.times(a, c)));
      CHECK(sr.plus(a, sr.zero()) == a);
      CHECK(sr.times(a, sr.one()) == a);
      CHECK(sr.times(a, sr.zero()) == sr.zero());
    }
  }
}

TEST_CASE("semiring overflow raises instead of wrapping") {
  Weight big = std::numeric_limits<Weight>::max() / 2 + 1;
  CHECK(code_of([&] { Semiring::sum_product().times(big, 4); }) == Err::Overflow);
  CHECK(code_of([&] { Semiring::counting().plus(big, big); }) == Err::Overflow);
  CHECK(code_of([] { Semiring::from_name("tropical"); }) == Err::ParseError);
}

TEST_CASE("manifest round trip") {
  auto d = scratch("manifest");
  auto g = gen_line3_hard(300, 3000, 5);
  save_instance(g.inst, d.string());
  Instance back = load_instance(g.inst.q, (d / "manifest.json").string());
  for (int e = 0; e < g.inst.q.m(); ++e) {
    Relation a = g.inst.rel(e), b = back.rel(e);
    a.sort_rows();
    b.sort_rows();
    CHECK(a.values == b.values);
  }
}

TEST_CASE("active domain") {
  Query q({"A", "B"}, {{"R1", {"A"}}, {"R2", {"A", "B"}}});
  Instance i = make_instance(q, {rel("R1", {"A"}, {{3}, {1}}), rel("R2", {"A", "B"}, {{1, 9}, {4, 9}})});
  CHECK(active_domain(i, 0) == std::vector<Value>{1, 3, 4});
  CHECK(active_domain(i, 1) == std::vector<Value>{9});
}
