#include "mpcjoin/generators.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mpcjoin/analysis.hpp"
#include "mpcjoin/errors.hpp"

namespace mpcjoin {

namespace {
std::uint64_t splitmix(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
std::uint64_t fnv(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

constexpr int kMaxAttempts = 64;
constexpr Value kMirror = Value{1} << 32;

Query make_query(const std::vector<std::string>& attrs, const std::vector<std::pair<std::string, std::vector<std::string>>>& edges) {
  return Query(attrs, edges);
}

Relation rel_of(const Query& q, int e) {
  Relation r;
  r.name = q.edge(e).name;
  for (AttrId x : q.edge(e).attrs) r.schema.push_back(q.attr_name(x));
  return r;
}

// Visits the indices in [0, total) kept by independent Bernoulli(prob) trials.
template <class F>
void bernoulli(SplitMix& rng, std::uint64_t total, double prob, F f) {
  if (prob >= 1) {
    for (std::uint64_t i = 0; i < total; ++i) f(i);
    return;
  }
  if (prob <= 0) return;
  double lq = std::log1p(-prob);
  std::uint64_t i = 0;
  while (true) {
    double skip = std::floor(std::log(1 - rng.uniform()) / lq);
    if (skip >= static_cast<double>(total - i)) return;
    i += static_cast<std::uint64_t>(skip);
    f(i);
    if (++i >= total) return;
  }
}

bool near(double got, double want) { return std::abs(got - want) <= 0.1 * want; }

void finish(Generated& g) {
  g.params["IN"] = static_cast<double>(g.in);
  g.params["OUT"] = static_cast<double>(g.out);
  g.params["tau"] = g.tau;
  g.params["rejections"] = g.rejections;
}
}  // namespace

SplitMix::SplitMix(const std::string& family, std::uint64_t seed, std::uint64_t stream) {
  s_ = fnv(family);
  std::uint64_t t = s_ ^ (seed * 0xd1b54a32d192ed03ull);
  s_ = splitmix(t) ^ (stream * 0x8cb92ba72f3d8dd7ull);
}
std::uint64_t SplitMix::next() { return splitmix(s_); }
double SplitMix::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
std::uint64_t SplitMix::below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

std::vector<std::string> named_queries() { return {"line3", "chain4", "star3", "a_ab_b", "q1", "q2", "triangle", "trap"}; }

Query named_query(const std::string& name) {
  if (name == "line3") return make_query({"A", "B", "C", "D"}, {{"R1", {"A", "B"}}, {"R2", {"B", "C"}}, {"R3", {"C", "D"}}});
  if (name == "chain4")
    return make_query({"A", "B", "C", "D", "E"}, {{"R1", {"A", "B"}}, {"R2", {"B", "C"}}, {"R3", {"C", "D"}}, {"R4", {"D", "E"}}});
  if (name == "star3")
    return make_query({"A", "B", "C", "D", "E", "F"},
                      {{"R0", {"A", "B", "C"}}, {"R1", {"A", "D"}}, {"R2", {"B", "E"}}, {"R3", {"C", "F"}}});
  if (name == "a_ab_b") return make_query({"A", "B"}, {{"R1", {"A"}}, {"R2", {"A", "B"}}, {"R3", {"B"}}});
  if (name == "q1")
    return make_query({"x1", "x2", "x3", "x4", "x5", "x6"}, {{"R1", {"x1"}},
                                                             {"R2", {"x1", "x2"}},
                                                             {"R3", {"x1", "x2", "x3"}},
                                                             {"R4", {"x1", "x2", "x3", "x4"}},
                                                             {"R5", {"x1", "x2", "x3", "x5"}},
                                                             {"R6", {"x1", "x2", "x3", "x6"}}});
  if (name == "q2")
    return make_query({"x1", "x2", "x3", "x4", "x5"}, {{"R1", {"x1", "x2"}}, {"R2", {"x1", "x3", "x4"}}, {"R3", {"x1", "x3", "x5"}}});
  if (name == "triangle") return make_query({"A", "B", "C"}, {{"R1", {"B", "C"}}, {"R2", {"A", "C"}}, {"R3", {"A", "B"}}});
  if (name == "trap") return make_query({"X", "A", "B", "C"}, {{"R0", {"X"}}, {"R1", {"A", "B"}}, {"R2", {"B", "C"}}});
  fail(Err::ParamOutOfRange, "unknown query name: " + name);
}

Generated gen_line3_order_gap(std::uint64_t N, std::uint64_t OUT, bool doubled) {
  if (N < 1 || OUT < N || static_cast<double>(OUT) > static_cast<double>(N) * static_cast<double>(N))
    fail(Err::ParamOutOfRange, "order_gap needs N <= OUT <= N^2");
  std::uint64_t a = OUT / N, b = std::max<std::uint64_t>(1, N * N / OUT);
  Query q = named_query("line3");
  std::vector<Relation> rels{rel_of(q, 0), rel_of(q, 1), rel_of(q, 2)};
  for (Value i = 0; i < a; ++i)
    for (Value j = 0; j < b; ++j) rels[0].add({i, j}, 1);
  for (Value c = 0; c < N; ++c) rels[1].add({c % b, c}, 1);
  for (Value c = 0; c < N; ++c) rels[2].add({c, 0}, 1);
  if (doubled) {
    // mirrored copy: the large side is D, the fan-out goes B -> C
    for (Value j = 0; j < N; ++j) rels[0].add({kMirror, kMirror + j}, 1);
    for (Value j = 0; j < N; ++j) rels[1].add({kMirror + j, kMirror + j % b}, 1);
    for (Value c = 0; c < b; ++c)
      for (Value d = 0; d < a; ++d) rels[2].add({kMirror + c, kMirror + d}, 1);
  }
  Generated g;
  g.inst = make_instance(q, std::move(rels));
  g.in = g.inst.input_size();
  g.out = count_join_sequential(g.inst);
  g.params["N"] = static_cast<double>(N);
  g.params["dom_A"] = static_cast<double>(a);
  g.params["dom_B"] = static_cast<double>(b);
  g.params["dom_C"] = static_cast<double>(N);
  finish(g);
  return g;
}

Generated gen_line3_hard(std::uint64_t IN, std::uint64_t OUT, std::uint64_t seed) {
  if (IN < 9 || OUT < IN || static_cast<double>(OUT) > static_cast<double>(IN) * static_cast<double>(IN))
    fail(Err::ParamOutOfRange, "line3_hard needs IN <= OUT <= IN^2");
  double N = static_cast<double>(IN / 3);
  std::uint64_t t = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(std::sqrt(static_cast<double>(OUT) / N))));
  std::uint64_t dom = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(N) / t);
  double prob = std::min(1.0, static_cast<double>(OUT) / (static_cast<double>(t * t) * static_cast<double>(dom) * static_cast<double>(dom)));
  Query q = named_query("line3");
  Generated g;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<Relation> rels{rel_of(q, 0), rel_of(q, 1), rel_of(q, 2)};
    for (Value b = 0; b < dom; ++b)
      for (Value j = 0; j < t; ++j) rels[0].add({b * t + j, b}, 1);
    SplitMix rng("line3_hard", seed, static_cast<std::uint64_t>(attempt) * 16 + 2);
    bernoulli(rng, dom * dom, prob, [&](std::uint64_t i) { rels[1].add({i / dom, i % dom}, 1); });
    for (Value c = 0; c < dom; ++c)
      for (Value j = 0; j < t; ++j) rels[2].add({c, c * t + j}, 1);
    g.inst = make_instance(q, std::move(rels));
    g.in = g.inst.input_size();
    g.out = count_join_sequential(g.inst);
    g.within_tolerance = near(static_cast<double>(g.in), static_cast<double>(IN)) && near(static_cast<double>(g.out), static_cast<double>(OUT));
    if (g.within_tolerance) break;
    ++g.rejections;
  }
  g.tau = static_cast<double>(t);
  g.params["N"] = N;
  g.params["dom_B"] = static_cast<double>(dom);
  g.params["prob"] = prob;
  finish(g);
  return g;
}

Generated gen_acyclic_hard(const Query& q, std::uint64_t IN, std::uint64_t OUT, std::uint64_t seed) {
  if (!is_acyclic(q)) fail(Err::CyclicQuery, "gen_acyclic_hard needs an acyclic query");
  auto mp = find_minimal_path3(q);
  if (!mp) fail(Err::IsRHierarchical, "query is r-hierarchical; no minimal path of length 3");
  Generated base = gen_line3_hard(IN, OUT, seed);
  const auto& L = base.inst.rels;  // R1(A,B), R2(B,C), R3(C,D)
  std::vector<std::set<Value>> dom(4);
  for (size_t i = 0; i < L[0].size(); ++i) dom[0].insert(L[0].row(i)[0]), dom[1].insert(L[0].row(i)[1]);
  for (size_t i = 0; i < L[2].size(); ++i) dom[2].insert(L[2].row(i)[0]), dom[3].insert(L[2].row(i)[1]);
  std::vector<Relation> rels;
  for (int e = 0; e < q.m(); ++e) {
    Relation r = rel_of(q, e);
    const auto& attrs = q.edge(e).attrs;
    std::vector<int> pos;  // path positions present in e
    for (int i = 0; i < 4; ++i)
      if (std::find(attrs.begin(), attrs.end(), mp->x[i]) != attrs.end()) pos.push_back(i);
    std::vector<Value> row(attrs.size(), 0);
    auto col = [&](int i) { return static_cast<size_t>(std::find(attrs.begin(), attrs.end(), mp->x[i]) - attrs.begin()); };
    if (pos.empty()) {
      r.add(row, 1);
    } else if (pos.size() == 1) {
      for (Value v : dom[pos[0]]) {
        row[col(pos[0])] = v;
        r.add(row, 1);
      }
    } else if (pos.size() == 2 && pos[1] == pos[0] + 1) {
      const Relation& src = L[pos[0]];
      for (size_t i = 0; i < src.size(); ++i) {
        row[col(pos[0])] = src.row(i)[0];
        row[col(pos[1])] = src.row(i)[1];
        r.add(row, 1);
      }
    } else {
      fail(Err::Internal, "minimal path witness touches an edge in a non-consecutive way");
    }
    rels.push_back(std::move(r));
  }
  Generated g;
  g.inst = make_instance(q, std::move(rels));
  g.in = g.inst.input_size();
  g.out = count_join_sequential(g.inst);
  g.tau = base.tau;
  g.rejections = base.rejections;
  g.within_tolerance = base.within_tolerance;
  g.params = base.params;
  for (int i = 0; i < 4; ++i) g.params["x" + std::to_string(i + 1) + "_id"] = mp->x[i];
  finish(g);
  return g;
}

Generated gen_triangle_hard(std::uint64_t IN, std::uint64_t OUT, std::uint64_t seed) {
  double N = static_cast<double>(IN / 3);
  if (IN < 9 || OUT <= IN || static_cast<double>(OUT) > std::pow(N, 1.5))
    fail(Err::ParamOutOfRange, "triangle_hard needs IN < OUT <= (IN/3)^1.5");
  std::uint64_t t = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(static_cast<double>(OUT) / N)));
  std::uint64_t dom = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(N) / t);
  double prob = std::min(1.0, static_cast<double>(OUT) / (static_cast<double>(t) * static_cast<double>(dom) * static_cast<double>(dom)));
  Query q = named_query("triangle");
  Generated g;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<Relation> rels{rel_of(q, 0), rel_of(q, 1), rel_of(q, 2)};
    SplitMix rng("triangle_hard", seed, static_cast<std::uint64_t>(attempt) * 16 + 1);
    bernoulli(rng, dom * dom, prob, [&](std::uint64_t i) { rels[0].add({i / dom, i % dom}, 1); });
    for (Value a = 0; a < t; ++a)
      for (Value c = 0; c < dom; ++c) rels[1].add({a, c}, 1);
    for (Value a = 0; a < t; ++a)
      for (Value b = 0; b < dom; ++b) rels[2].add({a, b}, 1);
    g.inst = make_instance(q, std::move(rels));
    g.in = g.inst.input_size();
    g.out = count_triangles(g.inst);
    g.within_tolerance = near(static_cast<double>(g.in), static_cast<double>(IN)) && near(static_cast<double>(g.out), static_cast<double>(OUT));
    if (g.within_tolerance) break;
    ++g.rejections;
  }
  g.tau = static_cast<double>(t);
  g.params["N"] = N;
  g.params["dom_B"] = static_cast<double>(dom);
  g.params["prob"] = prob;
  finish(g);
  return g;
}

Generated gen_random_acyclic(const Query& q, std::uint64_t IN, const Skew& skew, std::uint64_t seed) {
  if (!is_acyclic(q)) fail(Err::CyclicQuery, "gen_random_acyclic needs an acyclic query");
  if (q.m() == 0 || IN < static_cast<std::uint64_t>(q.m())) fail(Err::ParamOutOfRange, "IN must be at least the number of relations");
  std::uint64_t D = skew.domain ? skew.domain : std::max<std::uint64_t>(2, static_cast<std::uint64_t>(std::llround(std::sqrt(static_cast<double>(IN)))));
  std::vector<double> cdf;
  if (skew.zipf > 0) {
    double acc = 0;
    for (std::uint64_t k = 0; k < D; ++k) cdf.push_back(acc += 1.0 / std::pow(static_cast<double>(k + 1), skew.zipf));
  }
  std::vector<Relation> rels;
  for (int e = 0; e < q.m(); ++e) {
    Relation r = rel_of(q, e);
    std::uint64_t want = IN / q.m() + (static_cast<std::uint64_t>(e) < IN % q.m() ? 1 : 0);
    double space = std::pow(static_cast<double>(D), static_cast<double>(q.edge(e).attrs.size()));
    want = std::min<std::uint64_t>(want, static_cast<std::uint64_t>(std::min(space, 1e18)));
    SplitMix rng("random_acyclic", seed, static_cast<std::uint64_t>(e));
    std::set<std::vector<Value>> seen;
    std::vector<Value> row(q.edge(e).attrs.size());
    for (std::uint64_t tries = 0; seen.size() < want && tries < 8 * want + 64; ++tries) {
      for (auto& v : row) {
        if (cdf.empty()) v = rng.below(D);
        else v = static_cast<Value>(std::upper_bound(cdf.begin(), cdf.end(), rng.uniform() * cdf.back()) - cdf.begin());
        v = std::min<Value>(v, D - 1);
      }
      if (seen.insert(row).second) r.add(row, 1);
    }
    rels.push_back(std::move(r));
  }
  Generated g;
  g.inst = make_instance(q, std::move(rels));
  g.in = g.inst.input_size();
  g.out = count_join_sequential(g.inst);
  g.params["domain"] = static_cast<double>(D);
  g.params["zipf"] = skew.zipf;
  finish(g);
  return g;
}

Generated gen_case2_trap(std::uint64_t IN, std::uint64_t r2) {
  if (IN < 1 || r2 < 1) fail(Err::ParamOutOfRange, "trap needs IN, r2 >= 1");
  Query q = named_query("trap");
  std::vector<Relation> rels{rel_of(q, 0), rel_of(q, 1), rel_of(q, 2)};
  rels[0].add({0}, 1);
  for (Value a = 0; a < IN; ++a) rels[1].add({a, 0}, 1);
  for (Value c = 0; c < r2; ++c) rels[2].add({0, c}, 1);
  Generated g;
  g.inst = make_instance(q, std::move(rels));
  g.in = g.inst.input_size();
  g.out = IN * r2;
  g.params["r2"] = static_cast<double>(r2);
  finish(g);
  return g;
}

std::vector<std::string> generator_families() {
  return {"order_gap", "line3_hard", "acyclic_hard", "triangle_hard", "random_acyclic", "case2_trap"};
}

Generated generate(const std::string& family, const std::map<std::string, double>& params, std::uint64_t seed, const Query* q) {
  auto get = [&](const std::string& k) -> std::uint64_t {
    auto it = params.find(k);
    if (it == params.end()) fail(Err::ParamOutOfRange, family + " needs parameter " + k);
    if (it->second < 0) fail(Err::ParamOutOfRange, k + " must be non-negative");
    return static_cast<std::uint64_t>(std::llround(it->second));
  };
  auto opt = [&](const std::string& k, double d) {
    auto it = params.find(k);
    return it == params.end() ? d : it->second;
  };
  auto need_q = [&]() -> const Query& {
    if (!q) fail(Err::ParamOutOfRange, family + " needs a query");
    return *q;
  };
  if (family == "order_gap") return gen_line3_order_gap(get("N"), get("OUT"), opt("doubled", 0) != 0);
  if (family == "line3_hard") return gen_line3_hard(get("IN"), get("OUT"), seed);
  if (family == "acyclic_hard") return gen_acyclic_hard(need_q(), get("IN"), get("OUT"), seed);
  if (family == "triangle_hard") return gen_triangle_hard(get("IN"), get("OUT"), seed);
  if (family == "random_acyclic") {
    Skew s;
    s.zipf = opt("zipf", 0);
    s.domain = static_cast<std::uint64_t>(opt("domain", 0));
    return gen_random_acyclic(need_q(), get("IN"), s, seed);
  }
  if (family == "case2_trap") return gen_case2_trap(get("IN"), get("r2"));
  fail(Err::ParamOutOfRange, "unknown generator family: " + family);
}

}  // namespace mpcjoin
