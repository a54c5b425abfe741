#include <cmath>

#include "mpcjoin/aggregates.hpp"
#include "mpcjoin/errors.hpp"
#include "mpcjoin/joins.hpp"

namespace mpcjoin {

namespace {
struct Line3Shape {
  int e1, e2, e3;  // R1(A,B), R2(B,C), R3(C,D)
  AttrId B;
};

Line3Shape line3_shape(const Query& q) {
  if (q.m() != 3 || q.n() != 4) fail(Err::SchemaMismatch, "line3_join needs exactly three binary relations over four attributes");
  for (auto& e : q.edges())
    if (e.attrs.size() != 2) fail(Err::SchemaMismatch, "line3_join needs binary relations");
  for (int mid = 0; mid < 3; ++mid) {
    int a = (mid + 1) % 3, b = (mid + 2) % 3;
    Mask ma = q.edge(a).mask, mb = q.edge(b).mask, mm = q.edge(mid).mask;
    if (popcount(ma & mm) == 1 && popcount(mb & mm) == 1 && !(ma & mb) && (ma & mm) != (mb & mm)) {
      int e1 = std::min(a, b), e3 = std::max(a, b);
      Mask sb = q.edge(e1).mask & mm;
      return {e1, mid, e3, __builtin_ctzll(sb)};
    }
  }
  fail(Err::SchemaMismatch, "query is not a line-3 chain");
}

void split(const DRel& r, const std::vector<int>& cols, const std::vector<KeyMap<Weight>>& deg, double tau, DRel& heavy, DRel& light) {
  heavy = r.empty_like();
  light = r.empty_like();
  heavy.name += "^H";
  light.name += "^L";
  for (size_t s = 0; s < r.parts.size(); ++s)
    for (size_t i = 0; i < r.parts[s].size(); ++i) {
      const Value* row = r.row(static_cast<int>(s), i);
      auto it = deg[s].find(key_of(row, cols));
      Weight d = it == deg[s].end() ? 0 : it->second;
      (static_cast<double>(d) > tau ? heavy : light).parts[s].append(row, r.arity(), r.parts[s].w[i]);
    }
}
}  // namespace

JoinStats line3_join(Group& g, const Query& q, std::vector<DRel> rels, EmitSink& sink, const AlgoConfig& cfg) {
  Line3Shape sh = line3_shape(q);
  JoinTree t = build_join_tree(q);
  remove_dangling(g, t, rels);
  JoinStats st;
  st.out = count_output(g, rels);
  std::vector<Weight> sizes(g.n(), 0);
  for (int s = 0; s < g.n(); ++s)
    for (auto& r : rels) sizes[s] += static_cast<Weight>(r.parts[s].size());
  st.in_after_dangling = static_cast<std::uint64_t>(all_reduce_sum(g, sizes));
  if (st.out == 0) return st;
  double tau = std::sqrt(static_cast<double>(st.out) / static_cast<double>(std::max<std::uint64_t>(1, st.in_after_dangling)));
  st.tau = tau;

  DRel& R1 = rels[sh.e1];
  DRel& R2 = rels[sh.e2];
  DRel& R3 = rels[sh.e3];
  std::vector<AttrId> b{sh.B};
  KeyedTable deg = count_by(g, R1, b, g.salt());
  auto c1 = R1.cols(b), c2 = R2.cols(b);
  Dist<Key> want(g.n());
  for (int s = 0; s < g.n(); ++s) {
    for (size_t i = 0; i < R1.parts[s].size(); ++i) want[s].push_back(key_of(R1.row(s, i), c1));
    for (size_t i = 0; i < R2.parts[s].size(); ++i) want[s].push_back(key_of(R2.row(s, i), c2));
  }
  auto got = lookup(g, deg, want);
  for (auto& m : deg.at)
    for (auto& [k, d] : m)
      if (static_cast<double>(d) > tau) ++st.heavy;

  DRel R1H, R1L, R2H, R2L;
  split(R1, c1, got, tau, R1H, R1L);
  split(R2, c2, got, tau, R2H, R2L);

  Parallel par(g);
  {
    // Q1 = R1^H ⋈ (R2^H ⋈ R3)
    DRel T;
    T.name = "R2H*R3";
    binary_join(g, R2H, R3, BinaryOut{nullptr, &T, WeightMode::Both, cfg.sr});
    binary_join(g, R1H, T, BinaryOut{&sink, nullptr, WeightMode::Both, cfg.sr});
    par.join_self();
  }
  par.restart();
  {
    // Q2 = (R1^L ⋈ R2^L) ⋈ R3
    DRel U;
    U.name = "R1L*R2L";
    binary_join(g, R1L, R2L, BinaryOut{nullptr, &U, WeightMode::Both, cfg.sr});
    binary_join(g, U, R3, BinaryOut{&sink, nullptr, WeightMode::Both, cfg.sr});
    par.join_self();
  }
  par.finish();
  return st;
}

}  // namespace mpcjoin
