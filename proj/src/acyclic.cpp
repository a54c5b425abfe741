#include <algorithm>
#include <cmath>
#include <map>

#include "mpcjoin/aggregates.hpp"
#include "mpcjoin/errors.hpp"
#include "mpcjoin/joins.hpp"

namespace mpcjoin {

namespace {

// Dummy join attributes get ids far above any query attribute.
constexpr AttrId kDummyBase = 1 << 20;

struct Ctx {
  EmitSink& sink;
  const AlgoConfig& cfg;
  JoinStats& st;
  AttrId next_dummy;
  int depth = 0;
};

void emit_local(const DRel& r, EmitSink& sink) {
  for (size_t s = 0; s < r.parts.size(); ++s)
    for (size_t i = 0; i < r.parts[s].size(); ++i) {
      Frag f{&r.schema, r.row(static_cast<int>(s), i), r.parts[s].w[i]};
      sink.emit(static_cast<int>(s), &f, 1);
    }
}

void add_const_attr(DRel& r, AttrId a) {
  size_t ar = r.arity();
  for (auto& p : r.parts) {
    Part q;
    std::vector<Value> row(ar + 1, 0);
    for (size_t i = 0; i < p.size(); ++i) {
      std::copy(p.v.begin() + static_cast<long>(i * ar), p.v.begin() + static_cast<long>((i + 1) * ar), row.begin());
      q.append(row.data(), ar + 1, p.w[i]);
    }
    p = std::move(q);
  }
  r.schema.push_back(a);
}

Weight local_size(const DRel& r, int s) { return static_cast<Weight>(r.parts[s].size()); }

// Joins `cur` (standing in for tree node `start`) with the relations of `nodes`, always
// picking the lowest-index node adjacent in the tree to what is already joined.
DRel join_connected(Group& g, DRel cur, int start, std::vector<int> nodes, const JoinTree& t,
                    const std::vector<const DRel*>& rel_of, const Semiring& sr) {
  std::vector<int> joined{start};
  while (!nodes.empty()) {
    size_t pick = 0;
    bool found = false;
    for (size_t i = 0; i < nodes.size() && !found; ++i)
      for (int j : joined)
        if (t.adjacent(nodes[i], j)) {
          pick = i;
          found = true;
          break;
        }
    int u = nodes[pick];
    nodes.erase(nodes.begin() + static_cast<long>(pick));
    DRel next;
    next.name = cur.name + "*" + rel_of[u]->name;
    binary_join(g, cur, *rel_of[u], BinaryOut{nullptr, &next, WeightMode::Both, sr});
    cur = std::move(next);
    joined.push_back(u);
  }
  return cur;
}

void acyc(Group& g, std::vector<DRel> rels, Ctx& cx);

void acyc_step(Group& g, std::vector<DRel>& rels, const JoinTree& t, std::uint64_t out, std::uint64_t in, Ctx& cx) {
  const Semiring& sr = cx.cfg.sr;
  int m = static_cast<int>(rels.size());
  int n = g.n();

  // e0: the deepest internal node whose children are all leaves, lowest index on ties.
  auto ch = t.children();
  auto dep = t.depth();
  int e0 = -1;
  for (int u = 0; u < m; ++u) {
    if (ch[u].empty()) continue;
    bool leaves = std::all_of(ch[u].begin(), ch[u].end(), [&](int c) { return ch[c].empty(); });
    if (leaves && (e0 < 0 || dep[u] > dep[e0])) e0 = u;
  }
  if (e0 < 0) fail(Err::Internal, "acyclic_join: no internal node");
  std::vector<int> kids = ch[e0];
  std::sort(kids.begin(), kids.end());
  int k = static_cast<int>(kids.size());
  if (k > 20) fail(Err::TooLarge, "acyclic_join: too many leaf children");

  std::vector<std::vector<AttrId>> s(k);
  for (int i = 0; i < k; ++i) {
    s[i] = shared_attrs(rels[e0].schema, rels[kids[i]].schema);
    if (s[i].empty()) {
      AttrId d = cx.next_dummy++;
      add_const_attr(rels[e0], d);
      add_const_attr(rels[kids[i]], d);
      s[i] = {d};
    }
  }
  std::vector<int> ebar;
  for (int u = 0; u < m; ++u)
    if (u != e0 && std::find(kids.begin(), kids.end(), u) == kids.end()) ebar.push_back(u);

  // N_beta = IN - sum of the leaf children.
  std::vector<Weight> alpha(n, 0);
  for (int sv = 0; sv < n; ++sv)
    for (int c : kids) alpha[sv] += local_size(rels[c], sv);
  std::uint64_t n_alpha = static_cast<std::uint64_t>(all_reduce_sum(g, alpha));
  double n_beta = static_cast<double>(std::max<std::uint64_t>(1, in - n_alpha));
  double tau = std::sqrt(static_cast<double>(out) / n_beta);
  if (cx.depth == 0) cx.st.tau = tau;

  // Step 1: degree of every s_i value in R(e_i), looked up by the child and by e0.
  std::vector<std::vector<KeyMap<Weight>>> deg(k);
  {
    Parallel par(g);
    for (int i = 0; i < k; ++i) {
      par.restart();
      const DRel& c = rels[kids[i]];
      KeyedTable tb = count_by(g, c, s[i], g.salt());
      for (auto& mp : tb.at)
        for (auto& [key, d] : mp)
          if (static_cast<double>(d) >= tau) ++cx.st.heavy;
      auto cc = c.cols(s[i]), c0 = rels[e0].cols(s[i]);
      Dist<Key> want(n);
      for (int sv = 0; sv < n; ++sv) {
        for (size_t j = 0; j < c.parts[sv].size(); ++j) want[sv].push_back(key_of(c.row(sv, j), cc));
        for (size_t j = 0; j < rels[e0].parts[sv].size(); ++j) want[sv].push_back(key_of(rels[e0].row(sv, j), c0));
      }
      deg[i] = lookup(g, tb, want);
      par.join_self();
    }
    par.finish();
  }
  auto degree = [&](int i, int sv, const Value* row, const std::vector<int>& cols) -> Weight {
    auto it = deg[i][sv].find(key_of(row, cols));
    return it == deg[i][sv].end() ? 0 : it->second;
  };

  std::vector<DRel> H(k), Lo(k);
  for (int i = 0; i < k; ++i) {
    const DRel& c = rels[kids[i]];
    H[i] = c.empty_like();
    Lo[i] = c.empty_like();
    H[i].name += "^H";
    Lo[i].name += "^L";
    auto cc = c.cols(s[i]);
    for (int sv = 0; sv < n; ++sv)
      for (size_t j = 0; j < c.parts[sv].size(); ++j) {
        const Value* row = c.row(sv, j);
        (static_cast<double>(degree(i, sv, row, cc)) >= tau ? H[i] : Lo[i]).parts[sv].append(row, c.arity(), c.parts[sv].w[j]);
      }
  }

  // e0 tuples by heavy/light pattern over the children; heavy and light e0 for the all-light pattern.
  const DRel& R0 = rels[e0];
  std::map<std::uint32_t, DRel> by_pat;
  DRel R0H = R0.empty_like(), R0L = R0.empty_like();
  R0H.name += "^H";
  R0L.name += "^L";
  {
    std::vector<std::vector<int>> c0(k);
    for (int i = 0; i < k; ++i) c0[i] = R0.cols(s[i]);
    for (int sv = 0; sv < n; ++sv)
      for (size_t j = 0; j < R0.parts[sv].size(); ++j) {
        const Value* row = R0.row(sv, j);
        std::uint32_t pat = 0;
        double prod = 1;
        for (int i = 0; i < k; ++i) {
          Weight d = degree(i, sv, row, c0[i]);
          if (static_cast<double>(d) >= tau) pat |= 1u << i;
          prod *= static_cast<double>(d);
        }
        Weight w = R0.parts[sv].w[j];
        if (pat == 0) {
          (prod >= tau ? R0H : R0L).parts[sv].append(row, R0.arity(), w);
        } else {
          auto [it, fresh] = by_pat.try_emplace(pat, R0.empty_like());
          if (fresh) it->second.name = R0.name + "^P" + std::to_string(pat);
          it->second.parts[sv].append(row, R0.arity(), w);
        }
      }
  }

  std::vector<const DRel*> rel_of(m);
  for (int u = 0; u < m; ++u) rel_of[u] = &rels[u];

  Parallel par(g);
  // Step 2: sub-joins with at least one heavy child.
  for (std::uint32_t pat = 1; pat < (1u << k); ++pat) {
    par.restart();
    DRel R0P = R0.empty_like();
    auto it = by_pat.find(pat);
    if (it != by_pat.end()) R0P = it->second;
    int istar = __builtin_ctz(pat);
    auto use = rel_of;
    for (int i = 0; i < k; ++i) use[kids[i]] = (pat >> i) & 1u ? &H[i] : &Lo[i];
    std::vector<int> rest = ebar;
    for (int i = 0; i < k; ++i)
      if (i != istar) rest.push_back(kids[i]);
    std::sort(rest.begin(), rest.end());
    DRel Rp = join_connected(g, std::move(R0P), e0, rest, t, use, sr);
    binary_join(g, H[istar], Rp, BinaryOut{&cx.sink, nullptr, WeightMode::Both, sr});
    par.join_self();
  }

  // Step 3.1: heavy e0 tuples of the all-light sub-join.
  par.restart();
  {
    DRel R0e = join_connected(g, R0H, e0, ebar, t, rel_of, sr);
    std::vector<DRel> tf(k + 1);
    tf[0] = std::move(R0e);
    Parallel inner(g);
    for (int i = 0; i < k; ++i) {
      inner.restart();
      tf[i + 1].name = R0H.name + "*" + Lo[i].name;
      binary_join(g, R0H, Lo[i], BinaryOut{nullptr, &tf[i + 1], WeightMode::Right, sr});
      inner.join_self();
    }
    inner.finish();
    r_hierarchical_join_schemas(g, std::move(tf), cx.sink, cx.cfg);
  }
  par.join_self();

  // Step 3.2: light e0 tuples; fold the children in, then recurse on the residual query.
  par.restart();
  {
    DRel cur = R0L;
    for (int i = 0; i < k; ++i) {
      bool last = ebar.empty() && i == k - 1;
      if (last) {
        binary_join(g, cur, Lo[i], BinaryOut{&cx.sink, nullptr, WeightMode::Both, sr});
      } else {
        DRel next;
        next.name = cur.name + "*" + Lo[i].name;
        binary_join(g, cur, Lo[i], BinaryOut{nullptr, &next, WeightMode::Both, sr});
        cur = std::move(next);
      }
    }
    if (!ebar.empty()) {
      std::vector<DRel> residual;
      for (int u = 0; u < m; ++u) {
        if (u == e0) residual.push_back(std::move(cur));
        else if (std::find(ebar.begin(), ebar.end(), u) != ebar.end()) residual.push_back(rels[u]);
      }
      ++cx.depth;
      acyc(g, std::move(residual), cx);
      --cx.depth;
    }
  }
  par.join_self();
  par.finish();
}

void acyc(Group& g, std::vector<DRel> rels, Ctx& cx) {
  int m = static_cast<int>(rels.size());
  if (m == 1) {
    emit_local(rels[0], cx.sink);
    return;
  }
  if (m == 2) {
    binary_join(g, rels[0], rels[1], BinaryOut{&cx.sink, nullptr, WeightMode::Both, cx.cfg.sr});
    return;
  }
  JoinTree t = schema_join_tree(rels);
  remove_dangling(g, t, rels);
  std::uint64_t out = count_output(g, rels);
  std::vector<Weight> sizes(g.n(), 0);
  for (int s = 0; s < g.n(); ++s)
    for (auto& r : rels) sizes[s] += local_size(r, s);
  std::uint64_t in = static_cast<std::uint64_t>(all_reduce_sum(g, sizes));
  if (cx.depth == 0) cx.st.in_after_dangling = in;
  if (out == 0) return;
  acyc_step(g, rels, t, out, in, cx);
}

}  // namespace

JoinStats acyclic_join_schemas(Group& g, std::vector<DRel> rels, EmitSink& sink, const AlgoConfig& cfg) {
  JoinStats st;
  if (rels.empty()) return st;
  std::vector<std::vector<AttrId>> schemas;
  for (auto& r : rels) schemas.push_back(r.schema);
  if (!is_acyclic(schema_query(schemas).q)) fail(Err::CyclicQuery, "acyclic_join needs an acyclic query");
  AttrId top = kDummyBase;
  for (auto& sc : schemas)
    for (AttrId x : sc) top = std::max(top, x + 1);
  CountingSink counted(sink);
  Ctx cx{counted, cfg, st, top};
  if (rels.size() <= 2) {
    std::uint64_t in = 0;
    for (auto& r : rels) in += r.total();
    st.in_after_dangling = in;
  }
  acyc(g, std::move(rels), cx);
  st.out = counted.count();
  return st;
}

JoinStats acyclic_join(Group& g, const Query& q, std::vector<DRel> rels, EmitSink& sink, const AlgoConfig& cfg) {
  if (!is_acyclic(q)) fail(Err::CyclicQuery, "acyclic_join needs an acyclic query");
  return acyclic_join_schemas(g, std::move(rels), sink, cfg);
}

}  // namespace mpcjoin
