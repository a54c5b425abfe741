#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include "mpcjoin/aggregates.hpp"
#include "mpcjoin/errors.hpp"
#include "mpcjoin/joins.hpp"
#include "mpcjoin/local_join.hpp"

namespace mpcjoin {

namespace {

struct RhCtx {
  const AlgoConfig& cfg;
  JoinStats& st;
};

bool has(const std::vector<AttrId>& v, AttrId x) { return std::find(v.begin(), v.end(), x) != v.end(); }

std::vector<AttrId> active_attrs(const DRel& r, const std::vector<AttrId>& fixed) {
  std::vector<AttrId> a;
  for (AttrId x : r.schema)
    if (!has(fixed, x)) a.push_back(x);
  std::sort(a.begin(), a.end());
  return a;
}

void local_emit(const std::vector<DRel>& rels, int part, int server, EmitSink& sink) {
  std::vector<LocalRel> lr;
  for (auto& r : rels) lr.push_back({&r.schema, &r.parts[part]});
  size_t k = lr.size();
  local_join(lr, [&](const Frag* f) { sink.emit(server, f, k); });
}

// Stores emitted results per server of a template group, flattened over `schema`.
class Collect : public EmitSink {
 public:
  Collect(std::vector<AttrId> schema, int n, Semiring sr) : schema(std::move(schema)), rows(n), w(n), sr_(sr) {}
  void emit(int server, const Frag* frags, size_t k) override {
    for (AttrId x : schema) {
      Value v;
      if (!frag_value(frags, k, x, v)) fail(Err::Internal, "r_hierarchical_join: incomplete component result");
      rows[server].push_back(v);
    }
    Weight acc = sr_.one();
    for (size_t i = 0; i < k; ++i) acc = sr_.times(acc, frags[i].w);
    w[server].push_back(acc);
  }
  std::vector<AttrId> schema;
  std::vector<std::vector<Value>> rows;
  std::vector<std::vector<Weight>> w;

 private:
  Semiring sr_;
};

Weight encode_range(std::int64_t lo, std::int64_t width) { return -1 - ((lo << 31) | width); }
void decode_range(Weight e, std::int64_t& lo, std::int64_t& width) {
  std::int64_t v = -1 - e;
  lo = v >> 31;
  width = v & ((std::int64_t{1} << 31) - 1);
}

std::vector<DRel> slice(const std::vector<DRel>& rels, int lo, int w) {
  std::vector<DRel> out;
  for (auto& r : rels) {
    DRel d = r;
    d.parts.assign(r.parts.begin() + lo, r.parts.begin() + lo + w);
    out.push_back(std::move(d));
  }
  return out;
}

// `target` is the load the caller planned for this sub-instance (0 at the top).
void rh_solve(Group& G, std::vector<DRel> rels, const std::vector<AttrId>& fixed, EmitSink& sink, RhCtx& cx, double target);

// One component: x lies in every relation. Light x-values are packed onto single
// servers, heavy ones get a private range of servers and recurse.
void case_one(Group& G, std::vector<DRel> rels, const std::vector<AttrId>& fixed, EmitSink& sink, RhCtx& cx, double target) {
  int n = G.n();
  int m = static_cast<int>(rels.size());
  if (m > 16) fail(Err::TooLarge, "r_hierarchical_join: too many relations");
  AttrId x = -1;
  for (AttrId a : active_attrs(rels[0], fixed)) {
    bool all = std::all_of(rels.begin(), rels.end(), [&](const DRel& r) { return has(r.schema, a); });
    if (all) {
      x = a;
      break;
    }
  }
  if (x < 0) fail(Err::Internal, "r_hierarchical_join: component without a root attribute");
  Semiring cnt_sr = Semiring::counting();
  std::uint64_t salt = G.salt();
  int subsets = 1 << m;

  // |Q_x(R_a, S)| for every a and every nonempty S, all keyed at home(a).
  std::vector<KeyedTable> cnt(subsets);
  {
    Parallel par(G);
    for (int S = 1; S < subsets; ++S) {
      par.restart();
      std::vector<DRel> sub;
      for (int i = 0; i < m; ++i)
        if (S >> i & 1) sub.push_back(rels[i]);
      cnt[S] = fold_join(G, std::move(sub), {x}, cnt_sr, false, salt);
      par.join_self();
    }
    par.finish();
  }
  std::vector<double> tot(subsets, 0);
  {
    Parallel par(G);
    for (int S = 1; S < subsets; ++S) {
      par.restart();
      std::vector<Weight> loc(n, 0);
      for (int s = 0; s < n; ++s)
        for (auto& [k, v] : cnt[S].at[s]) loc[s] += v;
      tot[S] = static_cast<double>(all_reduce_sum(G, loc));
      par.join_self();
    }
    par.finish();
  }
  double in = 0;
  for (int i = 0; i < m; ++i) in += tot[1 << i];
  double linst = 0;
  for (int S = 1; S < subsets; ++S)
    linst = std::max(linst, std::pow(tot[S] / n, 1.0 / popcount(static_cast<Mask>(S))));
  double L = std::max(1.0, in / n + linst);
  if (target > 0) L = std::min(L, target);

  // Per a at its home: IN_a, heavy demand or packing weight.
  Dist<PackItem> light(n);
  std::vector<std::vector<std::pair<Key, std::int64_t>>> heavy(n);
  std::vector<KeyMap<Weight>> in_a(n);
  for (int h = 0; h < n; ++h) {
    for (int i = 0; i < m; ++i)
      for (auto& [k, v] : cnt[1 << i].at[h]) in_a[h][k] += v;
    std::vector<Key> keys;
    for (auto& [k, v] : in_a[h]) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    for (auto& k : keys) {
      double ia = static_cast<double>(in_a[h][k]);
      if (ia <= L) {
        light[h].push_back(PackItem{k[0], ia / L});
        continue;
      }
      std::int64_t pa = 1;
      for (int S = 1; S < subsets; ++S) {
        auto it = cnt[S].at[h].find(k);
        if (it == cnt[S].at[h].end()) continue;
        double need = std::ceil(static_cast<double>(it->second) / std::pow(L, popcount(static_cast<Mask>(S))));
        pa = std::max(pa, static_cast<std::int64_t>(need));
      }
      heavy[h].push_back({k, pa});
    }
  }
  auto packed = parallel_packing(G, light);
  std::vector<Weight> max_grp(n, -1), dem(n, 0), nheavy(n, 0);
  for (int h = 0; h < n; ++h) {
    for (auto& r : packed[h]) max_grp[h] = std::max<Weight>(max_grp[h], static_cast<Weight>(r.group));
    for (auto& [k, pa] : heavy[h]) dem[h] += pa, ++nheavy[h];
  }
  Weight groups = 0, total_dem = 0, n_heavy = 0;
  {
    Parallel par(G);
    groups = std::max<Weight>(0, all_reduce_max(G, max_grp) + 1);
    par.join_self();
    par.restart();
    total_dem = all_reduce_sum(G, dem);
    par.join_self();
    par.restart();
    n_heavy = all_reduce_sum(G, nheavy);
    par.join_self();
    par.finish();
  }
  std::int64_t budget = static_cast<std::int64_t>(cx.cfg.c_srv) * n;
  double f = 1;
  if (groups + total_dem > budget) {
    double room = static_cast<double>(budget - groups - n_heavy);
    if (room < 0) fail(Err::Internal, "r_hierarchical_join: server budget exceeded before rescaling");
    f = total_dem > n_heavy ? room / static_cast<double>(total_dem - n_heavy) : 0;
  }
  Dist<std::pair<Value, std::int64_t>> alloc_in(n);
  std::int64_t used = groups;
  for (int h = 0; h < n; ++h)
    for (auto& [k, pa] : heavy[h]) {
      std::int64_t p2 = 1 + static_cast<std::int64_t>(std::floor(static_cast<double>(pa - 1) * f));
      alloc_in[h].push_back({k[0], p2});
      used += p2;
    }
  if (used > budget) fail(Err::Internal, "r_hierarchical_join: server budget exceeded");
  cx.st.max_virtual_servers = std::max<int>(cx.st.max_virtual_servers, static_cast<int>(used));
  auto alloc = server_allocation(G, alloc_in);

  // Destination table at home(a): group id for light values, encoded range for heavy ones.
  KeyedTable dest;
  dest.salt = salt;
  dest.at.resize(n);
  for (int h = 0; h < n; ++h)
    for (auto& r : packed[h]) dest.at[h][Key{r.id}] = static_cast<Weight>(r.group);
  {
    Round r(G);
    Mailbox<KV> mb(r);
    for (int s = 0; s < n; ++s)
      for (auto& a : alloc[s]) {
        Key k{a.j};
        mb.put(s, home_of(k, salt, n), KV{k, encode_range(a.range.lo + groups, a.range.width())});
      }
    auto got = mb.deliver();
    for (int h = 0; h < n; ++h)
      for (auto& [k, v] : got[h]) dest.at[h][k] = v;
  }
  Dist<Key> want(n);
  for (int s = 0; s < n; ++s) {
    std::vector<Key> ks;
    for (auto& r : rels) {
      int c = r.col(x);
      for (size_t i = 0; i < r.parts[s].size(); ++i) ks.push_back(Key{r.row(s, i)[c]});
    }
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    want[s] = std::move(ks);
  }
  auto where = lookup(G, dest, want);

  // Route into the extended group of `budget` virtual servers.
  Group E = G.sub(0, static_cast<int>(budget));
  std::vector<DRel> routed;
  std::uint64_t hsalt = G.salt();
  {
    Round r(E);
    std::vector<RowMail> mails;
    mails.reserve(rels.size());
    for (auto& rel : rels) mails.emplace_back(r, rel.arity());
    for (size_t ri = 0; ri < rels.size(); ++ri) {
      const DRel& rel = rels[ri];
      int c = rel.col(x);
      for (int s = 0; s < n; ++s)
        for (size_t i = 0; i < rel.parts[s].size(); ++i) {
          const Value* row = rel.row(s, i);
          auto it = where[s].find(Key{row[c]});
          if (it == where[s].end()) fail(Err::Internal, "r_hierarchical_join: value without destination");
          std::int64_t d;
          if (it->second >= 0) {
            d = it->second;
          } else {
            std::int64_t lo, w;
            decode_range(it->second, lo, w);
            d = lo + static_cast<std::int64_t>(hash_row(row, rel.arity(), hsalt) % static_cast<std::uint64_t>(w));
          }
          mails[ri].put(s, static_cast<int>(d), row, rel.parts[s].w[i], rel.units);
        }
    }
    for (size_t ri = 0; ri < rels.size(); ++ri) {
      DRel d = rels[ri].empty_like();
      d.parts = mails[ri].deliver();
      routed.push_back(std::move(d));
    }
  }
  G.set_round(E.round());

  for (int v = 0; v < groups; ++v) local_emit(routed, v, v % n, sink);

  std::vector<std::pair<std::int64_t, std::int64_t>> ranges;
  for (auto& mp : dest.at)
    for (auto& [k, e] : mp)
      if (e < 0) {
        std::int64_t lo, w;
        decode_range(e, lo, w);
        ranges.push_back({lo, w});
      }
  std::sort(ranges.begin(), ranges.end());
  std::vector<AttrId> fixed2 = fixed;
  fixed2.push_back(x);
  int start = G.round(), end = G.round();
  for (auto [lo, w] : ranges) {
    Group sub = E.sub(static_cast<int>(lo), static_cast<int>(w));
    sub.set_round(start);
    OffsetSink os(sink, static_cast<int>(lo), n);
    rh_solve(sub, slice(routed, static_cast<int>(lo), static_cast<int>(w)), fixed2, os, cx, L);
    end = std::max(end, sub.round());
  }
  G.set_round(end);
}

// Several components: a p_1 x ... x p_k server grid; component i runs on the
// template group whose virtual server j is every cell with coordinate i equal to j.
void case_two(Group& G, std::vector<DRel> rels, const std::vector<std::vector<int>>& comps, const std::vector<AttrId>& fixed,
              EmitSink& sink, RhCtx& cx, double target) {
  int n = G.n();
  int k = static_cast<int>(comps.size());
  Semiring cnt_sr = Semiring::counting();
  std::vector<std::vector<double>> tot(k);
  {
    std::vector<std::vector<KeyedTable>> tables(k);
    Parallel par(G);
    for (int i = 0; i < k; ++i) {
      int mi = static_cast<int>(comps[i].size());
      if (mi > 16) fail(Err::TooLarge, "r_hierarchical_join: too many relations");
      tables[i].resize(1 << mi);
      for (int S = 1; S < (1 << mi); ++S) {
        par.restart();
        std::vector<DRel> sub;
        for (int j = 0; j < mi; ++j)
          if (S >> j & 1) sub.push_back(rels[comps[i][j]]);
        tables[i][S] = fold_join(G, std::move(sub), {}, cnt_sr, false, G.salt());
        par.join_self();
      }
    }
    par.finish();
    // Every count goes from its home to all servers.
    Round r(G);
    Mailbox<Weight> mb(r);
    for (int i = 0; i < k; ++i) {
      tot[i].assign(tables[i].size(), 0);
      for (size_t S = 1; S < tables[i].size(); ++S) {
        Weight c = tables[i][S].find(Key{}).value_or(0);
        mb.to_all(home_of(Key{}, tables[i][S].salt, n), c);
        tot[i][S] = static_cast<double>(c);
      }
    }
    mb.deliver();
  }
  std::vector<double> in_i(k, 0);
  double in = 0;
  for (int i = 0; i < k; ++i) {
    for (size_t j = 0; j < comps[i].size(); ++j) in_i[i] += tot[i][1u << j];
    in += in_i[i];
  }
  // L_instance over all S: |Q(R,S)| is the product over components of their parts.
  double linst = 0;
  std::vector<size_t> choice(k, 0);
  while (true) {
    size_t i = 0;
    while (i < static_cast<size_t>(k) && ++choice[i] == tot[i].size()) choice[i++] = 0;
    if (i == static_cast<size_t>(k)) break;
    double logq = 0;
    int sz = 0;
    bool zero = false;
    for (int c = 0; c < k; ++c) {
      if (choice[c] == 0) continue;
      if (tot[c][choice[c]] <= 0) zero = true;
      else logq += std::log(tot[c][choice[c]]);
      sz += popcount(static_cast<Mask>(choice[c]));
    }
    if (!zero && sz > 0) linst = std::max(linst, std::exp((logq - std::log(static_cast<double>(n))) / sz));
  }
  double L = std::max(1.0, in / n + linst);
  if (target > 0) L = std::min(L, target);
  std::vector<std::int64_t> p(k, 1);
  for (int i = 0; i < k; ++i) {
    if (in_i[i] <= L) continue;
    for (size_t S = 1; S < tot[i].size(); ++S) {
      double need = std::ceil(tot[i][S] / std::pow(L, popcount(static_cast<Mask>(S))));
      p[i] = std::max(p[i], static_cast<std::int64_t>(need));
    }
  }
  std::int64_t budget = static_cast<std::int64_t>(cx.cfg.c_srv) * n;
  auto scaled = [&](double f) {
    std::vector<std::int64_t> q(k);
    for (int i = 0; i < k; ++i) q[i] = 1 + static_cast<std::int64_t>(std::floor(static_cast<double>(p[i] - 1) * f));
    return q;
  };
  auto product = [&](const std::vector<std::int64_t>& q) {
    double pr = 1;
    for (auto v : q) pr *= static_cast<double>(v);
    return pr;
  };
  if (product(p) > static_cast<double>(budget)) {
    double lo = 0, hi = 1;
    for (int it = 0; it < 60; ++it) {
      double mid = (lo + hi) / 2;
      (product(scaled(mid)) <= static_cast<double>(budget) ? lo : hi) = mid;
    }
    p = scaled(lo);
  }
  std::int64_t C = static_cast<std::int64_t>(product(p));
  if (C > budget) fail(Err::Internal, "r_hierarchical_join: server budget exceeded");
  cx.st.max_virtual_servers = std::max<int>(cx.st.max_virtual_servers, static_cast<int>(C));
  std::vector<std::int64_t> stride(k, 1);
  for (int i = 1; i < k; ++i) stride[i] = stride[i - 1] * p[i - 1];
  auto coord = [&](std::int64_t cell, int i) { return static_cast<int>((cell / stride[i]) % p[i]); };

  Group cells = G.sub(0, static_cast<int>(C));
  std::vector<std::unique_ptr<Collect>> coll;
  int start = G.round(), end = G.round();
  for (int i = 0; i < k; ++i) {
    std::vector<std::vector<int>> members(p[i]);
    for (std::int64_t c = 0; c < C; ++c) members[coord(c, i)].push_back(static_cast<int>(c));
    Group T = cells.replicated(members);
    T.set_round(start);
    std::vector<DRel> mine;
    std::uint64_t hsalt = G.salt();
    {
      Round r(T);
      for (int ri : comps[i]) {
        const DRel& rel = rels[ri];
        RowMail mb(r, rel.arity());
        for (int s = 0; s < n; ++s)
          for (size_t j = 0; j < rel.parts[s].size(); ++j) {
            const Value* row = rel.row(s, j);
            int d = static_cast<int>(hash_row(row, rel.arity(), hsalt) % static_cast<std::uint64_t>(p[i]));
            mb.put(s % T.n(), d, row, rel.parts[s].w[j], rel.units);
          }
        DRel d = rel.empty_like();
        d.parts = mb.deliver();
        mine.push_back(std::move(d));
      }
    }
    std::vector<AttrId> u;
    for (auto& r : mine)
      for (AttrId x : r.schema)
        if (!has(u, x)) u.push_back(x);
    std::sort(u.begin(), u.end());
    coll.push_back(std::make_unique<Collect>(u, static_cast<int>(p[i]), cx.cfg.sr));
    rh_solve(T, std::move(mine), fixed, *coll.back(), cx, L);
    end = std::max(end, T.round());
  }
  G.set_round(end);

  // Each cell emits the product of the component results it holds.
  std::vector<Frag> frags(k);
  std::vector<size_t> idx(k);
  for (std::int64_t c = 0; c < C; ++c) {
    std::vector<int> at(k);
    bool empty = false;
    for (int i = 0; i < k; ++i) {
      at[i] = coord(c, i);
      empty = empty || coll[i]->w[at[i]].empty();
    }
    if (empty) continue;
    std::fill(idx.begin(), idx.end(), 0);
    while (true) {
      for (int i = 0; i < k; ++i) {
        const Collect& cl = *coll[i];
        frags[i] = Frag{&cl.schema, cl.rows[at[i]].data() + idx[i] * cl.schema.size(), cl.w[at[i]][idx[i]]};
      }
      sink.emit(static_cast<int>(c % n), frags.data(), static_cast<size_t>(k));
      int i = 0;
      while (i < k && ++idx[i] == coll[i]->w[at[i]].size()) idx[i++] = 0;
      if (i == k) break;
    }
  }
}

void rh_solve(Group& G, std::vector<DRel> rels, const std::vector<AttrId>& fixed, EmitSink& sink, RhCtx& cx, double target) {
  if (rels.empty()) return;
  int n = G.n();
  if (n == 1) {
    local_emit(rels, 0, 0, sink);
    return;
  }
  std::vector<DRel> act, cst;
  for (auto& r : rels) (active_attrs(r, fixed).empty() ? cst : act).push_back(std::move(r));
  if (!cst.empty()) {
    // Relations with every attribute fixed hold at most one tuple; every server gets it.
    struct CT {
      int rel;
      std::vector<Value> row;
      Weight w;
    };
    Dist<CT> got;
    {
      Round r(G);
      Mailbox<CT> mb(r);
      for (size_t ci = 0; ci < cst.size(); ++ci)
        for (int s = 0; s < n; ++s)
          for (size_t i = 0; i < cst[ci].parts[s].size(); ++i) {
            const Value* row = cst[ci].row(s, i);
            mb.to_all(s, CT{static_cast<int>(ci), std::vector<Value>(row, row + cst[ci].arity()), cst[ci].parts[s].w[i]},
                      cst[ci].units);
          }
      got = mb.deliver();
    }
    std::vector<std::optional<CT>> val(cst.size());
    for (auto& ct : got[0])
      if (!val[ct.rel]) val[ct.rel] = ct;
    for (auto& v : val)
      if (!v) return;
    std::vector<Frag> extra;
    for (size_t ci = 0; ci < cst.size(); ++ci) extra.push_back(Frag{&cst[ci].schema, val[ci]->row.data(), val[ci]->w});
    ConstSink cs(sink, extra);
    if (act.empty()) {
      cs.emit(0, nullptr, 0);
      return;
    }
    rh_solve(G, std::move(act), fixed, cs, cx, target);
    return;
  }
  if (act.size() == 1) {
    const DRel& r = act[0];
    for (int s = 0; s < n; ++s)
      for (size_t i = 0; i < r.parts[s].size(); ++i) {
        Frag f{&r.schema, r.row(s, i), r.parts[s].w[i]};
        sink.emit(s, &f, 1);
      }
    return;
  }
  // Components under shared active attributes.
  int m = static_cast<int>(act.size());
  std::vector<std::vector<AttrId>> aa(m);
  for (int i = 0; i < m; ++i) aa[i] = active_attrs(act[i], fixed);
  std::vector<int> comp(m, -1);
  std::vector<std::vector<int>> comps;
  for (int i = 0; i < m; ++i) {
    if (comp[i] >= 0) continue;
    comps.push_back({});
    std::vector<int> stack{i};
    comp[i] = static_cast<int>(comps.size()) - 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      comps.back().push_back(u);
      for (int v = 0; v < m; ++v)
        if (comp[v] < 0 && !shared_attrs(aa[u], aa[v]).empty()) comp[v] = comp[i], stack.push_back(v);
    }
    std::sort(comps.back().begin(), comps.back().end());
  }
  if (comps.size() == 1) case_one(G, std::move(act), fixed, sink, cx, target);
  else case_two(G, std::move(act), comps, fixed, sink, cx, target);
}

}  // namespace

JoinStats r_hierarchical_join_schemas(Group& g, std::vector<DRel> rels, EmitSink& sink, const AlgoConfig& cfg) {
  JoinStats st;
  if (rels.empty()) return st;
  std::vector<std::vector<AttrId>> schemas;
  for (auto& r : rels) schemas.push_back(r.schema);
  SchemaQuery sq = schema_query(schemas);
  if (!at_most_r_hierarchical(classify(sq.q).cls)) fail(Err::NotRHierarchical, "query is not r-hierarchical");
  JoinTree t = build_join_tree(sq.q);
  remove_dangling(g, t, rels);
  for (auto& r : rels) st.in_after_dangling += r.total();

  // Contained relations are attached to a containing tuple: ⊗ the annotation, one more unit.
  Reduction red = reduce_edges(sq.q);
  {
    Parallel par(g);
    for (int e = 0; e < sq.q.m(); ++e) {
      if (red.witness[e] < 0) continue;
      par.restart();
      fold_into(g, rels[e], rels[e].schema, rels[red.witness[e]], cfg.sr);
      rels[red.witness[e]].units += rels[e].units;
      par.join_self();
    }
    par.finish();
  }
  std::vector<DRel> kept;
  for (int e : red.kept) kept.push_back(std::move(rels[e]));
  CountingSink counted(sink);
  RhCtx cx{cfg, st};
  rh_solve(g, std::move(kept), {}, counted, cx, 0);
  st.out = counted.count();
  return st;
}

JoinStats r_hierarchical_join(Group& g, const Query& q, std::vector<DRel> rels, EmitSink& sink, const AlgoConfig& cfg) {
  if (!at_most_r_hierarchical(classify(q).cls)) fail(Err::NotRHierarchical, "query is not r-hierarchical");
  return r_hierarchical_join_schemas(g, std::move(rels), sink, cfg);
}

}  // namespace mpcjoin
