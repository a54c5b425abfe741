#include "mpcjoin/primitives.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "mpcjoin/errors.hpp"

namespace mpcjoin {

std::vector<AttrId> shared_attrs(const std::vector<AttrId>& a, const std::vector<AttrId>& b) {
  std::vector<AttrId> out;
  for (AttrId x : a)
    if (std::find(b.begin(), b.end(), x) != b.end()) out.push_back(x);
  std::sort(out.begin(), out.end());
  return out;
}

KeyedTable sum_by_key(Group& g, const Dist<KV>& in, const Combine& plus, std::uint64_t salt) {
  int n = g.n();
  KeyedTable t;
  t.salt = salt;
  t.at.resize(n);
  Round r(g);
  Mailbox<KV> mb(r);
  for (int s = 0; s < n; ++s) {
    KeyMap<Weight> local;
    std::vector<const Key*> order;
    for (auto& [k, w] : in[s]) {
      auto [it, fresh] = local.try_emplace(k, w);
      if (fresh)
        order.push_back(&it->first);
      else
        it->second = plus(it->second, w);
    }
    for (const Key* k : order) mb.put(s, home_of(*k, salt, n), KV{*k, local.at(*k)});
  }
  auto got = mb.deliver();
  for (int d = 0; d < n; ++d)
    for (auto& [k, w] : got[d]) {
      auto [it, fresh] = t.at[d].try_emplace(k, w);
      if (!fresh) it->second = plus(it->second, w);
    }
  return t;
}

KeyedTable count_by(Group& g, const DRel& r, const std::vector<AttrId>& attrs, std::uint64_t salt) {
  auto cols = r.cols(attrs);
  Dist<KV> in(g.n());
  for (int s = 0; s < g.n(); ++s) {
    KeyMap<Weight> local;
    for (size_t i = 0; i < r.parts[s].size(); ++i) ++local[key_of(r.row(s, i), cols)];
    for (auto& kv : local) in[s].push_back(kv);
  }
  return sum_by_key(g, in, plus_i64, salt);
}

std::vector<KeyMap<Weight>> lookup(Group& g, const KeyedTable& t, const Dist<Key>& wanted) {
  int n = g.n();
  Dist<std::pair<Key, int>> req;
  {
    Round r(g);
    Mailbox<std::pair<Key, int>> mb(r);
    for (int s = 0; s < n; ++s) {
      std::unordered_set<Key, KeyHash> seen;
      for (auto& k : wanted[s])
        if (seen.insert(k).second) mb.put(s, home_of(k, t.salt, n), {k, s});
    }
    req = mb.deliver();
  }
  std::vector<KeyMap<Weight>> out(n);
  Round r(g);
  Mailbox<KV> mb(r);
  for (int h = 0; h < n; ++h)
    for (auto& [k, src] : req[h]) {
      auto it = t.at[h].find(k);
      if (it != t.at[h].end()) mb.put(h, src, KV{k, it->second});
    }
  auto got = mb.deliver();
  for (int s = 0; s < n; ++s)
    for (auto& [k, w] : got[s]) out[s][k] = w;
  return out;
}

namespace {
struct SjMsg {
  int spec;
  bool request;
  Key key;
  int origin;
};
}  // namespace

void batch_semijoin(Group& g, std::vector<DRel>& rels, const std::vector<SemiJoinSpec>& specs) {
  if (specs.empty()) return;
  int n = g.n();
  std::uint64_t salt = g.salt();
  std::vector<std::vector<AttrId>> attrs(specs.size());
  std::vector<std::vector<int>> tcols(specs.size()), scols(specs.size());
  for (size_t i = 0; i < specs.size(); ++i) {
    attrs[i] = shared_attrs(rels[specs[i].target].schema, rels[specs[i].source].schema);
    tcols[i] = rels[specs[i].target].cols(attrs[i]);
    scols[i] = rels[specs[i].source].cols(attrs[i]);
  }
  auto home = [&](int spec, const Key& k) { return home_of(k, salt ^ mix64(static_cast<std::uint64_t>(spec) + 77), n); };

  Dist<SjMsg> got;
  {
    Round r(g);
    Mailbox<SjMsg> mb(r);
    for (size_t i = 0; i < specs.size(); ++i) {
      const DRel& src = rels[specs[i].source];
      const DRel& tgt = rels[specs[i].target];
      for (int s = 0; s < n; ++s) {
        std::unordered_set<Key, KeyHash> seen;
        for (size_t t = 0; t < src.parts[s].size(); ++t) {
          Key k = key_of(src.row(s, t), scols[i]);
          if (seen.insert(k).second) mb.put(s, home(static_cast<int>(i), k), SjMsg{static_cast<int>(i), false, k, s});
        }
        seen.clear();
        for (size_t t = 0; t < tgt.parts[s].size(); ++t) {
          Key k = key_of(tgt.row(s, t), tcols[i]);
          if (seen.insert(k).second) mb.put(s, home(static_cast<int>(i), k), SjMsg{static_cast<int>(i), true, k, s});
        }
      }
    }
    got = mb.deliver();
  }
  Dist<std::pair<int, Key>> ok;
  {
    Round r(g);
    Mailbox<std::pair<int, Key>> mb(r);
    for (int h = 0; h < n; ++h) {
      std::vector<std::unordered_set<Key, KeyHash>> present(specs.size());
      for (auto& m : got[h])
        if (!m.request) present[m.spec].insert(m.key);
      for (auto& m : got[h])
        if (m.request && present[m.spec].count(m.key)) mb.put(h, m.origin, {m.spec, m.key});
    }
    ok = mb.deliver();
  }
  for (int s = 0; s < n; ++s) {
    std::vector<std::unordered_set<Key, KeyHash>> pass(specs.size());
    for (auto& [sp, k] : ok[s]) pass[sp].insert(k);
    std::vector<std::vector<int>> by_target(rels.size());
    for (size_t i = 0; i < specs.size(); ++i) by_target[specs[i].target].push_back(static_cast<int>(i));
    for (size_t t = 0; t < rels.size(); ++t) {
      if (by_target[t].empty()) continue;
      DRel& rel = rels[t];
      Part kept;
      for (size_t i = 0; i < rel.parts[s].size(); ++i) {
        const Value* row = rel.row(s, i);
        bool keep = true;
        for (int sp : by_target[t])
          if (!pass[sp].count(key_of(row, tcols[sp]))) {
            keep = false;
            break;
          }
        if (keep) kept.append(row, rel.arity(), rel.parts[s].w[i]);
      }
      rel.parts[s] = std::move(kept);
    }
  }
}

DRel semi_join(Group& g, const DRel& r1, const DRel& r2) {
  std::vector<DRel> rels{r1, r2};
  batch_semijoin(g, rels, {{0, 1}});
  return std::move(rels[0]);
}

void remove_dangling(Group& g, const JoinTree& t, std::vector<DRel>& rels) {
  if (static_cast<int>(rels.size()) != t.size()) fail(Err::Internal, "remove_dangling: relation count mismatch");
  auto depth = t.depth();
  int h = t.height();
  for (int d = h; d >= 1; --d) {
    std::vector<SemiJoinSpec> specs;
    for (int v = 0; v < t.size(); ++v)
      if (depth[v] == d) specs.push_back({t.parent[v], v});
    batch_semijoin(g, rels, specs);
  }
  for (int d = 1; d <= h; ++d) {
    std::vector<SemiJoinSpec> specs;
    for (int v = 0; v < t.size(); ++v)
      if (depth[v] == d) specs.push_back({v, t.parent[v]});
    batch_semijoin(g, rels, specs);
  }
}

namespace {
int block_size(int n) {
  int b = 1;
  while (b * b < n) ++b;
  return b;
}

// Round 1: every server sends its value to its block leader. Round 2: each leader
// sends its block's combined value to every server. Returns the per-block values.
template <class Op>
std::vector<Weight> block_reduce(Group& g, const std::vector<Weight>& per_server, Weight id, Op op) {
  int n = g.n(), b = block_size(n), nb = (n + b - 1) / b;
  std::vector<Weight> blocks(nb, id);
  if (n == 1) return {op(id, per_server[0])};
  {
    Round r(g);
    Mailbox<Weight> mb(r);
    for (int s = 0; s < n; ++s) mb.put(s, (s / b) * b, per_server[s]);
    auto got = mb.deliver();
    for (int k = 0; k < nb; ++k)
      for (Weight w : got[k * b]) blocks[k] = op(blocks[k], w);
  }
  Round r(g);
  Mailbox<Weight> mb(r);
  for (int k = 0; k < nb; ++k) mb.to_all(k * b, blocks[k]);
  mb.deliver();
  return blocks;
}
}  // namespace

std::vector<Weight> prefix_sums(Group& g, const std::vector<Weight>& per_server, Weight* total) {
  int n = g.n(), b = block_size(n), nb = (n + b - 1) / b;
  std::vector<Weight> blocks(nb, 0), out(n, 0);
  if (n == 1) {
    if (total) *total = per_server[0];
    return out;
  }
  {
    Round r(g);
    Mailbox<Weight> mb(r);
    for (int s = 0; s < n; ++s) mb.put(s, (s / b) * b, per_server[s]);
    auto got = mb.deliver();
    for (int k = 0; k < nb; ++k)
      for (Weight w : got[k * b]) blocks[k] += w;
  }
  // leaders send block totals everywhere and in-block offsets to their members
  Round r(g);
  Mailbox<Weight> mb(r);
  for (int k = 0; k < nb; ++k) {
    int lead = k * b;
    mb.to_all(lead, blocks[k]);
    Weight run = 0;
    for (int s = lead; s < std::min(n, lead + b); ++s) {
      mb.put(lead, s, run);
      run += per_server[s];
    }
  }
  mb.deliver();
  Weight before = 0;
  for (int k = 0; k < nb; ++k) {
    Weight run = before;
    for (int s = k * b; s < std::min(n, (k + 1) * b); ++s) {
      out[s] = run;
      run += per_server[s];
    }
    before += blocks[k];
  }
  if (total) *total = before;
  return out;
}

std::vector<Weight> all_gather(Group& g, const std::vector<Weight>& per_server) {
  int n = g.n();
  Round r(g);
  Mailbox<Weight> mb(r);
  for (int s = 0; s < n; ++s) mb.to_all(s, per_server[s]);
  mb.deliver();
  return per_server;
}

Weight all_reduce_sum(Group& g, const std::vector<Weight>& per_server) {
  Weight t = 0;
  for (Weight w : block_reduce(g, per_server, 0, [](Weight a, Weight c) { return a + c; })) t += w;
  return t;
}

Weight all_reduce_max(Group& g, const std::vector<Weight>& per_server) {
  Weight lo = std::numeric_limits<Weight>::min();
  Weight t = lo;
  for (Weight w : block_reduce(g, per_server, lo, [](Weight a, Weight c) { return std::max(a, c); })) t = std::max(t, w);
  return t;
}

namespace {
struct SItem {
  Value v;
  bool is_y;
};
struct SLess {
  bool operator()(const SItem& a, const SItem& b) const { return a.v != b.v ? a.v < b.v : (!a.is_y && b.is_y); }
};
}  // namespace

Dist<std::optional<Value>> multi_search(Group& g, const Dist<Value>& xs, const Dist<Value>& ys) {
  int n = g.n();
  Dist<SItem> in(n);
  for (int s = 0; s < n; ++s) {
    for (Value x : xs[s]) in[s].push_back({x, false});
    for (Value y : ys[s]) in[s].push_back({y, true});
  }
  SampleSort<SItem, SLess> ss(g, in, SLess{});
  ss.pick_splitters();
  using Item = Tagged<SItem>;
  Dist<Item> sorted;
  std::vector<std::optional<Value>> carry(n);
  {
    Round r(g);
    Mailbox<Item> mb(r);
    Mailbox<Value> side(r);
    for (int s = 0; s < n; ++s) {
      auto& loc = ss.local()[s];
      std::vector<int> dst(loc.size());
      for (size_t i = 0; i < loc.size(); ++i) {
        dst[i] = ss.dest(loc[i]);
        mb.put(s, dst[i], loc[i]);
      }
      std::optional<Value> last;
      size_t pos = 0;
      for (int j = 1; j < n; ++j) {
        while (pos < loc.size() && dst[pos] < j) {
          if (loc[pos].item.is_y) last = loc[pos].item.v;
          ++pos;
        }
        if (last) side.put(s, j, *last);
      }
    }
    sorted = ss.finish(mb.deliver());
    auto c = side.deliver();
    for (int j = 0; j < n; ++j)
      for (Value v : c[j])
        if (!carry[j] || v > *carry[j]) carry[j] = v;
  }
  Dist<std::optional<Value>> out(n);
  for (int s = 0; s < n; ++s) out[s].resize(xs[s].size());
  Round r(g);
  Mailbox<std::pair<std::uint32_t, std::optional<Value>>> mb(r);
  for (int s = 0; s < n; ++s) {
    std::optional<Value> cur = carry[s];
    for (auto& it : sorted[s]) {
      if (it.item.is_y)
        cur = it.item.v;
      else
        mb.put(s, it.origin, {it.idx, cur});
    }
  }
  auto back = mb.deliver();
  for (int s = 0; s < n; ++s)
    for (auto& [idx, v] : back[s]) out[s][idx] = v;
  return out;
}

namespace {
struct PairLess {
  bool operator()(const std::pair<Value, Value>& a, const std::pair<Value, Value>& b) const { return a < b; }
};
struct RunSummary {
  bool has = false;
  Value first = 0, last = 0;
  std::uint64_t last_run = 0;
  bool all_same = false;
};
}  // namespace

Dist<Numbered> multi_numbering(Group& g, const Dist<std::pair<Value, Value>>& pairs) {
  int n = g.n();
  auto sorted = sample_sort(g, pairs, PairLess{});
  std::vector<RunSummary> sum(n);
  for (int s = 0; s < n; ++s) {
    auto& v = sorted[s];
    if (v.empty()) continue;
    RunSummary& rs = sum[s];
    rs.has = true;
    rs.first = v.front().item.first;
    rs.last = v.back().item.first;
    rs.all_same = rs.first == rs.last;
    for (auto it = v.rbegin(); it != v.rend() && it->item.first == rs.last; ++it) ++rs.last_run;
  }
  std::vector<std::uint64_t> offset(n, 0);
  {
    Round r(g);
    Mailbox<RunSummary> mb(r);
    for (int s = 0; s < n; ++s)
      for (int d = s + 1; d < n; ++d)
        if (sum[s].has) mb.put(s, d, sum[s]);
    mb.deliver();
    // Server d now holds the summaries of all earlier servers.
    for (int d = 0; d < n; ++d) {
      if (!sum[d].has) continue;
      for (int i = d - 1; i >= 0; --i) {
        if (!sum[i].has) continue;
        if (sum[i].last != sum[d].first) break;
        offset[d] += sum[i].last_run;
        if (!sum[i].all_same) break;
      }
    }
  }
  Dist<Numbered> out(n);
  for (int s = 0; s < n; ++s) {
    std::uint64_t rank = 0;
    Value cur = 0;
    bool first = true;
    for (auto& it : sorted[s]) {
      if (first || it.item.first != cur) {
        rank = (first && sum[s].has) ? offset[s] : 0;
        cur = it.item.first;
        first = false;
      }
      ++rank;
      out[s].push_back({it.item.first, it.item.second, it.origin, it.idx, rank});
    }
  }
  return out;
}

namespace {
struct DemandLess {
  bool operator()(const std::pair<Value, std::int64_t>& a, const std::pair<Value, std::int64_t>& b) const { return a.first < b.first; }
};
struct AllocSummary {
  bool has = false;
  Value first_j = 0;
  std::int64_t p_first = 0;
  Value last_j = 0;
  std::int64_t distinct_sum = 0;
};
}  // namespace

Dist<Allocated> server_allocation(Group& g, const Dist<std::pair<Value, std::int64_t>>& items) {
  int n = g.n();
  for (auto& v : items)
    for (auto& [j, d] : v)
      if (d < 1) fail(Err::ValueOutOfRange, "server demand must be at least 1");
  auto sorted = sample_sort(g, items, DemandLess{});
  std::vector<AllocSummary> sum(n);
  for (int s = 0; s < n; ++s) {
    auto& v = sorted[s];
    if (v.empty()) continue;
    AllocSummary& a = sum[s];
    a.has = true;
    a.first_j = v.front().item.first;
    a.p_first = v.front().item.second;
    a.last_j = v.back().item.first;
    for (size_t i = 0; i < v.size(); ++i)
      if (i == 0 || v[i].item.first != v[i - 1].item.first) a.distinct_sum += v[i].item.second;
  }
  std::vector<std::int64_t> base(n, 0);
  std::vector<bool> continues(n, false);
  {
    Round r(g);
    Mailbox<std::pair<int, AllocSummary>> mb(r);
    for (int s = 0; s < n; ++s)
      if (sum[s].has)
        for (int d = s + 1; d < n; ++d) mb.put(s, d, {s, sum[s]});
    auto got = mb.deliver();
    for (int d = 0; d < n; ++d) {
      if (!sum[d].has) continue;
      auto& v = got[d];
      std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      std::int64_t total = 0;
      const AllocSummary* prev = nullptr;
      for (auto& [src, a] : v) {
        total += a.distinct_sum;
        if (prev && prev->last_j == a.first_j) total -= a.p_first;
        prev = &a;
      }
      if (prev && prev->last_j == sum[d].first_j) {
        continues[d] = true;
        total -= sum[d].p_first;
      }
      base[d] = total;
    }
  }
  Dist<Allocated> out(n);
  for (int s = 0; s < n; ++s) {
    std::int64_t next = base[s];
    ServerRange cur;
    for (size_t i = 0; i < sorted[s].size(); ++i) {
      auto& it = sorted[s][i];
      if (i == 0 || it.item.first != sorted[s][i - 1].item.first) {
        cur.lo = next;
        cur.hi = next + it.item.second - 1;
        next = cur.hi + 1;
      }
      out[s].push_back({it.item.first, it.item.second, it.origin, it.idx, cur});
    }
  }
  return out;
}

int packing_levels(std::uint64_t in, int n) {
  std::uint64_t f = std::max<std::uint64_t>(2, (in + n - 1) / std::max(1, n));
  int levels = 0;
  std::uint64_t m = static_cast<std::uint64_t>(n);
  while (m > 1) {
    m = (m + f - 1) / f;
    ++levels;
  }
  return levels;
}

namespace {
struct Unit {
  std::uint64_t ref;
  double x;
};
// Groups local units; returns per-unit local group index, -1 for the leftover.
std::vector<int> local_grouping(const std::vector<Unit>& units, int& closed, double& leftover) {
  std::vector<int> grp(units.size(), -1);
  std::vector<size_t> open;
  double acc = 0;
  closed = 0;
  for (size_t i = 0; i < units.size(); ++i) {
    if (units[i].x > 0.5) {
      grp[i] = closed++;
      continue;
    }
    open.push_back(i);
    acc += units[i].x;
    if (acc >= 0.5) {
      for (size_t k : open) grp[k] = closed;
      ++closed;
      open.clear();
      acc = 0;
    }
  }
  leftover = open.empty() ? 0.0 : acc;
  return grp;
}
}  // namespace

Dist<PackResult> parallel_packing(Group& g, const Dist<PackItem>& items) {
  int n = g.n();
  std::vector<Weight> counts(n);
  for (int s = 0; s < n; ++s) {
    counts[s] = static_cast<Weight>(items[s].size());
    for (auto& it : items[s])
      if (!(it.x > 0.0 && it.x <= 1.0)) fail(Err::ValueOutOfRange, "packing value outside (0,1]");
  }
  std::uint64_t in = static_cast<std::uint64_t>(all_reduce_sum(g, counts));
  std::uint64_t f = std::max<std::uint64_t>(2, (in + n - 1) / n);

  struct Level {
    int servers;
    std::vector<std::vector<Unit>> units;
    std::vector<std::vector<int>> grp;
    std::vector<int> closed;
    std::vector<bool> has_left;
  };
  std::vector<Level> lv;
  Level l0;
  l0.servers = n;
  l0.units.resize(n);
  for (int s = 0; s < n; ++s) {
    for (size_t i = 0; i < items[s].size(); ++i) l0.units[s].push_back({i, items[s][i].x});
    std::sort(l0.units[s].begin(), l0.units[s].end(),
              [&](const Unit& a, const Unit& b) { return items[s][a.ref].id < items[s][b.ref].id; });
  }
  lv.push_back(std::move(l0));
  for (;;) {
    Level& cur = lv.back();
    cur.grp.resize(cur.servers);
    cur.closed.assign(cur.servers, 0);
    cur.has_left.assign(cur.servers, false);
    std::vector<double> left(cur.servers, 0);
    for (int s = 0; s < cur.servers; ++s) {
      double lo;
      cur.grp[s] = local_grouping(cur.units[s], cur.closed[s], lo);
      cur.has_left[s] = std::any_of(cur.grp[s].begin(), cur.grp[s].end(), [](int x) { return x < 0; });
      left[s] = lo;
    }
    if (cur.servers == 1) {
      if (cur.has_left[0]) cur.closed[0]++;  // the single group allowed below 1/2
      break;
    }
    Level nx;
    nx.servers = static_cast<int>((static_cast<std::uint64_t>(cur.servers) + f - 1) / f);
    nx.units.resize(nx.servers);
    Round r(g);
    Mailbox<Unit> mb(r);
    for (int s = 0; s < cur.servers; ++s)
      if (cur.has_left[s]) mb.put(s, static_cast<int>(s / f), Unit{static_cast<std::uint64_t>(s), left[s]});
    auto got = mb.deliver();
    for (int s = 0; s < nx.servers; ++s) {
      nx.units[s] = std::move(got[s]);
      std::sort(nx.units[s].begin(), nx.units[s].end(), [](const Unit& a, const Unit& b) { return a.ref < b.ref; });
    }
    lv.push_back(std::move(nx));
  }

  // Dense group ids: prefix over per-server closed counts across all levels.
  std::vector<Weight> per(n, 0);
  for (auto& l : lv)
    for (int s = 0; s < l.servers; ++s) per[s] += l.closed[s];
  auto base = prefix_sums(g, per);
  std::vector<std::vector<std::uint64_t>> first_id(lv.size());
  for (size_t k = 0; k < lv.size(); ++k) {
    first_id[k].resize(lv[k].servers);
    for (int s = 0; s < lv[k].servers; ++s) {
      std::uint64_t off = static_cast<std::uint64_t>(base[s]);
      for (size_t k2 = 0; k2 < k; ++k2)
        if (s < lv[k2].servers) off += static_cast<std::uint64_t>(lv[k2].closed[s]);
      first_id[k][s] = off;
    }
  }
  std::vector<std::vector<std::uint64_t>> left_id(lv.size());
  for (size_t k = 0; k < lv.size(); ++k) left_id[k].assign(lv[k].servers, 0);
  size_t top = lv.size() - 1;
  if (lv[top].has_left[0]) left_id[top][0] = first_id[top][0] + static_cast<std::uint64_t>(lv[top].closed[0] - 1);
  auto id_of = [&](size_t k, int s, size_t u) {
    int gi = lv[k].grp[s][u];
    return gi < 0 ? left_id[k][s] : first_id[k][s] + static_cast<std::uint64_t>(gi);
  };
  for (size_t k = top; k >= 1; --k) {
    Round r(g);
    Mailbox<std::uint64_t> mb(r);
    for (int s = 0; s < lv[k].servers; ++s)
      for (size_t u = 0; u < lv[k].units[s].size(); ++u) mb.put(s, static_cast<int>(lv[k].units[s][u].ref), id_of(k, s, u));
    auto got = mb.deliver();
    for (int c = 0; c < lv[k - 1].servers; ++c)
      if (!got[c].empty()) left_id[k - 1][c] = got[c].front();
  }
  Dist<PackResult> out(n);
  for (int s = 0; s < n; ++s)
    for (size_t u = 0; u < lv[0].units[s].size(); ++u) out[s].push_back({items[s][lv[0].units[s][u].ref].id, id_of(0, s, u)});
  return out;
}

}  // namespace mpcjoin
