#include "mpcjoin/aggregates.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "json.hpp"
#include "mpcjoin/errors.hpp"

namespace mpcjoin {

int GHD::root() const {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].parent < 0) return static_cast<int>(i);
  return -1;
}

std::vector<std::vector<int>> GHD::children() const {
  std::vector<std::vector<int>> ch(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].parent >= 0) ch[nodes[i].parent].push_back(static_cast<int>(i));
  return ch;
}

std::vector<int> GHD::depth() const {
  std::vector<int> d(nodes.size(), -1);
  std::function<int(int, int)> rec = [&](int v, int guard) -> int {
    if (d[v] >= 0) return d[v];
    if (guard > static_cast<int>(nodes.size())) fail(Err::InvalidGHD, "GHD parent links contain a cycle");
    return d[v] = nodes[v].parent < 0 ? 0 : rec(nodes[v].parent, guard + 1) + 1;
  };
  for (size_t i = 0; i < nodes.size(); ++i) rec(static_cast<int>(i), 0);
  return d;
}

namespace {
bool contains(const std::vector<AttrId>& big, const std::vector<AttrId>& small) {
  for (AttrId x : small)
    if (std::find(big.begin(), big.end(), x) == big.end()) return false;
  return true;
}
std::vector<AttrId> sorted_unique(std::vector<AttrId> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}
std::vector<AttrId> minus(const std::vector<AttrId>& a, const std::vector<AttrId>& b) {
  std::vector<AttrId> out;
  for (AttrId x : a)
    if (std::find(b.begin(), b.end(), x) == b.end()) out.push_back(x);
  return out;
}
}  // namespace

std::vector<GhdViolation> validate_ghd(const Query& q, const std::vector<AttrId>& y, const GHD& t) {
  std::vector<GhdViolation> v;
  int k = static_cast<int>(t.nodes.size());
  int roots = 0;
  for (int i = 0; i < k; ++i) {
    int p = t.nodes[i].parent;
    if (p < 0) ++roots;
    if (p >= k || p == i) v.push_back({"tree", "node " + std::to_string(i) + " has invalid parent"});
  }
  if (k == 0 || roots != 1) {
    v.push_back({"tree", "expected exactly one root"});
    return v;
  }
  // cycle check
  for (int i = 0; i < k; ++i) {
    int cur = i, steps = 0;
    while (cur >= 0 && steps <= k) cur = t.nodes[cur].parent, ++steps;
    if (steps > k) {
      v.push_back({"tree", "parent links contain a cycle"});
      return v;
    }
  }
  for (AttrId x = 0; x < q.n(); ++x) {
    int cnt = 0, links = 0;
    for (int i = 0; i < k; ++i) {
      const auto& a = t.nodes[i].attrs;
      if (std::find(a.begin(), a.end(), x) == a.end()) continue;
      ++cnt;
      int p = t.nodes[i].parent;
      if (p >= 0 && std::find(t.nodes[p].attrs.begin(), t.nodes[p].attrs.end(), x) != t.nodes[p].attrs.end()) ++links;
    }
    if (cnt > 0 && cnt - links != 1) v.push_back({"coherence", "attribute " + q.attr_name(x)});
  }
  for (int e = 0; e < q.m(); ++e) {
    bool ok = false;
    for (auto& nd : t.nodes) ok = ok || contains(nd.attrs, q.edge(e).attrs);
    if (!ok) v.push_back({"edge-coverage", "edge " + q.edge(e).name});
  }
  for (int i = 0; i < k; ++i) {
    bool ok = false;
    for (int e = 0; e < q.m(); ++e) ok = ok || contains(q.edge(e).attrs, t.nodes[i].attrs);
    if (!ok) v.push_back({"width-1", "node " + std::to_string(i)});
  }
  std::set<int> tp(t.connex.begin(), t.connex.end());
  for (int c : tp)
    if (c < 0 || c >= k) v.push_back({"connex", "unknown node " + std::to_string(c)});
  if (!tp.count(t.root())) v.push_back({"connex", "T' does not contain the root"});
  for (int c : tp)
    if (c >= 0 && c < k && c != t.root() && !tp.count(t.nodes[c].parent))
      v.push_back({"connex", "T' not connected at node " + std::to_string(c)});
  std::vector<AttrId> un;
  for (int c : tp)
    if (c >= 0 && c < k) un.insert(un.end(), t.nodes[c].attrs.begin(), t.nodes[c].attrs.end());
  if (sorted_unique(un) != sorted_unique(y)) v.push_back({"free-connex", "union of T' differs from the output attributes"});
  return v;
}

GHD ghd_from_json(const Query& q, const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    fail(Err::ParseError, std::string("GHD json: ") + e.what());
  }
  GHD t;
  std::map<long long, int> idx;
  const auto& nodes = j.at("nodes");
  for (size_t i = 0; i < nodes.size(); ++i) idx[nodes[i].at("id").get<long long>()] = static_cast<int>(i);
  t.nodes.resize(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) {
    for (auto& a : nodes[i].at("attrs")) t.nodes[i].attrs.push_back(q.attr_id(a.get<std::string>()));
    t.nodes[i].attrs = sorted_unique(t.nodes[i].attrs);
    const auto& p = nodes[i].at("parent");
    if (p.is_null() || p.get<long long>() < 0) {
      t.nodes[i].parent = -1;
    } else {
      auto it = idx.find(p.get<long long>());
      if (it == idx.end()) fail(Err::InvalidGHD, "unknown parent id");
      t.nodes[i].parent = it->second;
    }
  }
  for (auto& c : j.at("connex")) {
    auto it = idx.find(c.get<long long>());
    if (it == idx.end()) fail(Err::InvalidGHD, "unknown connex id");
    t.connex.push_back(it->second);
  }
  return t;
}

std::string ghd_to_json(const Query& q, const GHD& t) {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (size_t i = 0; i < t.nodes.size(); ++i) {
    nlohmann::json nd;
    nd["id"] = i;
    nd["attrs"] = nlohmann::json::array();
    for (AttrId x : t.nodes[i].attrs) nd["attrs"].push_back(q.attr_name(x));
    nd["parent"] = t.nodes[i].parent;
    j["nodes"].push_back(nd);
  }
  j["connex"] = t.connex;
  return j.dump(2);
}

namespace {
GHD from_join_tree(const Query& q, const JoinTree& jt) {
  GHD t;
  for (int e = 0; e < q.m(); ++e) t.nodes.push_back({q.edge(e).attrs, jt.parent[e]});
  return t;
}

// Ear removal over the node list; nodes flagged `late` are removed only when nothing else is an ear.
std::optional<GHD> ear_tree(const std::vector<std::vector<AttrId>>& nodes, const std::vector<bool>& late) {
  int k = static_cast<int>(nodes.size());
  std::vector<bool> alive(k, true);
  GHD t;
  for (auto& a : nodes) t.nodes.push_back({a, -1});
  for (int left = k; left > 1; --left) {
    int pick = -1, wit = -1;
    for (int pass = 0; pass < 2 && pick < 0; ++pass)
      for (int u = 0; u < k && pick < 0; ++u) {
        if (!alive[u] || late[u] != (pass == 1)) continue;
        std::vector<AttrId> shared;
        for (AttrId x : nodes[u])
          for (int w = 0; w < k; ++w)
            if (w != u && alive[w] && std::find(nodes[w].begin(), nodes[w].end(), x) != nodes[w].end()) {
              shared.push_back(x);
              break;
            }
        for (int wp = 0; wp < 2 && wit < 0; ++wp)
          for (int w = 0; w < k; ++w)
            if (w != u && alive[w] && late[w] == (wp == 0) && contains(nodes[w], shared)) {
              wit = w;
              break;
            }
        if (wit >= 0) pick = u;
      }
    if (pick < 0) return std::nullopt;
    alive[pick] = false;
    t.nodes[pick].parent = wit;
  }
  return t;
}
}  // namespace

std::optional<GHD> construct_ghd(const Query& q, const std::vector<AttrId>& y_in) {
  if (!is_acyclic(q)) return std::nullopt;
  auto y = sorted_unique(y_in);
  JoinTree jt = build_join_tree(q);
  std::vector<AttrId> all;
  for (AttrId x = 0; x < q.n(); ++x) all.push_back(x);
  if (y == all) {
    GHD t = from_join_tree(q, jt);
    for (int i = 0; i < q.m(); ++i) t.connex.push_back(i);
    return t;
  }
  if (y.empty()) {
    GHD t = from_join_tree(q, jt);
    int r = static_cast<int>(t.nodes.size());
    t.nodes[jt.root].parent = r;
    t.nodes.push_back({{}, -1});
    t.connex = {r};
    return t;
  }
  for (int e = 0; e < q.m(); ++e)
    if (contains(q.edge(e).attrs, y)) {
      JoinTree rt = reroot(jt, e);
      GHD t = from_join_tree(q, rt);
      int r = static_cast<int>(t.nodes.size());
      t.nodes[e].parent = r;
      t.nodes.push_back({y, -1});
      t.connex = {r};
      return t;
    }
  // Best effort: ear removal over E plus the y-restricted edges, y-nodes last.
  std::vector<std::vector<AttrId>> nodes;
  std::vector<bool> late;
  for (int e = 0; e < q.m(); ++e) {
    std::vector<AttrId> ey;
    for (AttrId x : q.edge(e).attrs)
      if (std::binary_search(y.begin(), y.end(), x)) ey.push_back(x);
    if (ey.empty() || std::find(nodes.begin(), nodes.end(), ey) != nodes.end()) continue;
    nodes.push_back(ey);
    late.push_back(true);
  }
  int ny = static_cast<int>(nodes.size());
  for (int e = 0; e < q.m(); ++e) {
    nodes.push_back(q.edge(e).attrs);
    late.push_back(false);
  }
  auto t = ear_tree(nodes, late);
  if (!t) return std::nullopt;
  for (int i = 0; i < ny; ++i) t->connex.push_back(i);
  if (!validate_ghd(q, y, *t).empty()) return std::nullopt;
  return t;
}

void fold_into(Group& g, const DRel& child, const std::vector<AttrId>& key, DRel& parent, const Semiring& sr) {
  int n = g.n();
  std::uint64_t salt = g.salt();
  auto cc = child.cols(key), pc = parent.cols(key);
  struct Msg {
    Key k;
    Weight w;
    int src;
    bool req;
  };
  Dist<Msg> got;
  {
    Round r(g);
    Mailbox<Msg> mb(r);
    for (int s = 0; s < n; ++s) {
      std::map<Key, Weight> loc;
      for (size_t i = 0; i < child.parts[s].size(); ++i) {
        Key k = key_of(child.row(s, i), cc);
        auto [it, fresh] = loc.try_emplace(std::move(k), child.parts[s].w[i]);
        if (!fresh) it->second = sr.plus(it->second, child.parts[s].w[i]);
      }
      for (auto& [k, w] : loc) mb.put(s, home_of(k, salt, n), Msg{k, w, s, false});
      std::set<Key> want;
      for (size_t i = 0; i < parent.parts[s].size(); ++i) want.insert(key_of(parent.row(s, i), pc));
      for (auto& k : want) mb.put(s, home_of(k, salt, n), Msg{k, 0, s, true});
    }
    got = mb.deliver();
  }
  std::vector<std::map<Key, Weight>> ans(n);
  {
    Round r(g);
    Mailbox<KV> mb(r);
    for (int h = 0; h < n; ++h) {
      std::map<Key, Weight> sum;
      for (auto& m : got[h])
        if (!m.req) {
          auto [it, fresh] = sum.try_emplace(m.k, m.w);
          if (!fresh) it->second = sr.plus(it->second, m.w);
        }
      for (auto& m : got[h])
        if (m.req) {
          auto it = sum.find(m.k);
          if (it != sum.end()) mb.put(h, m.src, KV{m.k, it->second});
        }
    }
    auto back = mb.deliver();
    for (int s = 0; s < n; ++s)
      for (auto& [k, w] : back[s]) ans[s][k] = w;
  }
  for (int s = 0; s < n; ++s) {
    Part kept;
    for (size_t i = 0; i < parent.parts[s].size(); ++i) {
      const Value* row = parent.row(s, i);
      auto it = ans[s].find(key_of(row, pc));
      if (it == ans[s].end()) continue;
      kept.append(row, parent.arity(), sr.times(parent.parts[s].w[i], it->second));
    }
    parent.parts[s] = std::move(kept);
  }
}

DRel project_distinct(Group& g, const DRel& r, const std::vector<AttrId>& attrs, const Semiring& sr) {
  auto cols = r.cols(attrs);
  Dist<KV> in(g.n());
  for (int s = 0; s < g.n(); ++s)
    for (size_t i = 0; i < r.parts[s].size(); ++i) in[s].push_back({key_of(r.row(s, i), cols), 1});
  KeyedTable t = sum_by_key(g, in, plus_i64, g.salt());
  DRel out;
  out.name = "pi(" + r.name + ")";
  out.schema = attrs;
  out.parts.resize(g.n());
  for (int s = 0; s < g.n(); ++s) {
    std::vector<Key> keys;
    for (auto& [k, c] : t.at[s]) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    for (auto& k : keys) out.parts[s].append(k.data(), k.size(), sr.one());
  }
  return out;
}

namespace {
// Levels of a rooted tree, deepest first, each level's nodes folded into parents in parallel.
template <class F>
void bottom_up(Group& g, const std::vector<int>& parent, const std::vector<int>& depth, F fold) {
  int h = 0;
  for (int d : depth) h = std::max(h, d);
  for (int d = h; d >= 1; --d) {
    Parallel par(g);
    for (size_t v = 0; v < parent.size(); ++v) {
      if (depth[v] != d) continue;
      par.restart();
      fold(static_cast<int>(v));
      par.join_self();
    }
    par.finish();
  }
}
}  // namespace

KeyedTable fold_join(Group& g, std::vector<DRel> rels, const std::vector<AttrId>& group_by, const Semiring& sr,
                     bool use_weights, std::uint64_t salt) {
  JoinTree t = schema_join_tree(rels);
  int root = -1;
  for (size_t i = 0; i < rels.size() && root < 0; ++i)
    if (contains(rels[i].schema, group_by)) root = static_cast<int>(i);
  if (root < 0) fail(Err::Internal, "fold_join: group-by attributes not inside one relation");
  t = reroot(t, root);
  if (!use_weights)
    for (auto& r : rels)
      for (auto& p : r.parts) std::fill(p.w.begin(), p.w.end(), sr.one());
  auto depth = t.depth();
  bottom_up(g, t.parent, depth, [&](int v) {
    int p = t.parent[v];
    fold_into(g, rels[v], shared_attrs(rels[v].schema, rels[p].schema), rels[p], sr);
  });
  const DRel& R = rels[root];
  auto cols = R.cols(group_by);
  Dist<KV> in(g.n());
  for (int s = 0; s < g.n(); ++s)
    for (size_t i = 0; i < R.parts[s].size(); ++i) in[s].push_back({key_of(R.row(s, i), cols), R.parts[s].w[i]});
  return sum_by_key(g, in, [&](Weight a, Weight b) { return sr.plus(a, b); }, salt);
}

std::uint64_t count_output(Group& g, const std::vector<DRel>& rels) {
  if (rels.empty()) return 0;
  Semiring sr = Semiring::counting();
  KeyedTable t = fold_join(g, rels, {}, sr, false, g.salt());
  Weight c = t.find(Key{}).value_or(0);
  // broadcast the count from its home
  int h = home_of(Key{}, t.salt, g.n());
  Round r(g);
  Mailbox<Weight> mb(r);
  mb.to_all(h, c);
  mb.deliver();
  return static_cast<std::uint64_t>(c);
}

std::vector<DRel> build_inst_t(Group& g, const GHD& t, const Query& q, const std::vector<DRel>& rels, const Semiring& sr) {
  std::vector<DRel> out(t.nodes.size());
  std::vector<bool> used(q.m(), false);
  Parallel par(g);
  for (size_t u = 0; u < t.nodes.size(); ++u) {
    auto attrs = sorted_unique(t.nodes[u].attrs);
    int eq = -1, cont = -1;
    for (int e = 0; e < q.m(); ++e) {
      if (eq < 0 && !used[e] && sorted_unique(rels[e].schema) == attrs) eq = e;
      if (cont < 0 && contains(rels[e].schema, attrs)) cont = e;
    }
    if (eq >= 0) {
      used[eq] = true;
      out[u] = rels[eq];
    } else {
      if (cont < 0) fail(Err::InvalidGHD, "node not contained in any edge");
      par.restart();
      out[u] = project_distinct(g, rels[cont], attrs, sr);
      par.join_self();
    }
    out[u].name = "T" + std::to_string(u);
  }
  par.finish();
  return out;
}

std::vector<DRel> linear_aggro_yannakakis(Group& g, const GHD& t, const std::vector<AttrId>& y, std::vector<DRel> rels,
                                          const Semiring& sr, SizeAudit* audit) {
  int k = static_cast<int>(t.nodes.size());
  if (static_cast<int>(rels.size()) != k) fail(Err::InvalidGHD, "instance does not match GHD");
  auto depth = t.depth();
  std::set<int> tp(t.connex.begin(), t.connex.end());
  // TOP(x): the shallowest node containing x.
  std::map<AttrId, int> top;
  for (int u = 0; u < k; ++u)
    for (AttrId x : t.nodes[u].attrs) {
      auto it = top.find(x);
      if (it == top.end() || depth[u] < depth[it->second]) top[x] = u;
    }
  if (audit) {
    audit->before.clear();
    for (auto& r : rels) audit->before.push_back(r.total());
    audit->max_seen = audit->before;
  }
  std::vector<int> parent(k);
  for (int u = 0; u < k; ++u) parent[u] = t.nodes[u].parent;
  std::vector<int> active_depth = depth;
  for (int u = 0; u < k; ++u)
    if (tp.count(u)) active_depth[u] = 0;  // T' nodes stay
  bottom_up(g, parent, active_depth, [&](int u) {
    std::vector<AttrId> ybar_top;
    for (AttrId x : t.nodes[u].attrs)
      if (std::find(y.begin(), y.end(), x) == y.end() && top[x] == u) ybar_top.push_back(x);
    auto key = sorted_unique(minus(t.nodes[u].attrs, ybar_top));
    int p = parent[u];
    if (!contains(t.nodes[p].attrs, key)) fail(Err::InvalidGHD, "node keeps attributes its parent lacks");
    fold_into(g, rels[u], key, rels[p], sr);
    rels[u] = rels[u].empty_like();
    if (audit) {
      for (int v = 0; v < k; ++v) {
        std::uint64_t sz = rels[v].total();
        audit->max_seen[v] = std::max(audit->max_seen[v], sz);
        if (sz > audit->before[v]) audit->monotone = false;
      }
    }
  });
  if (audit) {
    audit->after.clear();
    for (auto& r : rels) audit->after.push_back(r.total());
  }
  for (int u = 0; u < k; ++u)
    if (!tp.count(u)) rels[u] = rels[u].empty_like();
  return rels;
}

bool classify_out_hierarchical(const Query& q, const std::vector<AttrId>& y_in) {
  auto y = sorted_unique(y_in);
  if (!construct_ghd(q, y)) return false;
  if (y.empty()) return true;
  std::vector<Mask> masks;
  for (auto& e : q.edges()) {
    Mask m = 0;
    for (size_t i = 0; i < y.size(); ++i)
      if (e.mask & bit(y[i])) m |= bit(static_cast<int>(i));
    if (m && std::find(masks.begin(), masks.end(), m) == masks.end()) masks.push_back(m);
  }
  return at_most_r_hierarchical(classify(Query::from_masks(static_cast<int>(y.size()), masks)).cls);
}

AggregateResult evaluate_join_aggregate(Group& g, const Query& q, const std::vector<AttrId>& y_in, std::vector<DRel> rels,
                                        const Semiring& sr, const std::optional<GHD>& ghd, const AlgoConfig& cfg) {
  if (!is_acyclic(q)) fail(Err::CyclicQuery, "join-aggregate needs an acyclic query");
  auto y = sorted_unique(y_in);
  JoinTree jt = build_join_tree(q);
  remove_dangling(g, jt, rels);

  // Fold contained relations into their containers.
  Reduction red = reduce_edges(q);
  {
    Parallel par(g);
    for (int e = 0; e < q.m(); ++e) {
      if (red.witness[e] < 0) continue;
      par.restart();
      fold_into(g, rels[e], rels[e].schema, rels[red.witness[e]], sr);
      rels[red.witness[e]].units += rels[e].units;
      par.join_self();
    }
    par.finish();
  }
  std::vector<DRel> kept;
  for (int e : red.kept) kept.push_back(rels[e]);
  const Query& qr = red.reduced;

  GHD t;
  if (ghd) {
    t = *ghd;
    auto v = validate_ghd(qr, y, t);
    if (!v.empty()) fail(Err::InvalidGHD, v.front().property + ": " + v.front().where);
  } else {
    auto c = construct_ghd(qr, y);
    if (!c) fail(Err::NoGHDAvailable, "no width-1 free-connex GHD found for the output attributes");
    t = *c;
  }
  auto inst = build_inst_t(g, t, qr, kept, sr);
  auto res = linear_aggro_yannakakis(g, t, y, std::move(inst), sr);

  AggregateResult ar;
  std::vector<DRel> top;
  for (int u : t.connex) top.push_back(res[u]);
  AggregateSink sink(y, sr);
  if (top.size() == 1) {
    const DRel& r = top[0];
    for (int s = 0; s < g.n(); ++s)
      for (size_t i = 0; i < r.parts[s].size(); ++i) {
        Frag f{&r.schema, r.row(s, i), r.parts[s].w[i]};
        sink.emit(s, &f, 1);
      }
  } else {
    std::vector<Mask> masks;
    for (auto& r : top) {
      Mask m = 0;
      for (AttrId x : r.schema) m |= bit(static_cast<int>(std::lower_bound(y.begin(), y.end(), x) - y.begin()));
      masks.push_back(m);
    }
    Query tq = Query::from_masks(static_cast<int>(y.size()), masks);
    AlgoConfig jc = cfg;
    jc.sr = sr;
    if (at_most_r_hierarchical(classify(tq).cls)) {
      ar.used_rhier = true;
      r_hierarchical_join_schemas(g, std::move(top), sink, jc);
    } else {
      acyclic_join_schemas(g, std::move(top), sink, jc);
    }
  }
  ar.out = sink.result(q);
  return ar;
}

}  // namespace mpcjoin
