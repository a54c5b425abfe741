#include "mpcjoin/query.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mpcjoin/errors.hpp"

namespace mpcjoin {

Query::Query(std::vector<std::string> attrs,
             const std::vector<std::pair<std::string, std::vector<std::string>>>& edges)
    : attrs_(std::move(attrs)) {
  if (attrs_.size() > 64) fail(Err::ParseError, "more than 64 attributes");
  if (edges.size() > 64) fail(Err::ParseError, "more than 64 edges");
  std::set<std::string> seen_attr;
  for (auto& a : attrs_)
    if (!seen_attr.insert(a).second) fail(Err::ParseError, "duplicate attribute " + a);
  std::set<std::string> seen_edge;
  for (auto& [name, list] : edges) {
    if (!seen_edge.insert(name).second) fail(Err::ParseError, "duplicate edge name " + name);
    if (list.empty()) fail(Err::ParseError, "empty edge " + name);
    Edge e;
    e.name = name;
    for (auto& a : list) {
      AttrId x = attr_id(a);
      if (e.mask & bit(x)) fail(Err::ParseError, "repeated attribute in edge " + name);
      e.mask |= bit(x);
    }
    e.attrs = attrs_of(e.mask);
    edges_.push_back(std::move(e));
  }
}

Query Query::from_masks(int n_attrs, const std::vector<Mask>& edges) {
  std::vector<std::string> names;
  for (int i = 0; i < n_attrs; ++i) {
    std::string s;
    int v = i;
    do {
      s.insert(s.begin(), static_cast<char>('A' + v % 26));
      v = v / 26 - 1;
    } while (v >= 0);
    names.push_back(s);
  }
  std::vector<std::pair<std::string, std::vector<std::string>>> es;
  for (size_t i = 0; i < edges.size(); ++i) {
    std::vector<std::string> l;
    for (int x = 0; x < n_attrs; ++x)
      if (edges[i] & bit(x)) l.push_back(names[x]);
    es.push_back({"R" + std::to_string(i + 1), l});
  }
  return Query(names, es);
}

AttrId Query::attr_id(const std::string& name) const {
  for (size_t i = 0; i < attrs_.size(); ++i)
    if (attrs_[i] == name) return static_cast<AttrId>(i);
  fail(Err::UnknownAttribute, name);
}

int Query::edge_index(const std::string& name) const {
  for (size_t i = 0; i < edges_.size(); ++i)
    if (edges_[i].name == name) return static_cast<int>(i);
  return -1;
}

Mask Query::all_attrs() const {
  Mask m = 0;
  for (auto& e : edges_) m |= e.mask;
  return m;
}

Mask Query::edges_containing(AttrId x) const {
  Mask m = 0;
  for (size_t i = 0; i < edges_.size(); ++i)
    if (edges_[i].mask & bit(x)) m |= bit(static_cast<int>(i));
  return m;
}

std::vector<AttrId> Query::attrs_of(Mask m) const {
  std::vector<AttrId> out;
  for (int x = 0; x < 64; ++x)
    if (m & bit(x)) out.push_back(x);
  return out;
}

std::vector<Mask> Query::edge_masks() const {
  std::vector<Mask> out;
  for (auto& e : edges_) out.push_back(e.mask);
  return out;
}

Query Query::with_edges(const std::vector<int>& keep) const {
  Query q;
  q.attrs_ = attrs_;
  for (int i : keep) q.edges_.push_back(edges_.at(i));
  return q;
}

Query Query::with_extra_attribute(const std::string& name, const std::vector<int>& edges, AttrId* id) const {
  if (attrs_.size() >= 64) fail(Err::ParseError, "attribute limit reached");
  Query q = *this;
  AttrId x = static_cast<AttrId>(q.attrs_.size());
  q.attrs_.push_back(name);
  for (int i : edges) {
    q.edges_.at(i).mask |= bit(x);
    q.edges_.at(i).attrs = q.attrs_of(q.edges_.at(i).mask);
  }
  if (id) *id = x;
  return q;
}

std::string Query::describe() const {
  std::ostringstream os;
  for (size_t i = 0; i < edges_.size(); ++i) {
    if (i) os << " ";
    os << edges_[i].name << "(";
    for (size_t j = 0; j < edges_[i].attrs.size(); ++j) os << (j ? "," : "") << attrs_[edges_[i].attrs[j]];
    os << ")";
  }
  return os.str();
}

QueryFile parse_query_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& ex) {
    fail(Err::ParseError, ex.what());
  }
  try {
    std::vector<std::string> attrs = j.at("attributes").get<std::vector<std::string>>();
    std::vector<std::pair<std::string, std::vector<std::string>>> edges;
    for (auto& e : j.at("edges")) edges.push_back({e.at("name").get<std::string>(), e.at("attrs").get<std::vector<std::string>>()});
    QueryFile f{Query(attrs, edges), std::nullopt};
    if (j.contains("output")) {
      std::vector<AttrId> out;
      for (auto& a : j.at("output")) out.push_back(f.q.attr_id(a.get<std::string>()));
      std::sort(out.begin(), out.end());
      out.erase(std::unique(out.begin(), out.end()), out.end());
      f.output = out;
    }
    return f;
  } catch (const nlohmann::json::exception& ex) {
    fail(Err::ParseError, ex.what());
  }
}

QueryFile load_query_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Err::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_query_json(ss.str());
}

std::string query_to_json(const Query& q, const std::optional<std::vector<AttrId>>& output) {
  nlohmann::json j;
  j["attributes"] = q.attr_names();
  j["edges"] = nlohmann::json::array();
  for (auto& e : q.edges()) {
    std::vector<std::string> names;
    for (AttrId x : e.attrs) names.push_back(q.attr_name(x));
    j["edges"].push_back({{"name", e.name}, {"attrs", names}});
  }
  if (output) {
    std::vector<std::string> names;
    for (AttrId x : *output) names.push_back(q.attr_name(x));
    j["output"] = names;
  }
  return j.dump(2);
}

// ---------------------------------------------------------------- GYO

GyoResult gyo_reduce(const std::vector<Mask>& edges, int n_attrs) {
  GyoResult r;
  std::vector<Mask> cur = edges;
  std::vector<bool> alive(edges.size(), true);
  int n_alive = static_cast<int>(edges.size());
  for (;;) {
    bool progress = false;
    for (bool again = true; again;) {
      again = false;
      for (AttrId x = 0; x < n_attrs && !again; ++x) {
        int cnt = 0, where = -1;
        for (size_t i = 0; i < cur.size(); ++i)
          if (alive[i] && (cur[i] & bit(x))) ++cnt, where = static_cast<int>(i);
        if (cnt == 1) {
          cur[where] &= ~bit(x);
          r.trace.push_back({GyoStep::Kind::RemoveAttr, x, where, -1});
          again = progress = true;
        }
      }
    }
    if (n_alive == 1) {
      for (size_t i = 0; i < cur.size(); ++i)
        if (alive[i] && cur[i] == 0) {
          alive[i] = false;
          --n_alive;
          r.trace.push_back({GyoStep::Kind::RemoveEdge, -1, static_cast<int>(i), -1});
          progress = true;
        }
    } else {
      bool removed = false;
      for (size_t i = 0; i < cur.size() && !removed; ++i) {
        if (!alive[i]) continue;
        for (size_t j = 0; j < cur.size(); ++j) {
          if (j == i || !alive[j]) continue;
          if (subset(cur[i], cur[j])) {
            alive[i] = false;
            --n_alive;
            r.trace.push_back({GyoStep::Kind::RemoveEdge, -1, static_cast<int>(i), static_cast<int>(j)});
            removed = progress = true;
            break;
          }
        }
      }
    }
    if (!progress || n_alive == 0) break;
  }
  for (size_t i = 0; i < cur.size(); ++i)
    if (alive[i]) {
      r.residual_edges.push_back(static_cast<int>(i));
      r.residual_masks.push_back(cur[i]);
    }
  return r;
}

GyoResult gyo_reduce(const Query& q) {
  if (q.m() == 0) fail(Err::ParseError, "empty query");
  return gyo_reduce(q.edge_masks(), q.n());
}

bool replay_gyo(const std::vector<Mask>& edges, const GyoResult& r) {
  std::vector<Mask> cur = edges;
  std::vector<bool> alive(edges.size(), true);
  for (auto& s : r.trace) {
    if (s.edge < 0 || s.edge >= static_cast<int>(cur.size()) || !alive[s.edge]) return false;
    if (s.kind == GyoStep::Kind::RemoveAttr) {
      if (!(cur[s.edge] & bit(s.attr))) return false;
      for (size_t i = 0; i < cur.size(); ++i)
        if (alive[i] && static_cast<int>(i) != s.edge && (cur[i] & bit(s.attr))) return false;
      cur[s.edge] &= ~bit(s.attr);
    } else {
      if (s.witness >= 0) {
        if (!alive[s.witness] || s.witness == s.edge || !subset(cur[s.edge], cur[s.witness])) return false;
      } else {
        int others = 0;
        for (size_t i = 0; i < cur.size(); ++i) others += alive[i] && static_cast<int>(i) != s.edge;
        if (others != 0 || cur[s.edge] != 0) return false;
      }
      alive[s.edge] = false;
    }
  }
  std::vector<int> res;
  for (size_t i = 0; i < cur.size(); ++i)
    if (alive[i]) res.push_back(static_cast<int>(i));
  return res == r.residual_edges;
}

bool is_acyclic(const Query& q) { return gyo_reduce(q).acyclic(); }

// ---------------------------------------------------------------- join tree

std::vector<std::vector<int>> JoinTree::children() const {
  std::vector<std::vector<int>> ch(parent.size());
  for (size_t i = 0; i < parent.size(); ++i)
    if (parent[i] >= 0) ch[parent[i]].push_back(static_cast<int>(i));
  return ch;
}

std::vector<int> JoinTree::depth() const {
  std::vector<int> d(parent.size(), -1);
  for (size_t i = 0; i < parent.size(); ++i) {
    int v = static_cast<int>(i), k = 0;
    while (parent[v] >= 0) v = parent[v], ++k;
    d[i] = k;
  }
  return d;
}

int JoinTree::height() const {
  int h = 0;
  for (int d : depth()) h = std::max(h, d);
  return h;
}

std::vector<int> JoinTree::bfs_order() const {
  std::vector<int> order;
  if (root < 0) return order;
  auto ch = children();
  std::queue<int> q;
  q.push(root);
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    order.push_back(v);
    for (int c : ch[v]) q.push(c);
  }
  return order;
}

JoinTree build_join_tree(const std::vector<Mask>& edges, int n_attrs) {
  GyoResult r = gyo_reduce(edges, n_attrs);
  if (!r.acyclic()) fail(Err::CyclicQuery, "GYO residual is non-empty");
  JoinTree t;
  t.parent.assign(edges.size(), -1);
  for (auto& s : r.trace)
    if (s.kind == GyoStep::Kind::RemoveEdge) {
      t.parent[s.edge] = s.witness;
      if (s.witness < 0) t.root = s.edge;
    }
  return t;
}

JoinTree build_join_tree(const Query& q) {
  if (q.m() == 0) fail(Err::ParseError, "empty query");
  return build_join_tree(q.edge_masks(), q.n());
}

bool has_connected_subtrees(const std::vector<Mask>& nodes, const JoinTree& t) {
  Mask all = 0;
  for (Mask m : nodes) all |= m;
  for (int x = 0; x < 64; ++x) {
    if (!(all & bit(x))) continue;
    int cnt = 0, links = 0;
    for (size_t i = 0; i < nodes.size(); ++i) {
      if (!(nodes[i] & bit(x))) continue;
      ++cnt;
      int p = t.parent[i];
      if (p >= 0 && (nodes[p] & bit(x))) ++links;
    }
    if (cnt - links != 1) return false;
  }
  return true;
}

JoinTree reroot(const JoinTree& t, int new_root) {
  JoinTree r = t;
  int prev = -1, v = new_root;
  while (v >= 0) {
    int next = t.parent[v];
    r.parent[v] = prev;
    prev = v;
    v = next;
  }
  r.root = new_root;
  return r;
}

// ---------------------------------------------------------------- reduce

Reduction reduce_edges(const Query& q) {
  int m = q.m();
  std::vector<bool> removed(m, false);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      Mask a = q.edge(i).mask, b = q.edge(j).mask;
      if ((subset(a, b) && a != b) || (a == b && j < i)) {
        removed[i] = true;
        break;
      }
    }
  Reduction r;
  r.witness.assign(m, -1);
  for (int i = 0; i < m; ++i)
    if (!removed[i]) r.kept.push_back(i);
  for (int i = 0; i < m; ++i) {
    if (!removed[i]) continue;
    for (int j : r.kept)
      if (subset(q.edge(i).mask, q.edge(j).mask)) {
        r.witness[i] = j;
        break;
      }
  }
  r.reduced = q.with_edges(r.kept);
  return r;
}

// ---------------------------------------------------------------- classes

const char* class_name(QueryClass c) {
  switch (c) {
    case QueryClass::TallFlat: return "tall-flat";
    case QueryClass::Hierarchical: return "hierarchical";
    case QueryClass::RHierarchical: return "r-hierarchical";
    case QueryClass::Acyclic: return "acyclic";
    case QueryClass::Cyclic: return "cyclic";
  }
  return "?";
}

static std::vector<Mask> attr_edge_sets(const std::vector<Mask>& edges, int n_attrs) {
  std::vector<Mask> ex(n_attrs, 0);
  for (size_t i = 0; i < edges.size(); ++i)
    for (int x = 0; x < n_attrs; ++x)
      if (edges[i] & bit(x)) ex[x] |= bit(static_cast<int>(i));
  return ex;
}

bool is_hierarchical(const std::vector<Mask>& edges, int n_attrs) {
  auto ex = attr_edge_sets(edges, n_attrs);
  for (int x = 0; x < n_attrs; ++x)
    for (int y = x + 1; y < n_attrs; ++y) {
      Mask a = ex[x], b = ex[y];
      if ((a & b) == 0 || subset(a, b) || subset(b, a)) continue;
      return false;
    }
  return true;
}

bool is_hierarchical(const Query& q) { return is_hierarchical(q.edge_masks(), q.n()); }

bool is_tall_flat(const Query& q) {
  if (!is_hierarchical(q)) return false;
  auto ex = attr_edge_sets(q.edge_masks(), q.n());
  std::vector<AttrId> stem;
  for (AttrId x = 0; x < q.n(); ++x)
    if (popcount(ex[x]) >= 2) stem.push_back(x);
  std::stable_sort(stem.begin(), stem.end(), [&](AttrId a, AttrId b) { return popcount(ex[a]) > popcount(ex[b]); });
  for (size_t i = 1; i < stem.size(); ++i)
    if (!subset(ex[stem[i]], ex[stem[i - 1]])) return false;
  if (stem.empty()) return q.m() == 1;
  Mask bottom = ex[stem.back()];
  for (AttrId y = 0; y < q.n(); ++y)
    if (popcount(ex[y]) == 1 && !subset(ex[y], bottom)) return false;
  return true;
}

AttributeForest build_attribute_forest(const std::vector<Mask>& edges, int n_attrs) {
  if (!is_hierarchical(edges, n_attrs)) fail(Err::NotRHierarchical, "attribute forest needs a hierarchical query");
  AttributeForest f;
  f.edge_set = attr_edge_sets(edges, n_attrs);
  f.parent.assign(n_attrs, -1);
  auto& ex = f.edge_set;
  for (AttrId x = 0; x < n_attrs; ++x) {
    if (ex[x] == 0) continue;
    int best = -1;
    for (AttrId y = 0; y < n_attrs; ++y) {
      if (y == x || ex[y] == 0 || !subset(ex[x], ex[y])) continue;
      if (ex[x] == ex[y] && y > x) continue;  // equal sets: lower id is the ancestor
      // closest ancestor: smallest edge set, then the largest id among equals
      if (best < 0 || popcount(ex[y]) < popcount(ex[best]) || (ex[y] == ex[best] && y > best)) best = y;
    }
    f.parent[x] = best;
    if (best < 0) f.roots.push_back(x);
  }
  return f;
}

Classification classify(const Query& q) {
  Classification c;
  if (!is_acyclic(q)) {
    c.cls = QueryClass::Cyclic;
    return c;
  }
  Reduction red = reduce_edges(q);
  if (is_tall_flat(q))
    c.cls = QueryClass::TallFlat;
  else if (is_hierarchical(q))
    c.cls = QueryClass::Hierarchical;
  else if (is_hierarchical(red.reduced))
    c.cls = QueryClass::RHierarchical;
  else
    c.cls = QueryClass::Acyclic;
  if (at_most_r_hierarchical(c.cls)) c.forest = build_attribute_forest(red.reduced.edge_masks(), q.n());
  return c;
}

// ---------------------------------------------------------------- minimal path

static int lowest(Mask m) { return m ? __builtin_ctzll(m) : -1; }

bool is_minimal_path3(const Query& q, const MinimalPath3& p) {
  std::set<AttrId> distinct(p.x.begin(), p.x.end());
  if (distinct.size() != 4) return false;
  auto in = [&](int e, AttrId a, AttrId b) {
    Mask m = q.edge(e).mask;
    return (m & bit(a)) && (m & bit(b));
  };
  if (!in(p.e[0], p.x[0], p.x[1]) || !in(p.e[1], p.x[1], p.x[2]) || !in(p.e[2], p.x[2], p.x[3])) return false;
  for (int e = 0; e < q.m(); ++e)
    if (in(e, p.x[0], p.x[2]) || in(e, p.x[0], p.x[3]) || in(e, p.x[1], p.x[3])) return false;
  return true;
}

std::optional<MinimalPath3> find_minimal_path3(const Query& q) {
  if (!is_acyclic(q)) fail(Err::CyclicQuery, "minimal path search needs an acyclic query");
  Reduction red = reduce_edges(q);
  const Query& r = red.reduced;
  auto ex = attr_edge_sets(r.edge_masks(), r.n());
  // Step 1: a pair x, y whose edge sets overlap without nesting.
  AttrId x = -1, y = -1;
  for (AttrId a = 0; a < r.n() && x < 0; ++a)
    for (AttrId b = a + 1; b < r.n(); ++b) {
      if ((ex[a] & ex[b]) && (ex[a] & ~ex[b]) && (ex[b] & ~ex[a])) {
        x = a, y = b;
        break;
      }
    }
  if (x < 0) return std::nullopt;
  int exy = lowest(ex[x] & ex[y]);
  int e_x = lowest(ex[x] & ~ex[y]);
  int e_y = lowest(ex[y] & ~ex[x]);
  Mask m1 = r.edge(e_x).mask, m2 = r.edge(exy).mask, m3 = r.edge(e_y).mask;
  AttrId x1 = lowest(m1 & ~m2 & ~m3);
  AttrId x4 = lowest(m3 & ~m2 & ~m1);
  AttrId x2 = x, x3 = y;
  if (x1 < 0 || x4 < 0) fail(Err::Internal, "minimal path step 1 found no private attribute");
  auto edge_with = [&](Mask need) {
    for (auto& e : r.edges())
      if (subset(need, e.mask)) return true;
    return false;
  };
  // Step 2: repair x1 (and symmetrically x4) against edges covering three path vertices.
  if (edge_with(bit(x1) | bit(x2) | bit(x3))) {
    Mask S = 0;
    for (AttrId z : r.attrs_of(m1))
      if (edge_with(bit(x2) | bit(x3) | bit(z))) S |= bit(z);
    x1 = lowest(m1 & ~m2 & ~m3 & ~S);
    if (x1 < 0) fail(Err::Internal, "minimal path step 2 repair of x1 failed");
  }
  if (edge_with(bit(x2) | bit(x3) | bit(x4))) {
    Mask S = 0;
    for (AttrId z : r.attrs_of(m3))
      if (edge_with(bit(x2) | bit(x3) | bit(z))) S |= bit(z);
    x4 = lowest(m3 & ~m2 & ~m1 & ~S);
    if (x4 < 0) fail(Err::Internal, "minimal path step 2 repair of x4 failed");
  }
  MinimalPath3 p{{x1, x2, x3, x4}, {red.kept[e_x], red.kept[exy], red.kept[e_y]}};
  // Step 3: certify against the original query.
  if (!is_minimal_path3(q, p)) fail(Err::Internal, "minimal path certification failed");
  return p;
}

// ---------------------------------------------------------------- edge cover

std::vector<int> integral_edge_cover(const Query& q) {
  if (!is_acyclic(q)) fail(Err::CyclicQuery, "edge cover construction needs an acyclic query");
  std::vector<Mask> cur = q.edge_masks();
  std::vector<bool> alive(cur.size(), true);
  std::vector<int> cover;
  int n_alive = q.m();
  while (n_alive > 0) {
    bool done = false;
    // contained edges get weight 0
    for (size_t i = 0; i < cur.size() && !done; ++i) {
      if (!alive[i]) continue;
      if (cur[i] == 0) {
        alive[i] = false, --n_alive, done = true;
        break;
      }
      for (size_t j = 0; j < cur.size(); ++j)
        if (j != i && alive[j] && subset(cur[i], cur[j])) {
          alive[i] = false, --n_alive, done = true;
          break;
        }
    }
    if (done) continue;
    // an edge owning a unique attribute gets weight 1
    for (AttrId x = 0; x < q.n() && !done; ++x) {
      int cnt = 0, where = -1;
      for (size_t i = 0; i < cur.size(); ++i)
        if (alive[i] && (cur[i] & bit(x))) ++cnt, where = static_cast<int>(i);
      if (cnt != 1) continue;
      cover.push_back(where);
      Mask gone = cur[where];
      alive[where] = false, --n_alive;
      for (size_t i = 0; i < cur.size(); ++i) cur[i] &= ~gone;
      done = true;
    }
    if (!done) fail(Err::CyclicQuery, "edge cover construction stalled");
  }
  std::sort(cover.begin(), cover.end());
  return cover;
}

}  // namespace mpcjoin
