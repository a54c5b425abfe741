#include "mpcjoin/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "mpcjoin/errors.hpp"

namespace mpcjoin {

namespace {

struct VecHash {
  size_t operator()(const std::vector<Value>& v) const {
    std::uint64_t h = 1469598103934665603ull;
    for (Value x : v) h = (h ^ x) * 1099511628211ull + (h >> 29);
    return static_cast<size_t>(h);
  }
};

void guard(const Instance& inst) {
  for (auto& r : inst.rels)
    if (r.size() > kOracleGuard) fail(Err::TooLarge, "oracle guard: relation " + r.name + " has more than 10^4 tuples");
}

// Calls f(values, weight) for every join result.
void enumerate(const Instance& inst, const Semiring& sr, const std::function<void(const std::vector<Value>&, Weight)>& f) {
  guard(inst);
  const Query& q = inst.q;
  int m = q.m();
  if (m == 0) return;
  std::vector<bool> bound(q.n(), false);
  // Per edge: columns already bound by earlier edges, and an index on them.
  std::vector<std::vector<int>> bcols(m);
  std::vector<std::unordered_map<std::vector<Value>, std::vector<size_t>, VecHash>> idx(m);
  for (int e = 0; e < m; ++e) {
    const auto& attrs = q.edge(e).attrs;
    for (size_t c = 0; c < attrs.size(); ++c)
      if (bound[attrs[c]]) bcols[e].push_back(static_cast<int>(c));
    const Relation& r = inst.rels[e];
    for (size_t i = 0; i < r.size(); ++i) {
      std::vector<Value> k;
      for (int c : bcols[e]) k.push_back(r.row(i)[c]);
      idx[e][k].push_back(i);
    }
    for (AttrId x : attrs) bound[x] = true;
  }
  std::vector<Value> val(q.n(), 0);
  std::function<void(int, Weight)> rec = [&](int e, Weight w) {
    if (e == m) {
      f(val, w);
      return;
    }
    const auto& attrs = q.edge(e).attrs;
    const Relation& r = inst.rels[e];
    std::vector<Value> k;
    for (int c : bcols[e]) k.push_back(val[attrs[c]]);
    auto it = idx[e].find(k);
    if (it == idx[e].end()) return;
    for (size_t i : it->second) {
      const Value* row = r.row(i);
      for (size_t c = 0; c < attrs.size(); ++c) val[attrs[c]] = row[c];
      rec(e + 1, sr.times(w, r.weights[i]));
    }
  };
  rec(0, sr.one());
}

}  // namespace

Relation brute_force_join(const Instance& inst, const Semiring& sr) {
  Relation out;
  out.name = "Q";
  out.schema = inst.q.attr_names();
  enumerate(inst, sr, [&](const std::vector<Value>& v, Weight w) { out.add(v, w); });
  out.sort_rows();
  return out;
}

Relation brute_force_aggregate(const Instance& inst, const std::vector<AttrId>& y_in, const Semiring& sr) {
  std::vector<AttrId> y = y_in;
  std::sort(y.begin(), y.end());
  y.erase(std::unique(y.begin(), y.end()), y.end());
  std::map<std::vector<Value>, Weight> groups;
  enumerate(inst, sr, [&](const std::vector<Value>& v, Weight w) {
    std::vector<Value> k;
    for (AttrId x : y) k.push_back(v[x]);
    auto [it, fresh] = groups.try_emplace(std::move(k), w);
    if (!fresh) it->second = sr.plus(it->second, w);
  });
  Relation out;
  out.name = "Q_y";
  for (AttrId x : y) out.schema.push_back(inst.q.attr_name(x));
  out.weighted = true;
  for (auto& [k, w] : groups) out.add(k, w);
  return out;
}

std::uint64_t count_join_sequential(const Instance& inst) {
  const Query& q = inst.q;
  if (q.m() == 0) return 0;
  JoinTree t = build_join_tree(q);
  auto ch = t.children();
  auto dep = t.depth();
  std::vector<int> order(q.m());
  for (int i = 0; i < q.m(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return dep[a] > dep[b]; });
  auto mul = [](std::uint64_t a, std::uint64_t b) {
    std::uint64_t r;
    if (__builtin_mul_overflow(a, b, &r)) fail(Err::Overflow, "count overflow");
    return r;
  };
  auto add = [](std::uint64_t a, std::uint64_t b) {
    std::uint64_t r;
    if (__builtin_add_overflow(a, b, &r)) fail(Err::Overflow, "count overflow");
    return r;
  };
  auto cols_of = [&](int e, const std::vector<AttrId>& attrs) {
    std::vector<int> c;
    for (AttrId x : attrs) c.push_back(static_cast<int>(std::find(q.edge(e).attrs.begin(), q.edge(e).attrs.end(), x) - q.edge(e).attrs.begin()));
    return c;
  };
  auto shared = [&](int a, int b) { return q.attrs_of(q.edge(a).mask & q.edge(b).mask); };
  // msg[u]: counts of u's subtree keyed by the attributes u shares with its parent.
  std::vector<std::unordered_map<std::vector<Value>, std::uint64_t, VecHash>> msg(q.m());
  std::uint64_t total = 0;
  for (int u : order) {
    const Relation& r = inst.rels[u];
    std::vector<std::vector<int>> ccols;
    for (int c : ch[u]) ccols.push_back(cols_of(u, shared(u, c)));
    std::vector<int> pcols;
    if (t.parent[u] >= 0) pcols = cols_of(u, shared(u, t.parent[u]));
    for (size_t i = 0; i < r.size(); ++i) {
      std::uint64_t w = 1;
      for (size_t j = 0; j < ch[u].size() && w; ++j) {
        std::vector<Value> k;
        for (int c : ccols[j]) k.push_back(r.row(i)[c]);
        auto it = msg[ch[u][j]].find(k);
        w = it == msg[ch[u][j]].end() ? 0 : mul(w, it->second);
      }
      if (!w) continue;
      if (t.parent[u] < 0) {
        total = add(total, w);
      } else {
        std::vector<Value> k;
        for (int c : pcols) k.push_back(r.row(i)[c]);
        auto& slot = msg[u][k];
        slot = add(slot, w);
      }
    }
  }
  return total;
}

std::uint64_t count_triangles(const Instance& inst) {
  const Query& q = inst.q;
  if (q.m() != 3 || q.n() != 3) fail(Err::SchemaMismatch, "count_triangles needs a triangle query");
  for (auto& e : q.edges())
    if (e.attrs.size() != 2) fail(Err::SchemaMismatch, "count_triangles needs binary relations");
  const Edge& e0 = q.edge(0);
  AttrId u = e0.attrs[0], v = e0.attrs[1];
  // neighbourhoods of u-values and v-values in the third attribute
  std::unordered_map<Value, std::set<Value>> nu, nv;
  bool got_u = false, got_v = false;
  for (int e = 1; e < 3; ++e) {
    const Edge& ed = q.edge(e);
    bool hu = std::find(ed.attrs.begin(), ed.attrs.end(), u) != ed.attrs.end();
    bool hv = std::find(ed.attrs.begin(), ed.attrs.end(), v) != ed.attrs.end();
    if (hu == hv) fail(Err::SchemaMismatch, "count_triangles needs a triangle query");
    AttrId a = hu ? u : v;
    int ca = ed.attrs[0] == a ? 0 : 1;
    auto& nb = hu ? nu : nv;
    (hu ? got_u : got_v) = true;
    const Relation& r = inst.rels[e];
    for (size_t i = 0; i < r.size(); ++i) nb[r.row(i)[ca]].insert(r.row(i)[1 - ca]);
  }
  if (!got_u || !got_v) fail(Err::SchemaMismatch, "count_triangles needs a triangle query");
  std::uint64_t total = 0;
  const Relation& r0 = inst.rels[0];
  for (size_t i = 0; i < r0.size(); ++i) {
    auto a = nu.find(r0.row(i)[0]);
    auto b = nv.find(r0.row(i)[1]);
    if (a == nu.end() || b == nv.end()) continue;
    const auto& small = a->second.size() < b->second.size() ? a->second : b->second;
    const auto& big = a->second.size() < b->second.size() ? b->second : a->second;
    for (Value w : small) total += big.count(w);
  }
  return total;
}

SubsetStats subset_stats(const Instance& inst) {
  const Query& q = inst.q;
  if (q.m() > 20) fail(Err::TooLarge, "subset_stats: too many relations");
  std::vector<std::vector<Value>> rows;
  enumerate(inst, Semiring::counting(), [&](const std::vector<Value>& v, Weight) { rows.push_back(v); });
  SubsetStats st;
  for (Mask S = 1; S < (Mask{1} << q.m()); ++S) {
    Mask attrs = 0;
    for (int e = 0; e < q.m(); ++e)
      if (S & bit(e)) attrs |= q.edge(e).mask;
    auto ids = q.attrs_of(attrs);
    std::set<std::vector<Value>> distinct;
    for (auto& r : rows) {
      std::vector<Value> k;
      for (AttrId x : ids) k.push_back(r[x]);
      distinct.insert(std::move(k));
    }
    st[S] = distinct.size();
  }
  return st;
}

double l_instance(const SubsetStats& stats, int p) {
  double best = 0;
  for (auto& [S, c] : stats) {
    if (S == 0 || c == 0) continue;
    best = std::max(best, std::pow(static_cast<double>(c) / p, 1.0 / popcount(S)));
  }
  return best;
}

double l_instance(const Instance& inst, int p) { return l_instance(subset_stats(inst), p); }

double l_cartesian(const std::vector<double>& sizes, int p) {
  size_t m = sizes.size();
  if (m > 30) fail(Err::TooLarge, "l_cartesian: too many relations");
  double best = 0;
  for (std::uint64_t S = 1; S < (std::uint64_t{1} << m); ++S) {
    double lg = -std::log(static_cast<double>(p));
    bool zero = false;
    int k = 0;
    for (size_t i = 0; i < m; ++i)
      if (S >> i & 1) {
        if (sizes[i] <= 0) zero = true;
        else lg += std::log(sizes[i]);
        ++k;
      }
    if (!zero) best = std::max(best, std::exp(lg / k));
  }
  return best;
}

double k_star_bound(double in, double out, int p) {
  int k = 1;
  if (in > 1 && out > 1) k = std::max(1, static_cast<int>(std::ceil(std::log(out) / std::log(in) - 1e-9)));
  double pp = static_cast<double>(p);
  return in / std::pow(pp, 1.0 / std::max(1, k - 1)) + std::pow(out / pp, 1.0 / k);
}

BoundPrediction predicted_load(const std::string& a, double in, double out, int p, std::optional<double> n_beta) {
  double pp = static_cast<double>(p);
  BoundPrediction b{a, 0};
  if (a == "binary") b.value = in / pp + std::sqrt(out / pp);
  else if (a == "yannakakis") b.value = in / pp + out / pp;
  else if (a == "line3") b.value = in / pp + std::sqrt(in * out) / pp;
  else if (a == "acyclic") b.value = in / pp + std::sqrt(n_beta.value_or(in) * out) / pp + std::sqrt(out / pp);
  else if (a == "rhier") b.value = k_star_bound(in, out, p);
  else if (a == "primitive" || a == "count") b.value = in / pp;
  else fail(Err::UnknownAlgorithm, "unknown algorithm label: " + a);
  return b;
}

std::string sig3(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

std::string bounds_csv_header() { return "algorithm,IN,OUT,p,predicted"; }

std::string bounds_csv_row(const BoundPrediction& b, double in, double out, int p) {
  std::ostringstream os;
  os << b.algorithm << "," << static_cast<long long>(std::llround(in)) << "," << static_cast<long long>(std::llround(out)) << ","
     << p << "," << sig3(b.value);
  return os.str();
}

bool brute_force_has_minimal_path3(const Query& q) {
  int n = q.n();
  auto together = [&](AttrId a, AttrId b) {
    for (auto& e : q.edges())
      if ((e.mask & bit(a)) && (e.mask & bit(b))) return true;
    return false;
  };
  auto is_path = [&](const std::vector<AttrId>& p) {
    for (size_t i = 0; i + 1 < p.size(); ++i)
      if (!together(p[i], p[i + 1])) return false;
    return true;
  };
  for (AttrId a = 0; a < n; ++a)
    for (AttrId b = 0; b < n; ++b)
      for (AttrId c = 0; c < n; ++c)
        for (AttrId d = 0; d < n; ++d) {
          if (!is_path({a, b, c, d})) continue;
          // strict subsequences from a to d
          if (is_path({a, d}) || is_path({a, b, d}) || is_path({a, c, d})) continue;
          return true;
        }
  return false;
}

int brute_force_min_edge_cover(const Query& q) {
  Mask all = q.all_attrs();
  int m = q.m();
  if (m > 24) fail(Err::TooLarge, "edge cover: too many edges");
  int best = m;
  for (std::uint64_t S = 0; S < (std::uint64_t{1} << m); ++S) {
    Mask cov = 0;
    for (int e = 0; e < m; ++e)
      if (S >> e & 1) cov |= q.edge(e).mask;
    if (cov == all) best = std::min(best, popcount(S));
  }
  return best;
}

}  // namespace mpcjoin
