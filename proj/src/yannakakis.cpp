#include <algorithm>
#include <cctype>
#include <functional>

#include "mpcjoin/aggregates.hpp"
#include "mpcjoin/errors.hpp"
#include "mpcjoin/joins.hpp"

namespace mpcjoin {

SchemaQuery schema_query(const std::vector<std::vector<AttrId>>& schemas) {
  SchemaQuery sq;
  for (auto& s : schemas)
    for (AttrId x : s)
      if (std::find(sq.attr_of.begin(), sq.attr_of.end(), x) == sq.attr_of.end()) sq.attr_of.push_back(x);
  std::sort(sq.attr_of.begin(), sq.attr_of.end());
  if (sq.attr_of.size() > 64) fail(Err::TooLarge, "more than 64 attributes");
  std::vector<Mask> masks;
  for (auto& s : schemas) {
    Mask m = 0;
    for (AttrId x : s) m |= bit(static_cast<int>(std::lower_bound(sq.attr_of.begin(), sq.attr_of.end(), x) - sq.attr_of.begin()));
    masks.push_back(m);
  }
  // Empty schemas are legal here (fully fixed relations); give them a private placeholder
  // attribute so the hypergraph stays well formed.
  int n = static_cast<int>(sq.attr_of.size());
  for (auto& m : masks)
    if (m == 0) {
      if (n >= 64) fail(Err::TooLarge, "more than 64 attributes");
      m = bit(n++);
      sq.attr_of.push_back(-1);
    }
  sq.q = Query::from_masks(n, masks);
  return sq;
}

JoinTree schema_join_tree(const std::vector<DRel>& rels) {
  std::vector<std::vector<AttrId>> s;
  for (auto& r : rels) s.push_back(r.schema);
  return build_join_tree(schema_query(s).q);
}

Plan parse_plan(const Query& q, const std::string& text) {
  Plan p;
  size_t i = 0;
  auto ws = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  std::function<int()> node = [&]() -> int {
    ws();
    if (i >= text.size()) fail(Err::ParseError, "plan: unexpected end");
    if (text[i] == '(') {
      ++i;
      int l = node();
      ws();
      if (i >= text.size() || text[i] != ',') fail(Err::ParseError, "plan: expected ','");
      ++i;
      int r = node();
      ws();
      if (i >= text.size() || text[i] != ')') fail(Err::ParseError, "plan: expected ')'");
      ++i;
      p.nodes.push_back({-1, l, r});
      return static_cast<int>(p.nodes.size()) - 1;
    }
    size_t st = i;
    while (i < text.size() && (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_' || text[i] == '-')) ++i;
    if (st == i) fail(Err::ParseError, "plan: expected edge name at offset " + std::to_string(st));
    std::string name = text.substr(st, i - st);
    int e = q.edge_index(name);
    if (e < 0) fail(Err::InvalidOrder, "plan: unknown edge " + name);
    p.nodes.push_back({e, -1, -1});
    return static_cast<int>(p.nodes.size()) - 1;
  };
  p.root = node();
  ws();
  if (i != text.size()) fail(Err::ParseError, "plan: trailing characters");
  return p;
}

namespace {
Mask plan_edges(const Plan& p, int v) {
  const PlanNode& nd = p.nodes[v];
  if (nd.edge >= 0) return bit(nd.edge);
  return plan_edges(p, nd.left) | plan_edges(p, nd.right);
}

// Edge components of the query under "shares an attribute".
std::vector<int> edge_components(const Query& q, Mask within) {
  std::vector<int> comp(q.m(), -1);
  int c = 0;
  for (int e = 0; e < q.m(); ++e) {
    if (!(within & bit(e)) || comp[e] >= 0) continue;
    std::vector<int> st{e};
    comp[e] = c;
    while (!st.empty()) {
      int u = st.back();
      st.pop_back();
      for (int v = 0; v < q.m(); ++v)
        if ((within & bit(v)) && comp[v] < 0 && (q.edge(u).mask & q.edge(v).mask)) comp[v] = c, st.push_back(v);
    }
    ++c;
  }
  return comp;
}

bool connected_within_components(const Query& q, Mask side) {
  auto global = edge_components(q, ~Mask{0} >> (64 - q.m()));
  auto local = edge_components(q, side);
  // two edges of the side in the same global component must be in the same local one
  for (int a = 0; a < q.m(); ++a)
    for (int b = a + 1; b < q.m(); ++b)
      if ((side & bit(a)) && (side & bit(b)) && global[a] == global[b] && local[a] != local[b]) return false;
  return true;
}
}  // namespace

void validate_plan(const Query& q, const Plan& p) {
  Mask all = plan_edges(p, p.root);
  int leaves = 0;
  for (auto& nd : p.nodes) leaves += nd.edge >= 0;
  if (leaves != q.m() || popcount(all) != q.m()) fail(Err::InvalidOrder, "plan must use every edge exactly once");
  auto global = edge_components(q, ~Mask{0} >> (64 - q.m()));
  for (size_t v = 0; v < p.nodes.size(); ++v) {
    const PlanNode& nd = p.nodes[v];
    if (nd.edge >= 0) continue;
    Mask l = plan_edges(p, nd.left), r = plan_edges(p, nd.right);
    if (!connected_within_components(q, l) || !connected_within_components(q, r))
      fail(Err::InvalidOrder, "plan joins a disconnected set of relations");
    Mask la = 0, ra = 0;
    bool same_comp = false;
    for (int e = 0; e < q.m(); ++e) {
      if (l & bit(e)) la |= q.edge(e).mask;
      if (r & bit(e)) ra |= q.edge(e).mask;
    }
    for (int a = 0; a < q.m(); ++a)
      for (int b = 0; b < q.m(); ++b)
        if ((l & bit(a)) && (r & bit(b)) && global[a] == global[b]) same_comp = true;
    if (!(la & ra) && same_comp) fail(Err::InvalidOrder, "plan joins relations that share no attribute");
  }
}

std::string default_plan(const Query& q) {
  JoinTree t = build_join_tree(q);
  auto order = t.bfs_order();
  std::string s = q.edge(order[0]).name;
  for (size_t i = 1; i < order.size(); ++i) s = "(" + s + "," + q.edge(order[i]).name + ")";
  return s;
}

JoinStats yannakakis_join(Group& g, const Query& q, std::vector<DRel> rels, const std::string& plan_text, EmitSink& sink,
                          const AlgoConfig& cfg) {
  if (!is_acyclic(q)) fail(Err::CyclicQuery, "yannakakis_join needs an acyclic query");
  Plan plan = parse_plan(q, plan_text.empty() ? default_plan(q) : plan_text);
  validate_plan(q, plan);
  JoinTree t = build_join_tree(q);
  remove_dangling(g, t, rels);
  JoinStats st;
  for (auto& r : rels) st.in_after_dangling += r.total();

  std::function<DRel(int)> eval = [&](int v) -> DRel {
    const PlanNode& nd = plan.nodes[v];
    if (nd.edge >= 0) return rels[nd.edge];
    DRel l = eval(nd.left), r = eval(nd.right);
    DRel out;
    out.name = l.name + "*" + r.name;
    binary_join(g, l, r, BinaryOut{nullptr, &out, WeightMode::Both, cfg.sr});
    return out;
  };
  const PlanNode& root = plan.nodes[plan.root];
  if (root.edge >= 0) {
    const DRel& r = rels[root.edge];
    for (int s = 0; s < g.n(); ++s)
      for (size_t i = 0; i < r.parts[s].size(); ++i) {
        Frag f{&r.schema, r.row(s, i), r.parts[s].w[i]};
        sink.emit(s, &f, 1);
        ++st.out;
      }
    return st;
  }
  DRel l = eval(root.left), r = eval(root.right);
  auto res = binary_join(g, l, r, BinaryOut{&sink, nullptr, WeightMode::Both, cfg.sr});
  st.out = res.out;
  return st;
}

}  // namespace mpcjoin
