#pragma once
#include <functional>
#include <string>
#include <vector>

#include "mpcjoin/data.hpp"
#include "mpcjoin/generators.hpp"
#include "mpcjoin/query.hpp"

namespace testutil {

using namespace mpcjoin;

inline Relation rel(const std::string& name, std::vector<std::string> schema, const std::vector<std::vector<Value>>& rows,
                    const std::vector<Weight>& w = {}) {
  Relation r;
  r.name = name;
  r.schema = std::move(schema);
  for (size_t i = 0; i < rows.size(); ++i) r.add(rows[i], w.empty() ? 1 : w[i]);
  r.weighted = !w.empty();
  return r;
}

// Connected-subtree check, attribute by attribute, written independently of the library.
inline bool join_tree_property(const std::vector<Mask>& edges, const JoinTree& t) {
  int m = static_cast<int>(edges.size());
  for (int x = 0; x < 64; ++x) {
    std::vector<int> holders;
    for (int e = 0; e < m; ++e)
      if (edges[e] & bit(x)) holders.push_back(e);
    if (holders.size() < 2) continue;
    // nodes holding x whose parent does not hold x: exactly one per connected piece
    int tops = 0;
    for (int e : holders) {
      int p = t.parent[e];
      if (p < 0 || !(edges[p] & bit(x))) ++tops;
    }
    if (tops != 1) return false;
  }
  return true;
}

// Every hypergraph with the given number of edges (as a sorted multiset of
// non-empty masks) whose attributes are exactly 0..n_attrs-1.
inline void for_each_hypergraph(int n_attrs, int n_edges, const std::function<void(const std::vector<Mask>&)>& f) {
  Mask full = (Mask{1} << n_attrs) - 1;
  std::vector<Mask> cur;
  std::function<void(Mask)> rec = [&](Mask from) {
    if (static_cast<int>(cur.size()) == n_edges) {
      Mask u = 0;
      for (Mask e : cur) u |= e;
      if (u == full) f(cur);
      return;
    }
    for (Mask e = from; e <= full; ++e) {
      cur.push_back(e);
      rec(e);
      cur.pop_back();
    }
  };
  rec(1);
}

}  // namespace testutil
