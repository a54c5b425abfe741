#pragma once
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mpcjoin {

using AttrId = int;
using Mask = std::uint64_t;

inline int popcount(Mask m) { return __builtin_popcountll(m); }
inline bool subset(Mask a, Mask b) { return (a & ~b) == 0; }
inline Mask bit(int i) { return Mask{1} << i; }

struct Edge {
  std::string name;
  std::vector<AttrId> attrs;  // ascending attribute ids
  Mask mask = 0;
};

// Join query hypergraph. Immutable once built. At most 64 attributes and 64 edges.
class Query {
 public:
  Query() = default;
  Query(std::vector<std::string> attrs,
        const std::vector<std::pair<std::string, std::vector<std::string>>>& edges);

  // Attributes named A, B, C, ... and edges R1, R2, ... from raw masks.
  static Query from_masks(int n_attrs, const std::vector<Mask>& edges);

  int n() const { return static_cast<int>(attrs_.size()); }
  int m() const { return static_cast<int>(edges_.size()); }
  const std::vector<std::string>& attr_names() const { return attrs_; }
  const std::string& attr_name(AttrId x) const { return attrs_.at(x); }
  AttrId attr_id(const std::string& name) const;
  const Edge& edge(int i) const { return edges_.at(i); }
  const std::vector<Edge>& edges() const { return edges_; }
  int edge_index(const std::string& name) const;
  Mask all_attrs() const;
  // E_x as a bitmask over edge indices.
  Mask edges_containing(AttrId x) const;
  std::vector<AttrId> attrs_of(Mask m) const;
  std::vector<Mask> edge_masks() const;

  // Same attribute list, edges restricted to `keep` in that order.
  Query with_edges(const std::vector<int>& keep) const;
  // Adds a fresh attribute to the given edges (dummy join attribute of domain size 1).
  Query with_extra_attribute(const std::string& name, const std::vector<int>& edges, AttrId* id) const;
  std::string describe() const;

 private:
  std::vector<std::string> attrs_;
  std::vector<Edge> edges_;
};

struct QueryFile {
  Query q;
  std::optional<std::vector<AttrId>> output;
};

QueryFile parse_query_json(const std::string& text);
QueryFile load_query_file(const std::string& path);
std::string query_to_json(const Query& q, const std::optional<std::vector<AttrId>>& output = std::nullopt);

struct GyoStep {
  enum class Kind { RemoveAttr, RemoveEdge };
  Kind kind;
  AttrId attr = -1;   // RemoveAttr: the attribute
  int edge = -1;      // edge touched
  int witness = -1;   // RemoveEdge: containing edge, -1 for the last edge
};

struct GyoResult {
  std::vector<GyoStep> trace;
  std::vector<int> residual_edges;
  std::vector<Mask> residual_masks;
  bool acyclic() const { return residual_edges.empty(); }
};

GyoResult gyo_reduce(const Query& q);
GyoResult gyo_reduce(const std::vector<Mask>& edges, int n_attrs);
// Replays a trace on the original edges; returns false if any step is illegal.
bool replay_gyo(const std::vector<Mask>& edges, const GyoResult& r);
bool is_acyclic(const Query& q);

struct JoinTree {
  std::vector<int> parent;  // -1 for root
  int root = -1;

  int size() const { return static_cast<int>(parent.size()); }
  std::vector<std::vector<int>> children() const;
  std::vector<int> depth() const;
  int height() const;
  std::vector<int> bfs_order() const;
  bool adjacent(int a, int b) const { return parent[a] == b || parent[b] == a; }
};

JoinTree build_join_tree(const Query& q);
JoinTree build_join_tree(const std::vector<Mask>& edges, int n_attrs);
bool has_connected_subtrees(const std::vector<Mask>& nodes, const JoinTree& t);
JoinTree reroot(const JoinTree& t, int new_root);

struct Reduction {
  Query reduced;
  std::vector<int> kept;     // original indices of surviving edges, in order
  std::vector<int> witness;  // per original edge: containing surviving edge, or -1 if kept
};

Reduction reduce_edges(const Query& q);

enum class QueryClass { TallFlat, Hierarchical, RHierarchical, Acyclic, Cyclic };
const char* class_name(QueryClass c);
inline bool at_most_r_hierarchical(QueryClass c) {
  return c == QueryClass::TallFlat || c == QueryClass::Hierarchical || c == QueryClass::RHierarchical;
}

struct AttributeForest {
  std::vector<int> parent;     // per attribute, -1 for roots and unused attributes
  std::vector<Mask> edge_set;  // E_x over the forest's query edges
  std::vector<AttrId> roots;
};

struct Classification {
  QueryClass cls;
  std::optional<AttributeForest> forest;  // over reduce_edges(q).reduced
};

bool is_hierarchical(const Query& q);
bool is_hierarchical(const std::vector<Mask>& edges, int n_attrs);
bool is_tall_flat(const Query& q);
Classification classify(const Query& q);
AttributeForest build_attribute_forest(const std::vector<Mask>& edges, int n_attrs);

struct MinimalPath3 {
  std::array<AttrId, 4> x;
  std::array<int, 3> e;  // edge indices of the input query
};

std::optional<MinimalPath3> find_minimal_path3(const Query& q);
bool is_minimal_path3(const Query& q, const MinimalPath3& p);

std::vector<int> integral_edge_cover(const Query& q);

}  // namespace mpcjoin
