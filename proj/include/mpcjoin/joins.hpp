#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "mpcjoin/emit.hpp"
#include "mpcjoin/primitives.hpp"
#include "mpcjoin/query.hpp"
#include "mpcjoin/runtime.hpp"

namespace mpcjoin {

struct AlgoConfig {
  int c_srv = 4;  // server over-allocation budget: at most c_srv * p virtual servers per level
  Semiring sr = Semiring::counting();
};

enum class WeightMode { Both, Left, Right };

// Where binary_join results go: emitted as (r1, r2) fragment pairs, or
// materialized into `into` over r1.schema followed by the new r2 attributes.
struct BinaryOut {
  EmitSink* sink = nullptr;
  DRel* into = nullptr;
  WeightMode mode = WeightMode::Both;
  Semiring sr = Semiring::counting();
};

struct BinaryJoinResult {
  std::uint64_t out = 0;
  std::uint64_t heavy_keys = 0;
  double L = 0;
  int virtual_servers = 0;
};

// Skew-aware equi-join on the shared attributes. Keys with d1*d2 > OUT/n or a
// degree above L = IN/n + sqrt(OUT/n) get a private grid of ceil(d1/L) x
// ceil(d2/L) cells; the rest are packed into bins of about L input tuples. 7 rounds.
BinaryJoinResult binary_join(Group& g, const DRel& r1, const DRel& r2, const BinaryOut& out);

// Integer shares p_i with prod p_i <= budget minimizing sum N_i / p_i.
std::vector<int> hypercube_shares(const std::vector<std::uint64_t>& sizes, int budget);
// Cartesian product of relations with pairwise disjoint schemas. One routing
// round (plus two rounds to learn sizes when they are not supplied).
std::vector<int> hypercube_cartesian(Group& g, const std::vector<const DRel*>& rels, EmitSink& sink,
                                     const std::vector<std::uint64_t>* sizes = nullptr);

// Plans are nested pairs of edge names, e.g. "((R1,R2),R3)".
struct PlanNode {
  int edge = -1;  // leaf
  int left = -1, right = -1;
};
struct Plan {
  std::vector<PlanNode> nodes;
  int root = -1;
};
Plan parse_plan(const Query& q, const std::string& text);
// Both sides of every join must be connected and share an attribute, and every edge used once.
void validate_plan(const Query& q, const Plan& plan);
std::string default_plan(const Query& q);

struct JoinStats {
  std::uint64_t out = 0;
  std::uint64_t in_after_dangling = 0;
  double tau = 0;
  std::uint64_t heavy = 0;
  int max_virtual_servers = 0;
};

JoinStats yannakakis_join(Group& g, const Query& q, std::vector<DRel> rels, const std::string& plan, EmitSink& sink,
                          const AlgoConfig& cfg = {});
// R1(A,B) ⋈ R2(B,C) ⋈ R3(C,D) in any edge order; SchemaMismatch otherwise.
JoinStats line3_join(Group& g, const Query& q, std::vector<DRel> rels, EmitSink& sink, const AlgoConfig& cfg = {});
JoinStats acyclic_join(Group& g, const Query& q, std::vector<DRel> rels, EmitSink& sink, const AlgoConfig& cfg = {});
JoinStats r_hierarchical_join(Group& g, const Query& q, std::vector<DRel> rels, EmitSink& sink, const AlgoConfig& cfg = {});

// Acyclic join over relations identified only by their schemas (attribute ids
// may exceed the query's, e.g. dummy attributes). Used by the aggregates pipeline.
JoinStats acyclic_join_schemas(Group& g, std::vector<DRel> rels, EmitSink& sink, const AlgoConfig& cfg = {});
JoinStats r_hierarchical_join_schemas(Group& g, std::vector<DRel> rels, EmitSink& sink, const AlgoConfig& cfg = {});

// Dense query over the union of the given schemas; attr_of maps dense ids back.
struct SchemaQuery {
  Query q;
  std::vector<AttrId> attr_of;
};
SchemaQuery schema_query(const std::vector<std::vector<AttrId>>& schemas);
JoinTree schema_join_tree(const std::vector<DRel>& rels);

// Sinks used internally by the join drivers.
class ConstSink : public EmitSink {  // appends fixed fragments to every emission
 public:
  ConstSink(EmitSink& parent, std::vector<Frag> extra) : p_(parent), extra_(std::move(extra)) {}
  void emit(int server, const Frag* frags, size_t k) override;

 private:
  EmitSink& p_;
  std::vector<Frag> extra_;
  std::vector<Frag> buf_;
};

}  // namespace mpcjoin
