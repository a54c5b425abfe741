#pragma once
#include <optional>
#include <string>
#include <vector>

#include "mpcjoin/joins.hpp"

namespace mpcjoin {

// Width-1 GHD. Node ids are indices into `nodes`; the root has parent -1.
struct GhdNode {
  std::vector<AttrId> attrs;
  int parent = -1;
};
struct GHD {
  std::vector<GhdNode> nodes;
  std::vector<int> connex;  // T'
  int root() const;
  std::vector<std::vector<int>> children() const;
  std::vector<int> depth() const;
};

struct GhdViolation {
  std::string property;  // coherence, edge-coverage, width-1, connex, free-connex, tree
  std::string where;
};

std::vector<GhdViolation> validate_ghd(const Query& q, const std::vector<AttrId>& y, const GHD& t);
GHD ghd_from_json(const Query& q, const std::string& text);
std::string ghd_to_json(const Query& q, const GHD& t);

// Width-1 free-connex GHD for (q, y) if one of the supported constructions applies.
std::optional<GHD> construct_ghd(const Query& q, const std::vector<AttrId>& y);

// One relation per GHD node. A node equal to an edge gets R(e) (at the lowest
// such node); every other node gets the distinct projection of the lowest-index
// containing edge with annotation one.
std::vector<DRel> build_inst_t(Group& g, const GHD& t, const Query& q, const std::vector<DRel>& rels, const Semiring& sr);

struct SizeAudit {
  std::vector<std::uint64_t> before, after;
  std::vector<std::uint64_t> max_seen;
  bool monotone = true;
};

// Bottom-up: nodes outside T' aggregate away their private non-output
// attributes and fold into the parent. Returns relations for T' nodes (others emptied).
std::vector<DRel> linear_aggro_yannakakis(Group& g, const GHD& t, const std::vector<AttrId>& y, std::vector<DRel> inst_t,
                                          const Semiring& sr, SizeAudit* audit = nullptr);

struct AggregateResult {
  Relation out;
  bool used_rhier = false;
};
AggregateResult evaluate_join_aggregate(Group& g, const Query& q, const std::vector<AttrId>& y, std::vector<DRel> rels,
                                        const Semiring& sr, const std::optional<GHD>& ghd = std::nullopt,
                                        const AlgoConfig& cfg = {});

// ⊕ over join results of ⊗ of annotations (all-ones when use_weights is false),
// grouped by `group_by`, which must lie inside one relation. Result at the key's home.
KeyedTable fold_join(Group& g, std::vector<DRel> rels, const std::vector<AttrId>& group_by, const Semiring& sr,
                     bool use_weights, std::uint64_t salt);
// Child tuples are ⊕-summed by `key` (a subset of both schemas); each parent tuple
// multiplies in its matching sum, unmatched parent tuples are dropped. 2 rounds.
void fold_into(Group& g, const DRel& child, const std::vector<AttrId>& key, DRel& parent, const Semiring& sr);
// Distinct projection with annotation one, placed at the projection's home. 1 round.
DRel project_distinct(Group& g, const DRel& r, const std::vector<AttrId>& attrs, const Semiring& sr);

// |Q(R)| known to every server afterwards.
std::uint64_t count_output(Group& g, const std::vector<DRel>& rels);

bool classify_out_hierarchical(const Query& q, const std::vector<AttrId>& y);

}  // namespace mpcjoin
