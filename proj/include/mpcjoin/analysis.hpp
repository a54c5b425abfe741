#pragma once
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpcjoin/data.hpp"
#include "mpcjoin/query.hpp"

namespace mpcjoin {

constexpr size_t kOracleGuard = 10000;  // per relation

// Q(R) by backtracking over the edges in index order. Columns follow q's
// attributes; each row carries ⊗ of its constituents' annotations. Sorted.
Relation brute_force_join(const Instance& inst, const Semiring& sr = Semiring::counting());
// ⊕ over Q(R) grouped by y of ⊗ over constituents. Columns follow y in ascending id order. Sorted.
Relation brute_force_aggregate(const Instance& inst, const std::vector<AttrId>& y, const Semiring& sr);

// |Q(R)| for an acyclic query by a sequential bottom-up count over a join tree.
std::uint64_t count_join_sequential(const Instance& inst);
// Triangles R1(B,C), R2(A,C), R3(A,B) in any schema order: per R1 edge, intersect neighbourhoods.
std::uint64_t count_triangles(const Instance& inst);

// S (bitmask over edges) -> |Q(R,S)|, the distinct projections of Q(R) onto attrs(S).
using SubsetStats = std::map<Mask, std::uint64_t>;
SubsetStats subset_stats(const Instance& inst);

double l_instance(const SubsetStats& stats, int p);
double l_instance(const Instance& inst, int p);
double l_cartesian(const std::vector<double>& sizes, int p);
double k_star_bound(double in, double out, int p);

struct BoundPrediction {
  std::string algorithm;
  double value = 0;
};
// Labels: binary, yannakakis, line3, acyclic, rhier, primitive, count.
BoundPrediction predicted_load(const std::string& algorithm, double in, double out, int p,
                               std::optional<double> n_beta = std::nullopt);

std::string bounds_csv_header();
std::string bounds_csv_row(const BoundPrediction& b, double in, double out, int p);
std::string sig3(double v);

// Structural oracles by exhaustive search.
bool brute_force_has_minimal_path3(const Query& q);
int brute_force_min_edge_cover(const Query& q);

}  // namespace mpcjoin
