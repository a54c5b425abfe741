#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mpcjoin/data.hpp"
#include "mpcjoin/query.hpp"

namespace mpcjoin {

// splitmix64 stream keyed by (family, seed, relation).
class SplitMix {
 public:
  SplitMix(const std::string& family, std::uint64_t seed, std::uint64_t stream);
  std::uint64_t next();
  double uniform();                        // [0,1)
  std::uint64_t below(std::uint64_t n);    // [0,n)

 private:
  std::uint64_t s_;
};

struct Generated {
  Instance inst;
  std::uint64_t in = 0;
  std::uint64_t out = 0;
  double tau = 0;
  int rejections = 0;
  bool within_tolerance = true;
  std::map<std::string, double> params;  // realized parameters for params.json
};

// Queries used across tests, experiments and the CLI:
// line3, chain4, star3, a_ab_b, q1 (tall-flat), q2 (hierarchical), triangle, trap.
Query named_query(const std::string& name);
std::vector<std::string> named_queries();

Generated gen_line3_order_gap(std::uint64_t N, std::uint64_t OUT, bool doubled);
Generated gen_line3_hard(std::uint64_t IN, std::uint64_t OUT, std::uint64_t seed);
Generated gen_acyclic_hard(const Query& q, std::uint64_t IN, std::uint64_t OUT, std::uint64_t seed);
Generated gen_triangle_hard(std::uint64_t IN, std::uint64_t OUT, std::uint64_t seed);

struct Skew {
  double zipf = 0;          // 0 = uniform, otherwise the Zipf exponent
  std::uint64_t domain = 0;  // per-attribute domain size; 0 picks about sqrt(IN)
};
Generated gen_random_acyclic(const Query& q, std::uint64_t IN, const Skew& skew, std::uint64_t seed);

// R0(X) = {0}, R1(A,B) = [IN] x {0}, R2(B,C) = {0} x [r2]: one tiny component and one
// component whose join is IN * r2.
Generated gen_case2_trap(std::uint64_t IN, std::uint64_t r2);

// Dispatch by family name: order_gap (N, OUT, doubled), line3_hard (IN, OUT),
// acyclic_hard (IN, OUT; needs q), triangle_hard (IN, OUT), random_acyclic
// (IN, zipf, domain; needs q), case2_trap (IN, r2). Missing keys raise ParamOutOfRange.
std::vector<std::string> generator_families();
Generated generate(const std::string& family, const std::map<std::string, double>& params, std::uint64_t seed,
                   const Query* q = nullptr);

}  // namespace mpcjoin
