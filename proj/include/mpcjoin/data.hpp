#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "mpcjoin/query.hpp"

namespace mpcjoin {

using Value = std::uint64_t;
using Weight = std::int64_t;

enum class SemiringId { Counting, SumProduct, MinPlus };

// Integer commutative semirings. Overflow in the additive/multiplicative
// realizations raises Err::Overflow instead of wrapping.
struct Semiring {
  SemiringId id = SemiringId::Counting;

  static Semiring counting() { return {SemiringId::Counting}; }
  static Semiring sum_product() { return {SemiringId::SumProduct}; }
  static Semiring min_plus() { return {SemiringId::MinPlus}; }
  static Semiring from_name(const std::string& name);

  const char* name() const;
  Weight zero() const;
  Weight one() const;
  Weight plus(Weight a, Weight b) const;
  Weight times(Weight a, Weight b) const;
};

struct Relation {
  std::string name;
  std::vector<std::string> schema;
  std::vector<Value> values;  // row-major
  std::vector<Weight> weights;
  bool weighted = false;  // carries an explicit #w column

  size_t arity() const { return schema.size(); }
  size_t size() const { return weights.size(); }
  const Value* row(size_t i) const { return values.data() + i * arity(); }
  void add(const std::vector<Value>& row, Weight w);
  int column(const std::string& attr) const;
  bool has_duplicates() const;
  // Sorts rows lexicographically (weights follow their rows).
  void sort_rows();
};

Relation load_relation(const std::string& path, const std::vector<std::string>& schema,
                       const Semiring& sr = Semiring::counting());
void save_relation(const Relation& r, const std::string& path);

std::vector<Value> project_tuple(const Relation& r, size_t row, const std::vector<std::string>& attrs);
// Distinct projection; each output tuple gets the multiplicative identity.
Relation project(const Relation& r, const std::vector<std::string>& attrs, const Semiring& sr = Semiring::counting());
Relation select(const Relation& r, const std::vector<std::string>& attrs, const std::vector<Value>& vals);

// One relation per query edge, columns ordered by ascending attribute id.
struct Instance {
  Query q;
  std::vector<Relation> rels;

  std::uint64_t input_size() const;
  const Relation& rel(int edge) const { return rels.at(edge); }
};

// Validates schemas against q and reorders columns; relations are matched by edge name.
Instance make_instance(const Query& q, std::vector<Relation> rels);
std::uint64_t input_size(const Instance& inst);
std::vector<Value> active_domain(const Instance& inst, AttrId x);

Instance load_instance(const Query& q, const std::string& manifest_path, const Semiring& sr = Semiring::counting());
// Writes <dir>/<edge>.tsv and <dir>/manifest.json.
void save_instance(const Instance& inst, const std::string& dir);

}  // namespace mpcjoin
