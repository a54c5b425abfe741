#pragma once
#include <functional>
#include <vector>

#include "mpcjoin/emit.hpp"
#include "mpcjoin/runtime.hpp"

namespace mpcjoin {

struct LocalRel {
  const std::vector<AttrId>* schema;
  const Part* part;
};

// Natural join of the given local relations. `f` receives one fragment per
// input relation, in input order. Relations without shared attributes join
// as a Cartesian product.
void local_join(const std::vector<LocalRel>& rels, const std::function<void(const Frag*)>& f);

// Natural join materialized into a Part over `out_schema`; weight chosen by `weight`.
Part local_join_materialize(const std::vector<LocalRel>& rels, const std::vector<AttrId>& out_schema,
                            const std::function<Weight(const Frag*)>& weight);

}  // namespace mpcjoin
