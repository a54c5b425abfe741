#include "mpcjoin/local_join.hpp"

#include <algorithm>

#include "mpcjoin/errors.hpp"
#include "mpcjoin/primitives.hpp"

namespace mpcjoin {

namespace {
struct Step {
  int rel;
  std::vector<int> key_cols;    // columns of rel bound earlier
  std::vector<AttrId> key_attrs;
  KeyMap<std::vector<std::uint32_t>> index;
};
}  // namespace

void local_join(const std::vector<LocalRel>& rels, const std::function<void(const Frag*)>& f) {
  size_t k = rels.size();
  if (k == 0) return;
  for (auto& r : rels)
    if (r.part->size() == 0) return;

  // Greedy connected order: next relation shares the most bound attributes.
  std::vector<int> order;
  std::vector<bool> used(k, false);
  std::vector<AttrId> bound;
  for (size_t step = 0; step < k; ++step) {
    int best = -1, best_sh = -1;
    for (size_t i = 0; i < k; ++i) {
      if (used[i]) continue;
      int sh = static_cast<int>(shared_attrs(*rels[i].schema, bound).size());
      if (sh > best_sh) best = static_cast<int>(i), best_sh = sh;
    }
    used[best] = true;
    order.push_back(best);
    for (AttrId x : *rels[best].schema)
      if (std::find(bound.begin(), bound.end(), x) == bound.end()) bound.push_back(x);
  }

  AttrId max_attr = 0;
  for (auto& r : rels)
    for (AttrId x : *r.schema) max_attr = std::max(max_attr, x);
  std::vector<Step> steps(k);
  std::vector<AttrId> seen;
  for (size_t s = 0; s < k; ++s) {
    Step& st = steps[s];
    st.rel = order[s];
    const auto& sch = *rels[st.rel].schema;
    for (size_t c = 0; c < sch.size(); ++c)
      if (std::find(seen.begin(), seen.end(), sch[c]) != seen.end()) {
        st.key_cols.push_back(static_cast<int>(c));
        st.key_attrs.push_back(sch[c]);
      }
    for (AttrId x : sch)
      if (std::find(seen.begin(), seen.end(), x) == seen.end()) seen.push_back(x);
    if (s > 0) {
      const Part& p = *rels[st.rel].part;
      size_t ar = sch.size();
      for (std::uint32_t i = 0; i < p.size(); ++i) st.index[key_of(p.v.data() + i * ar, st.key_cols)].push_back(i);
    }
  }

  std::vector<Value> val(static_cast<size_t>(max_attr) + 1, 0);
  std::vector<Frag> frags(k);
  Key probe;
  std::function<void(size_t)> rec = [&](size_t s) {
    if (s == k) {
      f(frags.data());
      return;
    }
    const Step& st = steps[s];
    const LocalRel& lr = rels[st.rel];
    size_t ar = lr.schema->size();
    auto bind = [&](std::uint32_t i) {
      const Value* row = lr.part->v.data() + i * ar;
      for (size_t c = 0; c < ar; ++c) val[(*lr.schema)[c]] = row[c];
      frags[st.rel] = Frag{lr.schema, row, lr.part->w[i]};
      rec(s + 1);
    };
    if (s == 0) {
      for (std::uint32_t i = 0; i < lr.part->size(); ++i) bind(i);
      return;
    }
    probe.resize(st.key_attrs.size());
    for (size_t c = 0; c < st.key_attrs.size(); ++c) probe[c] = val[st.key_attrs[c]];
    auto it = st.index.find(probe);
    if (it == st.index.end()) return;
    for (std::uint32_t i : it->second) bind(i);
  };
  rec(0);
}

Part local_join_materialize(const std::vector<LocalRel>& rels, const std::vector<AttrId>& out_schema,
                            const std::function<Weight(const Frag*)>& weight) {
  Part out;
  size_t k = rels.size();
  std::vector<Value> row(out_schema.size());
  local_join(rels, [&](const Frag* fr) {
    for (size_t c = 0; c < out_schema.size(); ++c)
      if (!frag_value(fr, k, out_schema[c], row[c])) fail(Err::Internal, "materialize: attribute not covered");
    out.append(row.data(), row.size(), weight(fr));
  });
  return out;
}

}  // namespace mpcjoin
