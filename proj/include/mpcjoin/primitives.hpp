#pragma once
#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <unordered_map>
#include <vector>

#include "mpcjoin/runtime.hpp"

namespace mpcjoin {

using Key = std::vector<Value>;

struct KeyHash {
  size_t operator()(const Key& k) const {
    std::uint64_t h = 0x84222325cbf29ce4ull;
    for (Value v : k) h = hash_combine(h, v);
    return static_cast<size_t>(h);
  }
};

template <class V>
using KeyMap = std::unordered_map<Key, V, KeyHash>;

inline std::uint64_t hash_key(const Key& k, std::uint64_t salt) {
  std::uint64_t h = mix64(salt);
  for (Value v : k) h = hash_combine(h, v);
  return mix64(h);
}
inline int home_of(const Key& k, std::uint64_t salt, int n) { return static_cast<int>(hash_key(k, salt) % static_cast<std::uint64_t>(n)); }

inline Key key_of(const Value* row, const std::vector<int>& cols) {
  Key k(cols.size());
  for (size_t i = 0; i < cols.size(); ++i) k[i] = row[cols[i]];
  return k;
}

inline std::uint64_t hash_row(const Value* row, size_t arity, std::uint64_t salt) {
  std::uint64_t h = mix64(salt);
  for (size_t i = 0; i < arity; ++i) h = hash_combine(h, row[i]);
  return mix64(h);
}

std::vector<AttrId> shared_attrs(const std::vector<AttrId>& a, const std::vector<AttrId>& b);

using KV = std::pair<Key, Weight>;
using Combine = std::function<Weight(Weight, Weight)>;
inline Weight plus_i64(Weight a, Weight b) { return a + b; }

// Per-server tables keyed by home(key, salt).
struct KeyedTable {
  std::uint64_t salt = 0;
  std::vector<KeyMap<Weight>> at;
  std::optional<Weight> find(const Key& k) const {
    auto& m = at[home_of(k, salt, static_cast<int>(at.size()))];
    auto it = m.find(k);
    if (it == m.end()) return std::nullopt;
    return it->second;
  }
};

// Local combine, then one round to the key's home. 1 round.
KeyedTable sum_by_key(Group& g, const Dist<KV>& in, const Combine& plus, std::uint64_t salt);
// Degree of each key value among the tuples of r. 1 round.
KeyedTable count_by(Group& g, const DRel& r, const std::vector<AttrId>& attrs, std::uint64_t salt);

// Each server asks for the table entries of its keys. 2 rounds.
std::vector<KeyMap<Weight>> lookup(Group& g, const KeyedTable& t, const Dist<Key>& wanted);

// One semijoin filter: rels[target] keeps tuples whose attrs-projection appears in rels[source].
struct SemiJoinSpec {
  int target;
  int source;
};
// Runs every filter in the same two rounds; filters see the relations as they were on entry.
void batch_semijoin(Group& g, std::vector<DRel>& rels, const std::vector<SemiJoinSpec>& specs);
DRel semi_join(Group& g, const DRel& r1, const DRel& r2);

// Leaf-to-root then root-to-leaf semijoin sweeps along tree levels; rels are aligned with tree nodes.
void remove_dangling(Group& g, const JoinTree& t, std::vector<DRel>& rels);

// The reductions below go through block leaders of ceil(sqrt(n)) servers: 2 rounds
// (none when n = 1), load about 2*sqrt(n).
// Exclusive prefix sums of one integer per server; server s gets the sum over
// servers < s. Every server also learns the grand total.
std::vector<Weight> prefix_sums(Group& g, const std::vector<Weight>& per_server, Weight* total = nullptr);
Weight all_reduce_sum(Group& g, const std::vector<Weight>& per_server);
Weight all_reduce_max(Group& g, const std::vector<Weight>& per_server);
// Every server learns every server's value. 1 round, load n.
std::vector<Weight> all_gather(Group& g, const std::vector<Weight>& per_server);

template <class T>
struct Tagged {
  T item;
  int origin;
  std::uint32_t idx;
};

// Sample sort with two-level regular sampling, then one routing round.
// Ties under `less` are broken by (origin, idx), so the order is total.
template <class T, class Less>
class SampleSort {
 public:
  using Item = Tagged<T>;

  SampleSort(Group& g, const Dist<T>& in, Less less) : g_(g), less_(less), local_(g.n()) {
    for (int s = 0; s < g.n(); ++s) {
      for (std::uint32_t i = 0; i < in[s].size(); ++i) local_[s].push_back(Item{in[s][i], s, i});
      std::sort(local_[s].begin(), local_[s].end(), [&](const Item& a, const Item& b) { return before(a, b); });
    }
  }

  bool before(const Item& a, const Item& b) const {
    if (less_(a.item, b.item)) return true;
    if (less_(b.item, a.item)) return false;
    return a.origin != b.origin ? a.origin < b.origin : a.idx < b.idx;
  }

  // 2 rounds: servers send up to n regular samples to the leader of their block
  // of ceil(sqrt(n)) servers; leaders send n weighted quantiles to everyone.
  // Load about n^1.5; each bucket holds at most about 3*IN/n items.
  void pick_splitters() {
    int n = g_.n();
    int b = 1;
    while (b * b < n) ++b;
    struct Sample {
      Item it;
      double w;
    };
    auto by_item = [&](const Sample& x, const Sample& y) { return before(x.it, y.it); };
    // k samples at evenly spaced weight quantiles, each carrying total/k
    auto quantiles = [&](std::vector<Sample> v, size_t k) {
      std::sort(v.begin(), v.end(), by_item);
      if (v.size() <= k) return v;
      double total = 0;
      for (auto& x : v) total += x.w;
      std::vector<Sample> out;
      double acc = 0;
      size_t j = 0;
      for (auto& x : v) {
        acc += x.w;
        while (j < k && (static_cast<double>(j) + 0.5) * total / static_cast<double>(k) < acc) {
          out.push_back(Sample{x.it, total / static_cast<double>(k)});
          ++j;
        }
      }
      return out;
    };
    Dist<Sample> at_leader;
    {
      Round r(g_);
      Mailbox<Sample> mb(r);
      for (int s = 0; s < n; ++s) {
        size_t c = local_[s].size();
        size_t k = std::min<size_t>(c, static_cast<size_t>(n));
        for (size_t j = 0; j < k; ++j) {
          size_t pos = static_cast<size_t>((j + 0.5) * static_cast<double>(c) / static_cast<double>(k));
          mb.put(s, (s / b) * b, Sample{local_[s][std::min(pos, c - 1)], static_cast<double>(c) / static_cast<double>(k)});
        }
      }
      at_leader = mb.deliver();
    }
    // every server receives the leaders' quantiles and derives the same splitters
    std::vector<Sample> smp;
    {
      Round r(g_);
      Mailbox<Sample> mb(r);
      for (int l = 0; l < n; l += b)
        for (auto& x : quantiles(std::move(at_leader[l]), static_cast<size_t>(n))) mb.to_all(l, x);
      smp = std::move(mb.deliver()[0]);
    }
    std::sort(smp.begin(), smp.end(), by_item);
    double total = 0;
    for (auto& s : smp) total += s.w;
    std::vector<Item> spl;
    double acc = 0;
    size_t t = 1;
    for (auto& s : smp) {
      acc += s.w;
      while (t < static_cast<size_t>(n) && acc >= static_cast<double>(t) * total / n) {
        spl.push_back(s.it);
        ++t;
      }
    }
    splitters_ = std::move(spl);
  }

  // Destination of an item: number of splitters strictly before it.
  int dest(const Item& it) const {
    auto pos = std::upper_bound(splitters_.begin(), splitters_.end(), it, [&](const Item& a, const Item& b) { return before(a, b); });
    return static_cast<int>(pos - splitters_.begin());
  }

  const std::vector<std::vector<Item>>& local() const { return local_; }
  const std::vector<Item>& splitters() const { return splitters_; }

  // 1 round; the output on each server is sorted.
  Dist<Item> route(std::uint64_t units = 1) {
    Round r(g_);
    Mailbox<Item> mb(r);
    for (int s = 0; s < g_.n(); ++s)
      for (auto& it : local_[s]) mb.put(s, dest(it), it, units);
    return finish(mb.deliver());
  }

  Dist<Item> finish(Dist<Item> got) const {
    for (auto& v : got) std::sort(v.begin(), v.end(), [&](const Item& a, const Item& b) { return before(a, b); });
    return got;
  }

 private:
  Group& g_;
  Less less_;
  std::vector<std::vector<Item>> local_;
  std::vector<Item> splitters_;
};

template <class T, class Less>
Dist<Tagged<T>> sample_sort(Group& g, const Dist<T>& in, Less less, std::uint64_t units = 1) {
  SampleSort<T, Less> s(g, in, less);
  s.pick_splitters();
  return s.route(units);
}

// For every x: the largest y in Y with y < x. Results return to the server
// holding x, aligned with its input order. 4 rounds.
Dist<std::optional<Value>> multi_search(Group& g, const Dist<Value>& xs, const Dist<Value>& ys);

struct Numbered {
  Value key;
  Value value;
  int origin;
  std::uint32_t idx;
  std::uint64_t rank;  // 1-based within key
};
// Ranks within each key ordered by value, then by (origin, idx). Results stay
// at their sorted location. 4 rounds.
Dist<Numbered> multi_numbering(Group& g, const Dist<std::pair<Value, Value>>& pairs);

struct ServerRange {
  std::int64_t lo = 0, hi = -1;  // inclusive
  std::int64_t width() const { return hi - lo + 1; }
};
struct Allocated {
  Value j;
  std::int64_t demand;
  int origin;
  std::uint32_t idx;
  ServerRange range;
};
// Every item of subproblem j gets the same range of width p(j); ranges are
// disjoint and ordered by j. Results stay at sorted location. 4 rounds.
Dist<Allocated> server_allocation(Group& g, const Dist<std::pair<Value, std::int64_t>>& items);

struct PackItem {
  std::uint64_t id;
  double x;
};
struct PackResult {
  std::uint64_t id;
  std::uint64_t group;
};
// Groups values in (0,1] so each group sums to at most 1 and all but at most
// one sum to at least 1/2. Results come back to the input server. 2*levels+4 rounds.
Dist<PackResult> parallel_packing(Group& g, const Dist<PackItem>& items);
int packing_levels(std::uint64_t in, int n);

}  // namespace mpcjoin
