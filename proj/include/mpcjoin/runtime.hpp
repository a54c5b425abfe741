#pragma once
#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mpcjoin/data.hpp"

namespace mpcjoin {

template <class T>
using Dist = std::vector<std::vector<T>>;

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) { return mix64(h ^ (v + 0x632be59bd9b4e019ull + (h << 6))); }

struct LoadReport {
  std::string algorithm;
  std::string query;
  std::uint64_t in = 0;
  std::uint64_t out = 0;
  int p = 0;
  std::uint64_t seed = 0;
  int rounds = 0;
  std::uint64_t load = 0;
  double predicted = 0;
  std::vector<std::uint64_t> per_round_max;
  bool verified = false;
};

std::string report_csv_header();
std::string report_csv_row(const LoadReport& r);

class Group;

// p physical servers plus the load ledger indexed by (round, server).
class Cluster {
 public:
  explicit Cluster(int p, std::uint64_t seed = 0);

  int p() const { return p_; }
  std::uint64_t seed() const { return seed_; }
  Group all();

  void charge(int round, int server, std::uint64_t units);
  void touch_round(int round);
  int rounds() const { return rounds_; }
  std::uint64_t load() const;
  std::vector<std::uint64_t> per_round_max() const;
  std::uint64_t received(int round, int server) const;
  std::uint64_t total_units() const { return total_; }

  std::uint64_t next_salt() { return mix64(seed_ ^ mix64(++salt_counter_)); }

  // Debug mode: receivers see sender batches in a seeded random order.
  void set_shuffle_delivery(bool on, std::uint64_t seed = 1) { shuffle_ = on, shuffle_seed_ = seed; }
  bool shuffle_delivery() const { return shuffle_; }
  std::uint64_t shuffle_seed(int round) const { return mix64(shuffle_seed_ ^ static_cast<std::uint64_t>(round)); }

  // Records a warning when IN is below p^1.1.
  void check_regime(std::uint64_t in);
  const std::vector<std::string>& warnings() const { return warnings_; }
  void warn(std::string w) { warnings_.push_back(std::move(w)); }

  LoadReport report(const std::string& algorithm) const;

 private:
  int p_;
  std::uint64_t seed_;
  std::uint64_t salt_counter_ = 0;
  int rounds_ = 0;
  std::uint64_t total_ = 0;
  std::vector<std::vector<std::uint64_t>> ledger_;
  bool shuffle_ = false;
  std::uint64_t shuffle_seed_ = 1;
  std::vector<std::string> warnings_;
};

// An execution context: n virtual servers, each backed by one or more physical
// servers (several when a group is replicated across a server grid), plus a
// round cursor.
class Group {
 public:
  Group(Cluster& c, std::vector<std::vector<int>> map, int round);

  int n() const { return static_cast<int>(map_->size()); }
  Cluster& cluster() const { return *c_; }
  int round() const { return round_; }
  void set_round(int r) { round_ = r; }
  const std::vector<int>& phys(int v) const { return (*map_)[v]; }
  std::uint64_t salt() const { return c_->next_salt(); }

  // Virtual servers offset .. offset+count-1, wrapping around modulo n.
  Group sub(int offset, int count) const;
  // Virtual server i is backed by the union of this group's servers in members[i].
  Group replicated(const std::vector<std::vector<int>>& members) const;

 private:
  Cluster* c_;
  std::shared_ptr<const std::vector<std::vector<int>>> map_;
  int round_;
};

// Runs branches that start at the same round; the group resumes at the latest finish.
class Parallel {
 public:
  explicit Parallel(Group& g) : g_(g), start_(g.round()), end_(g.round()) {}
  Group branch(int offset, int count) const {
    Group s = g_.sub(offset, count);
    s.set_round(start_);
    return s;
  }
  void restart() { g_.set_round(start_); }
  void join(const Group& s) { end_ = std::max(end_, s.round()); }
  void join_self() { end_ = std::max(end_, g_.round()); }
  void finish() { g_.set_round(std::max(end_, g_.round())); }
  int start() const { return start_; }

 private:
  Group& g_;
  int start_, end_;
};

// One synchronous communication step; destruction advances the group's round.
class Round {
 public:
  explicit Round(Group& g) : g_(g), idx_(g.round()) { g.cluster().touch_round(idx_); }
  ~Round() { g_.set_round(idx_ + 1); }
  Round(const Round&) = delete;
  Round& operator=(const Round&) = delete;
  Group& group() const { return g_; }
  int index() const { return idx_; }
  void charge(int v, std::uint64_t units) const {
    if (units == 0) return;
    for (int s : g_.phys(v)) g_.cluster().charge(idx_, s, units);
  }
  std::vector<int> delivery_order(int n) const;

 private:
  Group& g_;
  int idx_;
};

template <class T>
class Mailbox {
 public:
  explicit Mailbox(Round& r) : r_(r), box_(r.group().n()), units_(r.group().n(), 0) {}

  void put(int src, int dst, T item, std::uint64_t units = 1) {
    box_[dst].push_back({src, std::move(item)});
    units_[dst] += units;
  }
  void to_all(int src, const T& item, std::uint64_t units = 1) {
    for (int d = 0; d < static_cast<int>(box_.size()); ++d) put(src, d, item, units);
  }

  Dist<T> deliver() {
    int n = static_cast<int>(box_.size());
    Dist<T> out(n);
    for (int d = 0; d < n; ++d) {
      r_.charge(d, units_[d]);
      auto& b = box_[d];
      if (r_.group().cluster().shuffle_delivery()) {
        auto rank = r_.delivery_order(n);
        std::stable_sort(b.begin(), b.end(), [&](const auto& a, const auto& c) { return rank[a.first] < rank[c.first]; });
      }
      out[d].reserve(b.size());
      for (auto& e : b) out[d].push_back(std::move(e.second));
      b.clear();
      units_[d] = 0;
    }
    return out;
  }

 private:
  Round& r_;
  std::vector<std::vector<std::pair<int, T>>> box_;
  std::vector<std::uint64_t> units_;
};

// A horizontal slice of a distributed relation held by one server.
struct Part {
  std::vector<Value> v;
  std::vector<Weight> w;
  size_t size() const { return w.size(); }
  void clear() { v.clear(), w.clear(); }
  void append(const Value* row, size_t arity, Weight wt) {
    v.insert(v.end(), row, row + arity);
    w.push_back(wt);
  }
};

// A relation spread over the virtual servers of a group. `units` is the
// communication cost of one tuple: 1 plus one per attached absorbed tuple.
struct DRel {
  std::string name;
  std::vector<AttrId> schema;
  std::vector<Part> parts;
  std::uint64_t units = 1;

  size_t arity() const { return schema.size(); }
  std::uint64_t total() const;
  int col(AttrId x) const;
  std::vector<int> cols(const std::vector<AttrId>& xs) const;
  const Value* row(int server, size_t i) const { return parts[server].v.data() + i * arity(); }
  DRel empty_like() const;
};

class RowMail {
 public:
  RowMail(Round& r, size_t arity) : r_(r), arity_(arity), box_(r.group().n()), src_(r.group().n()), units_(r.group().n(), 0) {}
  void put(int src, int dst, const Value* row, Weight w, std::uint64_t units) {
    box_[dst].append(row, arity_, w);
    src_[dst].push_back(src);
    units_[dst] += units;
  }
  std::vector<Part> deliver();

 private:
  Round& r_;
  size_t arity_;
  std::vector<Part> box_;
  std::vector<std::vector<int>> src_;
  std::vector<std::uint64_t> units_;
};

// Seeded global shuffle of all tuples followed by round-robin placement. Free.
std::vector<DRel> distribute_input(Group& g, const Instance& inst, std::uint64_t seed);
DRel distribute_relation(Group& g, const Relation& r, const std::vector<AttrId>& schema, std::uint64_t seed);

// Collects a distributed relation into a sequential one (test/debug helper, free).
Relation gather(const DRel& d, const Query& q);

}  // namespace mpcjoin
