#include "mpcjoin/runtime.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "mpcjoin/errors.hpp"

namespace mpcjoin {

std::string report_csv_header() { return "algorithm,query,IN,OUT,p,seed,rounds,L_measured,L_predicted"; }

std::string report_csv_row(const LoadReport& r) {
  std::ostringstream os;
  os << r.algorithm << "," << r.query << "," << r.in << "," << r.out << "," << r.p << "," << r.seed << "," << r.rounds
     << "," << r.load << "," << std::setprecision(3) << r.predicted;
  return os.str();
}

Cluster::Cluster(int p, std::uint64_t seed) : p_(p), seed_(seed) {
  if (p < 1) fail(Err::PlanInvalid, "p must be at least 1");
}

Group Cluster::all() {
  std::vector<std::vector<int>> map(p_);
  for (int i = 0; i < p_; ++i) map[i] = {i};
  return Group(*this, std::move(map), rounds_);
}

void Cluster::touch_round(int round) {
  if (round + 1 > rounds_) rounds_ = round + 1;
  while (static_cast<int>(ledger_.size()) < rounds_) ledger_.emplace_back(p_, 0);
}

void Cluster::charge(int round, int server, std::uint64_t units) {
  touch_round(round);
  ledger_[round][server] += units;
  total_ += units;
}

std::uint64_t Cluster::load() const {
  std::uint64_t l = 0;
  for (auto& r : ledger_)
    for (auto u : r) l = std::max(l, u);
  return l;
}

std::vector<std::uint64_t> Cluster::per_round_max() const {
  std::vector<std::uint64_t> out;
  for (auto& r : ledger_) out.push_back(*std::max_element(r.begin(), r.end()));
  return out;
}

std::uint64_t Cluster::received(int round, int server) const {
  if (round >= static_cast<int>(ledger_.size())) return 0;
  return ledger_[round][server];
}

void Cluster::check_regime(std::uint64_t in) {
  double thr = std::pow(static_cast<double>(p_), 1.1);
  if (static_cast<double>(in) < thr) {
    std::ostringstream os;
    os << "IN=" << in << " is below p^1.1=" << std::setprecision(4) << thr << " for p=" << p_;
    warn(os.str());
  }
}

LoadReport Cluster::report(const std::string& algorithm) const {
  LoadReport r;
  r.algorithm = algorithm;
  r.p = p_;
  r.seed = seed_;
  r.rounds = rounds_;
  r.load = load();
  r.per_round_max = per_round_max();
  return r;
}

Group::Group(Cluster& c, std::vector<std::vector<int>> map, int round)
    : c_(&c), map_(std::make_shared<const std::vector<std::vector<int>>>(std::move(map))), round_(round) {}

Group Group::sub(int offset, int count) const {
  std::vector<std::vector<int>> m(count);
  int nn = n();
  for (int i = 0; i < count; ++i) m[i] = (*map_)[(offset + i) % nn];
  return Group(*c_, std::move(m), round_);
}

Group Group::replicated(const std::vector<std::vector<int>>& members) const {
  std::vector<std::vector<int>> m(members.size());
  for (size_t i = 0; i < members.size(); ++i)
    for (int v : members[i]) {
      const auto& ph = (*map_)[v % n()];
      m[i].insert(m[i].end(), ph.begin(), ph.end());
    }
  return Group(*c_, std::move(m), round_);
}

std::vector<int> Round::delivery_order(int n) const {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::uint64_t s = g_.cluster().shuffle_seed(idx_);
  for (int i = n - 1; i > 0; --i) {
    s = mix64(s);
    std::swap(perm[i], perm[s % static_cast<std::uint64_t>(i + 1)]);
  }
  std::vector<int> rank(n);
  for (int i = 0; i < n; ++i) rank[perm[i]] = i;
  return rank;
}

std::vector<Part> RowMail::deliver() {
  int n = static_cast<int>(box_.size());
  std::vector<Part> out(n);
  bool shuffle = r_.group().cluster().shuffle_delivery();
  std::vector<int> rank;
  if (shuffle) rank = r_.delivery_order(n);
  for (int d = 0; d < n; ++d) {
    r_.charge(d, units_[d]);
    if (!shuffle) {
      out[d] = std::move(box_[d]);
    } else {
      auto& b = box_[d];
      std::vector<size_t> idx(b.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t c) { return rank[src_[d][a]] < rank[src_[d][c]]; });
      for (size_t i : idx) out[d].append(b.v.data() + i * arity_, arity_, b.w[i]);
    }
    box_[d].clear();
    src_[d].clear();
    units_[d] = 0;
  }
  return out;
}

std::uint64_t DRel::total() const {
  std::uint64_t t = 0;
  for (auto& p : parts) t += p.size();
  return t;
}

int DRel::col(AttrId x) const {
  for (size_t i = 0; i < schema.size(); ++i)
    if (schema[i] == x) return static_cast<int>(i);
  return -1;
}

std::vector<int> DRel::cols(const std::vector<AttrId>& xs) const {
  std::vector<int> out;
  for (AttrId x : xs) {
    int c = col(x);
    if (c < 0) fail(Err::UnknownAttribute, "attribute id " + std::to_string(x) + " not in " + name);
    out.push_back(c);
  }
  return out;
}

DRel DRel::empty_like() const {
  DRel d;
  d.name = name;
  d.schema = schema;
  d.units = units;
  d.parts.resize(parts.size());
  return d;
}

std::vector<DRel> distribute_input(Group& g, const Instance& inst, std::uint64_t seed) {
  std::vector<std::pair<int, size_t>> all;
  for (size_t r = 0; r < inst.rels.size(); ++r)
    for (size_t i = 0; i < inst.rels[r].size(); ++i) all.push_back({static_cast<int>(r), i});
  std::uint64_t s = mix64(seed ^ 0x5eedull);
  for (size_t i = all.size(); i > 1; --i) {
    s = mix64(s);
    std::swap(all[i - 1], all[s % i]);
  }
  std::vector<DRel> out(inst.rels.size());
  for (size_t r = 0; r < inst.rels.size(); ++r) {
    out[r].name = inst.rels[r].name;
    out[r].schema = inst.q.edge(static_cast<int>(r)).attrs;
    out[r].parts.resize(g.n());
  }
  for (size_t k = 0; k < all.size(); ++k) {
    auto [r, i] = all[k];
    const Relation& rel = inst.rels[r];
    out[r].parts[k % g.n()].append(rel.row(i), rel.arity(), rel.weights[i]);
  }
  return out;
}

DRel distribute_relation(Group& g, const Relation& r, const std::vector<AttrId>& schema, std::uint64_t seed) {
  if (schema.size() != r.arity()) fail(Err::SchemaMismatch, "schema arity");
  std::vector<size_t> idx(r.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::uint64_t s = mix64(seed ^ 0x5eedull);
  for (size_t i = idx.size(); i > 1; --i) {
    s = mix64(s);
    std::swap(idx[i - 1], idx[s % i]);
  }
  DRel d;
  d.name = r.name;
  d.schema = schema;
  d.parts.resize(g.n());
  for (size_t k = 0; k < idx.size(); ++k) d.parts[k % g.n()].append(r.row(idx[k]), r.arity(), r.weights[idx[k]]);
  return d;
}

Relation gather(const DRel& d, const Query& q) {
  Relation r;
  r.name = d.name;
  for (AttrId x : d.schema) r.schema.push_back(x < q.n() ? q.attr_name(x) : "#" + std::to_string(x));
  for (auto& p : d.parts) {
    r.values.insert(r.values.end(), p.v.begin(), p.v.end());
    r.weights.insert(r.weights.end(), p.w.begin(), p.w.end());
  }
  return r;
}

}  // namespace mpcjoin
