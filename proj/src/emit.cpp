#include "mpcjoin/emit.hpp"

#include <algorithm>
#include <numeric>

#include "mpcjoin/errors.hpp"

namespace mpcjoin {

bool frag_value(const Frag* frags, size_t k, AttrId x, Value& out) {
  for (size_t f = 0; f < k; ++f) {
    const auto& s = *frags[f].schema;
    for (size_t c = 0; c < s.size(); ++c)
      if (s[c] == x) {
        out = frags[f].row[c];
        return true;
      }
  }
  return false;
}

void CollectSink::emit(int server, const Frag* frags, size_t k) {
  if (server >= static_cast<int>(per_server_.size())) per_server_.resize(server + 1, 0);
  ++per_server_[server];
  std::vector<Value> row(n_, 0);
  std::vector<bool> set(n_, false);
  std::vector<std::pair<AttrId, Value>> extra;
  Weight w = sr_.one();
  bool bad = false;
  for (size_t f = 0; f < k; ++f) {
    w = sr_.times(w, frags[f].w);
    const auto& s = *frags[f].schema;
    for (size_t c = 0; c < s.size(); ++c) {
      AttrId x = s[c];
      Value v = frags[f].row[c];
      if (x < n_) {
        if (set[x] && row[x] != v) bad = true;
        row[x] = v;
        set[x] = true;
      } else {
        for (auto& [ex, ev] : extra)
          if (ex == x && ev != v) bad = true;
        extra.push_back({x, v});
      }
    }
  }
  if (bad) ++inconsistent_;
  if (std::find(set.begin(), set.end(), false) != set.end()) ++incomplete_;
  rows_.insert(rows_.end(), row.begin(), row.end());
  weights_.push_back(w);
}

Relation CollectSink::result(const Query& q) const {
  Relation r;
  r.name = "Q";
  r.schema = q.attr_names();
  r.schema.resize(n_);
  std::vector<size_t> idx(weights_.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto row = [&](size_t i) { return rows_.begin() + static_cast<std::ptrdiff_t>(i * n_); };
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return std::lexicographical_compare(row(a), row(a) + n_, row(b), row(b) + n_); });
  for (size_t i : idx) {
    r.values.insert(r.values.end(), row(i), row(i) + n_);
    r.weights.push_back(weights_[i]);
  }
  return r;
}

std::uint64_t CollectSink::duplicates() const {
  std::vector<std::vector<Value>> all;
  all.reserve(weights_.size());
  for (size_t i = 0; i < weights_.size(); ++i) all.emplace_back(rows_.begin() + i * n_, rows_.begin() + (i + 1) * n_);
  std::sort(all.begin(), all.end());
  std::uint64_t d = 0;
  for (size_t i = 1; i < all.size(); ++i)
    if (all[i] == all[i - 1]) ++d;
  return d;
}

TsvSink::TsvSink(const std::string& path, const Query& q) : out_(path), n_(q.n()) {
  if (!out_) fail(Err::IoError, "cannot write " + path);
  for (int x = 0; x < n_; ++x) out_ << (x ? "\t" : "") << q.attr_name(x);
  out_ << "\n";
}

void TsvSink::emit(int, const Frag* frags, size_t k) {
  for (int x = 0; x < n_; ++x) {
    Value v = 0;
    frag_value(frags, k, x, v);
    out_ << (x ? "\t" : "") << v;
  }
  out_ << "\n";
  ++count_;
}

void AggregateSink::emit(int, const Frag* frags, size_t k) {
  std::vector<Value> key(y_.size());
  for (size_t i = 0; i < y_.size(); ++i)
    if (!frag_value(frags, k, y_[i], key[i])) fail(Err::Internal, "aggregate emit missing output attribute");
  Weight w = sr_.one();
  for (size_t f = 0; f < k; ++f) w = sr_.times(w, frags[f].w);
  auto [it, fresh] = g_.try_emplace(std::move(key), w);
  if (!fresh) it->second = sr_.plus(it->second, w);
}

Relation AggregateSink::result(const Query& q) const {
  Relation r;
  r.name = "Q";
  for (AttrId x : y_) r.schema.push_back(q.attr_name(x));
  r.weighted = true;
  for (auto& [k, w] : g_) r.add(k, w);
  return r;
}

}  // namespace mpcjoin
