#include <algorithm>
#include <cmath>

#include "mpcjoin/errors.hpp"
#include "mpcjoin/joins.hpp"
#include "mpcjoin/local_join.hpp"

namespace mpcjoin {

void ConstSink::emit(int server, const Frag* frags, size_t k) {
  buf_.assign(frags, frags + k);
  buf_.insert(buf_.end(), extra_.begin(), extra_.end());
  p_.emit(server, buf_.data(), buf_.size());
}

namespace {
struct Stat {
  Key key;
  Weight d1, d2;
  int src;
};
struct Assign {
  Key key;
  std::int64_t base;
  std::int64_t rows, cols;
};
struct KeyInfo {
  Weight d1 = 0, d2 = 0;
  std::vector<int> req;
};

Weight mul_checked(Weight a, Weight b) {
  Weight r;
  if (__builtin_mul_overflow(a, b, &r)) fail(Err::Overflow, "join size overflow");
  return r;
}
}  // namespace

BinaryJoinResult binary_join(Group& g, const DRel& r1, const DRel& r2, const BinaryOut& o) {
  int n = g.n();
  auto B = shared_attrs(r1.schema, r2.schema);
  auto c1 = r1.cols(B), c2 = r2.cols(B);
  std::uint64_t salt = g.salt();
  std::uint64_t rsalt = g.salt();
  BinaryJoinResult res;

  // R1: local degrees to the key's home (doubles as the assignment request).
  std::vector<std::map<Key, KeyInfo>> homes(n);
  {
    Round r(g);
    Mailbox<Stat> mb(r);
    for (int s = 0; s < n; ++s) {
      std::map<Key, std::pair<Weight, Weight>> loc;
      for (size_t i = 0; i < r1.parts[s].size(); ++i) loc[key_of(r1.row(s, i), c1)].first++;
      for (size_t i = 0; i < r2.parts[s].size(); ++i) loc[key_of(r2.row(s, i), c2)].second++;
      for (auto& [k, d] : loc) mb.put(s, home_of(k, salt, n), Stat{k, d.first, d.second, s});
    }
    auto got = mb.deliver();
    for (int h = 0; h < n; ++h)
      for (auto& st : got[h]) {
        auto& ki = homes[h][st.key];
        ki.d1 += st.d1;
        ki.d2 += st.d2;
        ki.req.push_back(st.src);
      }
  }
  // R2: OUT and IN.
  Weight OUT = 0, IN = 0;
  {
    std::vector<Weight> o(n, 0), in(n, 0);
    for (int s = 0; s < n; ++s) {
      for (auto& [k, ki] : homes[s]) o[s] += mul_checked(ki.d1, ki.d2);
      in[s] = static_cast<Weight>(r1.parts[s].size() + r2.parts[s].size());
    }
    Parallel par(g);
    OUT = all_reduce_sum(g, o);
    par.join_self();
    par.restart();
    IN = all_reduce_sum(g, in);
    par.join_self();
    par.finish();
  }
  res.out = static_cast<std::uint64_t>(OUT);
  double L = std::max(1.0, static_cast<double>(IN) / n + std::sqrt(static_cast<double>(OUT) / n));
  res.L = L;
  double heavy_out = static_cast<double>(OUT) / n;

  // R3: prefix over light weight and heavy cell demand.
  auto is_heavy = [&](const KeyInfo& ki) {
    return static_cast<double>(ki.d1) * static_cast<double>(ki.d2) > heavy_out || static_cast<double>(std::max(ki.d1, ki.d2)) > L;
  };
  auto cells = [&](const KeyInfo& ki, std::int64_t& rows, std::int64_t& cols) {
    rows = static_cast<std::int64_t>(std::ceil(static_cast<double>(ki.d1) / L));
    cols = static_cast<std::int64_t>(std::ceil(static_cast<double>(ki.d2) / L));
  };
  std::vector<Weight> lw(n, 0), hd(n, 0);
  for (int s = 0; s < n; ++s)
    for (auto& [k, ki] : homes[s]) {
      if (ki.d1 == 0 || ki.d2 == 0) continue;
      if (is_heavy(ki)) {
        std::int64_t a, b;
        cells(ki, a, b);
        hd[s] += a * b;
      } else {
        lw[s] += ki.d1 + ki.d2;
      }
    }
  Weight TL = 0, TH = 0;
  std::vector<Weight> lpre, hpre;
  {
    Parallel par(g);
    lpre = prefix_sums(g, lw, &TL);
    par.join_self();
    par.restart();
    hpre = prefix_sums(g, hd, &TH);
    par.join_self();
    par.finish();
  }
  std::int64_t NB = TL > 0 ? static_cast<std::int64_t>(std::floor(static_cast<double>(TL) / L)) + 1 : 0;
  std::int64_t V = std::max<std::int64_t>(1, NB + TH);
  res.virtual_servers = static_cast<int>(V);

  // R4: assignments back to requesters.
  std::vector<std::map<Key, Assign>> asg(n);
  {
    Round r(g);
    Mailbox<Assign> mb(r);
    for (int s = 0; s < n; ++s) {
      Weight lrun = lpre[s], hrun = NB + hpre[s];
      for (auto& [k, ki] : homes[s]) {
        if (ki.d1 == 0 || ki.d2 == 0) continue;
        Assign a{k, 0, 1, 1};
        if (is_heavy(ki)) {
          cells(ki, a.rows, a.cols);
          a.base = hrun;
          hrun += a.rows * a.cols;
          ++res.heavy_keys;
        } else {
          a.base = static_cast<std::int64_t>(std::floor(static_cast<double>(lrun) / L));
          lrun += ki.d1 + ki.d2;
        }
        for (int src : ki.req) mb.put(s, src, a);
      }
    }
    auto got = mb.deliver();
    for (int s = 0; s < n; ++s)
      for (auto& a : got[s]) asg[s][a.key] = a;
  }

  // R5: route and join locally.
  Group gv = g.sub(0, static_cast<int>(V));
  gv.set_round(g.round());
  std::vector<Part> p1, p2;
  {
    Round r(gv);
    RowMail m1(r, r1.arity()), m2(r, r2.arity());
    for (int s = 0; s < n; ++s) {
      for (size_t i = 0; i < r1.parts[s].size(); ++i) {
        const Value* row = r1.row(s, i);
        auto it = asg[s].find(key_of(row, c1));
        if (it == asg[s].end()) continue;
        const Assign& a = it->second;
        std::int64_t rr = a.rows > 1 ? static_cast<std::int64_t>(hash_row(row, r1.arity(), rsalt) % static_cast<std::uint64_t>(a.rows)) : 0;
        for (std::int64_t c = 0; c < a.cols; ++c) m1.put(s, static_cast<int>(a.base + rr * a.cols + c), row, r1.parts[s].w[i], r1.units);
      }
      for (size_t i = 0; i < r2.parts[s].size(); ++i) {
        const Value* row = r2.row(s, i);
        auto it = asg[s].find(key_of(row, c2));
        if (it == asg[s].end()) continue;
        const Assign& a = it->second;
        std::int64_t cc = a.cols > 1 ? static_cast<std::int64_t>(hash_row(row, r2.arity(), rsalt ^ 0xabcdef) % static_cast<std::uint64_t>(a.cols)) : 0;
        for (std::int64_t rw = 0; rw < a.rows; ++rw) m2.put(s, static_cast<int>(a.base + rw * a.cols + cc), row, r2.parts[s].w[i], r2.units);
      }
    }
    p1 = m1.deliver();
    p2 = m2.deliver();
  }
  g.set_round(gv.round());

  std::vector<AttrId> out_schema = r1.schema;
  for (AttrId x : r2.schema)
    if (std::find(B.begin(), B.end(), x) == B.end()) out_schema.push_back(x);
  if (o.into) {
    o.into->schema = out_schema;
    o.into->parts.assign(n, Part{});
    o.into->units = 1;
  }
  for (std::int64_t v = 0; v < V; ++v) {
    if (p1[v].size() == 0 || p2[v].size() == 0) continue;
    int srv = static_cast<int>(v % n);
    std::vector<LocalRel> lr{{&r1.schema, &p1[v]}, {&r2.schema, &p2[v]}};
    if (o.sink) {
      local_join(lr, [&](const Frag* f) { o.sink->emit(srv, f, 2); });
    } else if (o.into) {
      Part& dst = o.into->parts[srv];
      std::vector<Value> row(out_schema.size());
      local_join(lr, [&](const Frag* f) {
        size_t c = 0;
        for (size_t i = 0; i < r1.arity(); ++i) row[c++] = f[0].row[i];
        for (size_t i = 0; i < r2.arity(); ++i)
          if (std::find(B.begin(), B.end(), r2.schema[i]) == B.end()) row[c++] = f[1].row[i];
        Weight w = o.mode == WeightMode::Left ? f[0].w : o.mode == WeightMode::Right ? f[1].w : o.sr.times(f[0].w, f[1].w);
        dst.append(row.data(), row.size(), w);
      });
    }
  }
  return res;
}

}  // namespace mpcjoin
