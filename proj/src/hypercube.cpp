#include <algorithm>
#include <functional>

#include "mpcjoin/joins.hpp"
#include "mpcjoin/local_join.hpp"

namespace mpcjoin {

std::vector<int> hypercube_shares(const std::vector<std::uint64_t>& sizes, int budget) {
  size_t k = sizes.size();
  std::vector<int> best(k, 1), cur(k, 1);
  double best_cost = -1;
  std::function<void(size_t, int)> rec = [&](size_t i, int left) {
    if (i == k) {
      double c = 0;
      for (size_t j = 0; j < k; ++j) c += static_cast<double>(sizes[j]) / cur[j];
      if (best_cost < 0 || c < best_cost - 1e-9) best_cost = c, best = cur;
      return;
    }
    int cap = static_cast<int>(std::min<std::uint64_t>(static_cast<std::uint64_t>(left), std::max<std::uint64_t>(1, sizes[i])));
    for (int p = 1; p <= cap; ++p) {
      cur[i] = p;
      rec(i + 1, left / p);
    }
    cur[i] = 1;
  };
  rec(0, std::max(1, budget));
  return best;
}

std::vector<int> hypercube_cartesian(Group& g, const std::vector<const DRel*>& rels, EmitSink& sink,
                                     const std::vector<std::uint64_t>* sizes) {
  int n = g.n();
  size_t k = rels.size();
  std::vector<std::uint64_t> N(k, 0);
  if (sizes) {
    N = *sizes;
  } else {
    Parallel par(g);
    for (size_t i = 0; i < k; ++i) {
      par.restart();
      std::vector<Weight> loc(n);
      for (int s = 0; s < n; ++s) loc[s] = static_cast<Weight>(rels[i]->parts[s].size());
      N[i] = static_cast<std::uint64_t>(all_reduce_sum(g, loc));
      par.join_self();
    }
    par.finish();
  }
  if (k == 0 || std::find(N.begin(), N.end(), 0) != N.end()) return std::vector<int>(k, 1);
  auto sh = hypercube_shares(N, n);
  std::vector<std::int64_t> stride(k, 1);
  std::int64_t C = 1;
  for (size_t i = 0; i < k; ++i) stride[i] = C, C *= sh[i];
  std::vector<std::uint64_t> salts(k);
  for (auto& s : salts) s = g.salt();

  Group gc = g.sub(0, static_cast<int>(C));
  gc.set_round(g.round());
  std::vector<std::vector<Part>> got(k);
  {
    Round r(gc);
    std::vector<RowMail> mails;
    mails.reserve(k);
    for (size_t i = 0; i < k; ++i) mails.emplace_back(r, rels[i]->arity());
    for (size_t i = 0; i < k; ++i) {
      const DRel& R = *rels[i];
      for (int s = 0; s < n; ++s)
        for (size_t t = 0; t < R.parts[s].size(); ++t) {
          const Value* row = R.row(s, t);
          std::int64_t ci = static_cast<std::int64_t>(hash_row(row, R.arity(), salts[i]) % static_cast<std::uint64_t>(sh[i]));
          // all cells whose i-th coordinate is ci
          for (std::int64_t cell = 0; cell < C; ++cell)
            if ((cell / stride[i]) % sh[i] == ci) mails[i].put(s, static_cast<int>(cell), row, R.parts[s].w[t], R.units);
        }
    }
    for (size_t i = 0; i < k; ++i) got[i] = mails[i].deliver();
  }
  g.set_round(gc.round());
  for (std::int64_t cell = 0; cell < C; ++cell) {
    std::vector<LocalRel> lr;
    for (size_t i = 0; i < k; ++i) lr.push_back({&rels[i]->schema, &got[i][cell]});
    int srv = static_cast<int>(cell % n);
    local_join(lr, [&](const Frag* f) { sink.emit(srv, f, k); });
  }
  return sh;
}

}  // namespace mpcjoin
