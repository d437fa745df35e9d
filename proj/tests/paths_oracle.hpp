#pragma once

#include "shpc/hypothesis.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace shpc::test {

/// Every simple root-to-goal path over finite-cost vertices, ranked by
/// (cost summed in path order, vertex count, ids); first m returned.
inline std::vector<CandidatePath> brute_force_paths(const CostDigraph& g, int m) {
  std::vector<CandidatePath> all;
  const std::size_t n = g.cost.size();
  std::vector<bool> goal(n, false), on(n, false);
  for (int v : g.goals) goal[static_cast<std::size_t>(v)] = true;
  std::vector<int> stack;
  auto dfs = [&](auto&& self, int u) -> void {
    if (!std::isfinite(g.cost[static_cast<std::size_t>(u)])) return;
    stack.push_back(u);
    on[static_cast<std::size_t>(u)] = true;
    if (goal[static_cast<std::size_t>(u)]) {
      double c = 0.0;
      for (int v : stack) c += g.cost[static_cast<std::size_t>(v)];
      all.push_back({stack, c});
    }
    for (int w : g.successors[static_cast<std::size_t>(u)]) {
      if (!on[static_cast<std::size_t>(w)]) self(self, w);
    }
    on[static_cast<std::size_t>(u)] = false;
    stack.pop_back();
  };
  dfs(dfs, g.root);
  std::sort(all.begin(), all.end());
  if (static_cast<int>(all.size()) > m) all.resize(static_cast<std::size_t>(m));
  return all;
}

/// Random digraph on n vertices with dyadic costs (exact float sums) and
/// some infinite vertices.
inline CostDigraph random_digraph(Rng& rng, int n) {
  CostDigraph g;
  g.cost.resize(static_cast<std::size_t>(n));
  g.successors.resize(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    const double r = rng.uniform();
    g.cost[static_cast<std::size_t>(v)] =
        r < 0.15 ? kInfiniteCost : (r < 0.35 ? 0.0 : static_cast<double>(rng.index(8)) * 0.125);
  }
  const double density = rng.uniform(0.2, 0.7);
  for (int u = 0; u < n; ++u) {
    for (int w = 0; w < n; ++w) {
      if (u != w && rng.uniform() < density) g.successors[static_cast<std::size_t>(u)].push_back(w);
    }
  }
  g.root = static_cast<int>(rng.index(static_cast<std::uint64_t>(n)));
  for (int v = 0; v < n; ++v) {
    if (v != g.root && rng.uniform() < 0.3) g.goals.push_back(v);
  }
  if (g.goals.empty()) g.goals.push_back((g.root + 1) % n);
  return g;
}

}  // namespace shpc::test
