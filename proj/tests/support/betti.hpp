#pragma once

// Betti numbers of sublevel complexes, recomputed from scratch per threshold.

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "topogdn/rng.hpp"
#include "topogdn/topology.hpp"

namespace topogdn::testing {

struct SublevelBetti {
  std::size_t beta0 = 0;
  std::size_t beta1 = 0;
};

inline std::size_t gf2_rank(std::vector<std::vector<std::uint8_t>> rows) {
  std::size_t rank = 0, cols = rows.empty() ? 0 : rows[0].size();
  for (std::size_t c = 0; c < cols && rank < rows.size(); ++c) {
    std::size_t pivot = rank;
    while (pivot < rows.size() && !rows[pivot][c]) ++pivot;
    if (pivot == rows.size()) continue;
    std::swap(rows[rank], rows[pivot]);
    for (std::size_t r = 0; r < rows.size(); ++r)
      if (r != rank && rows[r][c])
        for (std::size_t k = 0; k < cols; ++k) rows[r][k] ^= rows[rank][k];
    ++rank;
  }
  return rank;
}

/// Components by depth-first search; cycles by the Euler relation, minus the
/// rank of the filled triangles' boundaries when `clique` is set.
inline SublevelBetti sublevel_betti(const std::vector<double>& values,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                    double threshold, bool clique) {
  std::size_t n = values.size();
  std::vector<char> in(n);
  std::size_t nodes = 0;
  for (std::size_t v = 0; v < n; ++v) nodes += in[v] = values[v] <= threshold;
  std::vector<std::pair<std::size_t, std::size_t>> kept;
  for (auto [u, v] : edges)
    if (in[u] && in[v]) kept.emplace_back(u, v);
  std::vector<std::vector<std::size_t>> nbr(n);
  for (auto [u, v] : kept) nbr[u].push_back(v), nbr[v].push_back(u);
  std::vector<char> seen(n);
  std::size_t comps = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (!in[s] || seen[s]) continue;
    ++comps;
    std::vector<std::size_t> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      auto x = stack.back();
      stack.pop_back();
      for (auto y : nbr[x])
        if (!seen[y]) seen[y] = 1, stack.push_back(y);
    }
  }
  SublevelBetti b{comps, kept.size() + comps - nodes};
  if (clique && !kept.empty()) {
    auto edge_id = [&](std::size_t u, std::size_t v) -> std::ptrdiff_t {
      auto it = std::find(kept.begin(), kept.end(), std::make_pair(std::min(u, v), std::max(u, v)));
      return it == kept.end() ? -1 : it - kept.begin();
    };
    std::vector<std::vector<std::uint8_t>> boundary;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t c = a + 1; c < n; ++c)
        for (std::size_t d = c + 1; d < n; ++d) {
          auto e1 = edge_id(a, c), e2 = edge_id(a, d), e3 = edge_id(c, d);
          if (e1 < 0 || e2 < 0 || e3 < 0) continue;
          std::vector<std::uint8_t> row(kept.size());
          row[e1] = row[e2] = row[e3] = 1;
          boundary.push_back(std::move(row));
        }
    b.beta1 -= gf2_rank(std::move(boundary));
  }
  return b;
}

/// Bars alive at `threshold`, read from the diagram's coordinates.
inline SublevelBetti bars_alive(const PersistenceDiagram& d, double threshold) {
  SublevelBetti b;
  for (const auto& p : d.dim0)
    if (p.birth <= threshold && (p.essential || p.death > threshold)) ++b.beta0;
  for (const auto& p : d.dim1)
    if (p.birth <= threshold && (p.essential || p.death > threshold)) ++b.beta1;
  return b;
}

struct RandomGraphCase {
  UndirectedGraph graph;
  FiltrationView view;
};

/// Random graph with up to `max_nodes` nodes and a view of up to
/// `max_levels` thresholds; values are drawn from a small grid so ties occur.
inline RandomGraphCase random_graph_case(Rng& rng, std::size_t max_nodes = 12,
                                         std::size_t max_levels = 8) {
  std::size_t n = 1 + rng.below(max_nodes);
  double density = rng.uniform(0.1, 0.9);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.uniform() < density) edges.emplace_back(u, v);
  std::vector<double> values(n);
  std::size_t grid = 2 + rng.below(10);
  for (auto& v : values) v = static_cast<double>(rng.below(grid)) / static_cast<double>(grid);
  std::size_t levels = 1 + rng.below(max_levels);
  FiltrationView view;
  if (rng.uniform() < 0.5) {
    view = quantile_view(values, levels);
  } else {
    double hi = *std::max_element(values.begin(), values.end());
    std::vector<double> thresholds;
    for (std::size_t j = 0; j < levels; ++j) thresholds.push_back(rng.uniform(-0.1, 1.0));
    thresholds.push_back(hi + rng.uniform(0.0, 0.2));
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    while (thresholds.size() > max_levels) thresholds.erase(thresholds.begin());
    view = explicit_view(values, thresholds);
  }
  return {UndirectedGraph::from_edges(n, std::move(edges)), std::move(view)};
}

}  // namespace topogdn::testing
