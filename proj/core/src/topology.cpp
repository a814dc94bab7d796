#include "topogdn/topology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include <fmt/format.h>

#include "topogdn/errors.hpp"

namespace topogdn {

namespace {

using Edge = std::pair<std::size_t, std::size_t>;

void check_graph(const FiltrationView& view, const UndirectedGraph& graph) {
  if (view.values.size() != graph.nodes)
    throw ContractError(fmt::format("view has {} node values, graph has {} nodes",
                                    view.values.size(), graph.nodes));
  if (view.thresholds.empty()) throw ContractError("view has no thresholds");
}

// Node with the larger value; ties go to the higher index.
std::size_t larger(const FiltrationView& view, std::size_t a, std::size_t b) {
  double fa = view.values[a], fb = view.values[b];
  if (fa != fb) return fa > fb ? a : b;
  return std::max(a, b);
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
};

// Edges in filtration order: entry level, then (u, v).
std::vector<std::size_t> edge_order(const UndirectedGraph& graph,
                                    const std::vector<std::size_t>& node_level,
                                    std::vector<std::size_t>& edge_level) {
  edge_level.resize(graph.edges.size());
  for (std::size_t e = 0; e < graph.edges.size(); ++e)
    edge_level[e] = std::max(node_level[graph.edges[e].first], node_level[graph.edges[e].second]);
  std::vector<std::size_t> order(graph.edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return edge_level[a] < edge_level[b]; });
  return order;
}

}  // namespace

UndirectedGraph UndirectedGraph::from_edges(std::size_t nodes, std::vector<Edge> edges) {
  for (auto& [u, v] : edges) {
    if (u >= nodes || v >= nodes)
      throw ContractError(fmt::format("edge ({}, {}) outside {} nodes", u, v, nodes));
    if (u == v) throw ContractError(fmt::format("self-loop at node {}", u));
    if (u > v) std::swap(u, v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return UndirectedGraph{nodes, std::move(edges)};
}

UndirectedGraph symmetrize(const Adjacency& adjacency) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < adjacency.nodes; ++i)
    for (auto j : adjacency.neighbors[i]) edges.emplace_back(i, j);
  return UndirectedGraph::from_edges(adjacency.nodes, std::move(edges));
}

UndirectedGraph disjoint_union(const UndirectedGraph& graph, std::size_t copies) {
  UndirectedGraph out;
  out.nodes = graph.nodes * copies;
  out.edges.reserve(graph.edges.size() * copies);
  for (std::size_t b = 0; b < copies; ++b) {
    std::size_t base = b * graph.nodes;
    for (auto [u, v] : graph.edges) out.edges.emplace_back(base + u, base + v);
  }
  return out;
}

std::vector<std::size_t> FiltrationView::entry_levels() const {
  std::vector<std::size_t> levels(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto it = std::lower_bound(thresholds.begin(), thresholds.end(), values[i]);
    if (it == thresholds.end())
      throw ContractError(fmt::format("node {} value {} lies above the last threshold {}", i,
                                      values[i], thresholds.back()));
    levels[i] = static_cast<std::size_t>(it - thresholds.begin());
  }
  return levels;
}

FiltrationView quantile_view(std::vector<double> values, std::size_t filtrations,
                             std::size_t view_index) {
  if (values.empty()) throw ContractError("filtration view over zero nodes");
  if (filtrations < 1) throw ConfigError("graph filtrations must be at least 1");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw NumericError(fmt::format("non-finite filtration value at node {}", i));
  FiltrationView view;
  view.view_index = view_index;
  view.values = std::move(values);
  const auto& v = view.values;
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  double lo = v[order.front()], hi = v[order.back()];
  if (lo == hi) {
    view.degenerate = true;
    view.thresholds = {lo, lo + kDegenerateSpread};
    return view;
  }
  std::size_t last = v.size() - 1;
  for (std::size_t j = 0; j <= filtrations; ++j) {
    double pos = static_cast<double>(j) * static_cast<double>(last) / static_cast<double>(filtrations);
    std::size_t a = std::min(static_cast<std::size_t>(std::floor(pos)), last);
    std::size_t b = std::min(a + 1, last);
    double frac = pos - static_cast<double>(a);
    double x = v[order[a]] + frac * (v[order[b]] - v[order[a]]);
    if (j == filtrations) x = hi;
    if (!view.thresholds.empty() && x <= view.thresholds.back()) continue;
    view.thresholds.push_back(x);
  }
  return view;
}

std::vector<FiltrationView> make_views(std::span<const double> values, std::size_t nodes,
                                       std::size_t views, std::size_t filtrations) {
  if (views < 1) throw ConfigError("at least one graph view is required");
  if (values.size() != nodes * views)
    throw ContractError(
        fmt::format("{} view values for {} nodes and {} views", values.size(), nodes, views));
  std::vector<FiltrationView> out;
  out.reserve(views);
  for (std::size_t i = 0; i < views; ++i) {
    std::vector<double> column(nodes);
    for (std::size_t m = 0; m < nodes; ++m) column[m] = values[m * views + i];
    out.push_back(quantile_view(std::move(column), filtrations, i));
  }
  return out;
}

FiltrationView explicit_view(std::vector<double> values, std::vector<double> thresholds,
                             std::size_t view_index) {
  if (thresholds.empty()) throw ContractError("view needs at least one threshold");
  for (std::size_t j = 1; j < thresholds.size(); ++j)
    if (!(thresholds[j] > thresholds[j - 1]))
      throw ContractError(fmt::format("thresholds not strictly ascending at position {}", j));
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] > thresholds.back())
      throw ContractError(fmt::format("node {} value {} exceeds the last threshold {}", i,
                                      values[i], thresholds.back()));
  FiltrationView view;
  view.view_index = view_index;
  view.values = std::move(values);
  view.thresholds = std::move(thresholds);
  return view;
}

std::vector<Dim0Pair> persistence_0dim(const FiltrationView& view, const UndirectedGraph& graph) {
  check_graph(view, graph);
  const std::size_t n = graph.nodes;
  auto node_level = view.entry_levels();
  std::vector<std::size_t> edge_level;
  auto order = edge_order(graph, node_level, edge_level);

  std::vector<Dim0Pair> pairs(n);
  for (std::size_t v = 0; v < n; ++v) {
    pairs[v].creator = v;
    pairs[v].birth_level = node_level[v];
    pairs[v].birth = view.thresholds[node_level[v]];
    pairs[v].essential = true;
  }
  // Each root remembers the creator of its component (the oldest node in it).
  UnionFind uf(n);
  std::vector<std::size_t> creator(n);
  std::iota(creator.begin(), creator.end(), 0);
  auto older = [&](std::size_t a, std::size_t b) {
    return node_level[a] != node_level[b] ? node_level[a] < node_level[b] : a < b;
  };
  for (auto e : order) {
    auto [u, v] = graph.edges[e];
    std::size_t ru = uf.find(u), rv = uf.find(v);
    if (ru == rv) continue;
    std::size_t cu = creator[ru], cv = creator[rv];
    std::size_t elder = older(cu, cv) ? cu : cv;
    std::size_t younger = elder == cu ? cv : cu;
    Dim0Pair& dead = pairs[younger];
    dead.essential = false;
    dead.destroyer = larger(view, larger(view, u, v), younger);
    dead.death_level = edge_level[e];
    dead.death = view.thresholds[edge_level[e]];
    uf.parent[rv] = ru;
    creator[ru] = elder;
  }
  std::size_t top = view.levels() - 1;
  for (auto& p : pairs)
    if (p.essential) {
      p.death_level = top;
      p.death = view.thresholds[top];
    }
  return pairs;
}

std::vector<Dim1Pair> persistence_1dim(const FiltrationView& view, const UndirectedGraph& graph,
                                       ComplexMode mode) {
  check_graph(view, graph);
  const std::size_t n = graph.nodes;
  auto node_level = view.entry_levels();
  std::vector<std::size_t> edge_level;
  auto order = edge_order(graph, node_level, edge_level);
  const std::size_t top = view.levels() - 1;

  // Cycle-creating (positive) edges, in filtration order.
  UnionFind uf(n);
  std::vector<std::size_t> position(graph.edges.size());
  std::vector<std::size_t> positive;
  for (std::size_t k = 0; k < order.size(); ++k) {
    std::size_t e = order[k];
    position[e] = k;
    auto [u, v] = graph.edges[e];
    std::size_t ru = uf.find(u), rv = uf.find(v);
    if (ru == rv)
      positive.push_back(e);
    else
      uf.parent[rv] = ru;
  }

  // death_at[e] = filtration level of the triangle that kills positive edge e.
  std::vector<std::size_t> death_at(graph.edges.size(), SIZE_MAX);
  std::vector<std::size_t> killer(graph.edges.size(), 0);
  if (mode == ComplexMode::Clique && !positive.empty()) {
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> nbr(n);  // (peer, edge id)
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      auto [u, v] = graph.edges[e];
      nbr[u].emplace_back(v, e);
      nbr[v].emplace_back(u, e);
    }
    for (auto& row : nbr) std::sort(row.begin(), row.end());
    auto find_edge = [&](std::size_t a, std::size_t b) -> std::size_t {
      const auto& row = nbr[a];
      auto it = std::lower_bound(row.begin(), row.end(), std::make_pair(b, std::size_t{0}));
      return it != row.end() && it->first == b ? it->second : SIZE_MAX;
    };
    struct Triangle {
      std::size_t level;
      std::size_t top;                    // largest-valued vertex
      std::vector<std::size_t> boundary;  // edge positions, ascending
    };
    std::vector<Triangle> triangles;
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      auto [u, v] = graph.edges[e];
      for (auto [w, ew] : nbr[v]) {
        if (w <= v) continue;
        std::size_t eu = find_edge(u, w);
        if (eu == SIZE_MAX) continue;
        std::vector<std::size_t> b{position[e], position[ew], position[eu]};
        std::sort(b.begin(), b.end());
        std::size_t level = std::max({edge_level[e], edge_level[ew], edge_level[eu]});
        triangles.push_back(Triangle{level, larger(view, larger(view, u, v), w), std::move(b)});
      }
    }
    std::stable_sort(triangles.begin(), triangles.end(),
                     [](const Triangle& a, const Triangle& b) { return a.level < b.level; });
    // Standard column reduction over GF(2); the pivot of each surviving
    // column is the youngest edge of the cycle it fills.
    std::vector<std::vector<std::size_t>> reduced_by_pivot(order.size());
    std::vector<char> has_pivot(order.size(), 0);
    std::vector<std::size_t> scratch;
    for (auto& tri : triangles) {
      auto col = std::move(tri.boundary);
      while (!col.empty() && has_pivot[col.back()]) {
        const auto& other = reduced_by_pivot[col.back()];
        scratch.clear();
        std::set_symmetric_difference(col.begin(), col.end(), other.begin(), other.end(),
                                      std::back_inserter(scratch));
        col.swap(scratch);
      }
      if (col.empty()) continue;
      std::size_t pivot = col.back();
      has_pivot[pivot] = 1;
      death_at[order[pivot]] = tri.level;
      killer[order[pivot]] = tri.top;
      reduced_by_pivot[pivot] = std::move(col);
    }
  }

  std::vector<Dim1Pair> pairs;
  pairs.reserve(positive.size());
  for (auto e : positive) {
    Dim1Pair p;
    p.edge = graph.edges[e];
    p.birth_node = larger(view, p.edge.first, p.edge.second);
    p.birth_level = edge_level[e];
    p.birth = view.thresholds[p.birth_level];
    p.essential = death_at[e] == SIZE_MAX;
    p.death_level = p.essential ? top : death_at[e];
    p.death = view.thresholds[p.death_level];
    if (!p.essential) p.death_node = larger(view, p.birth_node, killer[e]);
    pairs.push_back(p);
  }
  return pairs;
}

PersistenceDiagram compute_persistence(const FiltrationView& view, const UndirectedGraph& graph,
                                       ComplexMode mode) {
  PersistenceDiagram d;
  d.view_index = view.view_index;
  d.dim0 = persistence_0dim(view, graph);
  d.dim1 = persistence_1dim(view, graph, mode);
  return d;
}

namespace {

// Rank over GF(2) of a set of bit rows, by elimination on 64-bit words.
std::size_t gf2_rank(std::vector<std::vector<std::uint64_t>> rows) {
  std::size_t rank = 0;
  if (rows.empty()) return 0;
  std::size_t bits = rows[0].size() * 64;
  for (std::size_t bit = 0; bit < bits && rank < rows.size(); ++bit) {
    std::size_t word = bit / 64;
    std::uint64_t mask = std::uint64_t{1} << (bit % 64);
    std::size_t pick = rank;
    while (pick < rows.size() && !(rows[pick][word] & mask)) ++pick;
    if (pick == rows.size()) continue;
    std::swap(rows[rank], rows[pick]);
    for (std::size_t r = 0; r < rows.size(); ++r)
      if (r != rank && (rows[r][word] & mask))
        for (std::size_t w = 0; w < rows[r].size(); ++w) rows[r][w] ^= rows[rank][w];
    ++rank;
  }
  return rank;
}

}  // namespace

std::vector<BettiPoint> oracle_betti(const FiltrationView& view, const UndirectedGraph& graph,
                                     ComplexMode mode) {
  check_graph(view, graph);
  const std::size_t n = graph.nodes;
  if (n > kOracleMaxNodes)
    throw ContractError(fmt::format("oracle limited to {} nodes, got {}", kOracleMaxNodes, n));
  std::vector<BettiPoint> curve;
  for (double a : view.thresholds) {
    std::vector<char> in(n, 0);
    std::size_t vertices = 0;
    for (std::size_t v = 0; v < n; ++v)
      if (view.values[v] <= a) {
        in[v] = 1;
        ++vertices;
      }
    std::vector<Edge> kept;
    for (auto [u, v] : graph.edges)
      if (std::max(view.values[u], view.values[v]) <= a) kept.emplace_back(u, v);

    // Components by depth-first search over an adjacency matrix.
    std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
    for (auto [u, v] : kept) adj[u][v] = adj[v][u] = 1;
    std::vector<char> seen(n, 0);
    std::size_t components = 0;
    for (std::size_t s = 0; s < n; ++s) {
      if (!in[s] || seen[s]) continue;
      ++components;
      std::vector<std::size_t> stack{s};
      seen[s] = 1;
      while (!stack.empty()) {
        std::size_t x = stack.back();
        stack.pop_back();
        for (std::size_t y = 0; y < n; ++y)
          if (adj[x][y] && !seen[y]) {
            seen[y] = 1;
            stack.push_back(y);
          }
      }
    }
    std::size_t cycles = kept.size() + components - vertices;
    if (mode == ComplexMode::Clique && !kept.empty()) {
      std::size_t words = (kept.size() + 63) / 64;
      std::vector<std::vector<std::uint64_t>> rows;
      auto edge_index = [&](std::size_t u, std::size_t v) {
        Edge key{std::min(u, v), std::max(u, v)};
        return static_cast<std::size_t>(std::lower_bound(kept.begin(), kept.end(), key) -
                                        kept.begin());
      };
      for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v)
          for (std::size_t w = v + 1; w < n; ++w)
            if (adj[u][v] && adj[v][w] && adj[u][w]) {
              std::vector<std::uint64_t> row(words, 0);
              for (auto e : {edge_index(u, v), edge_index(v, w), edge_index(u, w)})
                row[e / 64] ^= std::uint64_t{1} << (e % 64);
              rows.push_back(std::move(row));
            }
      cycles -= gf2_rank(std::move(rows));
    }
    curve.push_back(BettiPoint{a, components, cycles});
  }
  return curve;
}

std::vector<BettiPoint> betti_from_diagram(const PersistenceDiagram& diagram,
                                           const FiltrationView& view) {
  std::vector<BettiPoint> curve;
  for (std::size_t j = 0; j < view.levels(); ++j) {
    BettiPoint b{view.thresholds[j], 0, 0};
    for (const auto& p : diagram.dim0)
      if (p.birth_level <= j && (p.essential || p.death_level > j)) ++b.beta0;
    for (const auto& p : diagram.dim1)
      if (p.birth_level <= j && (p.essential || p.death_level > j)) ++b.beta1;
    curve.push_back(b);
  }
  return curve;
}

Barcode to_barcode(const PersistenceDiagram& diagram, const FiltrationView& view) {
  Barcode code;
  code.view_index = diagram.view_index;
  code.lo = view.thresholds.front();
  code.hi = view.thresholds.back();
  for (const auto& p : diagram.dim0) code.bars.push_back(Bar{0, p.birth, p.death, p.essential});
  for (const auto& p : diagram.dim1) code.bars.push_back(Bar{1, p.birth, p.death, p.essential});
  return code;
}

std::string barcode_csv(std::span<const Barcode> barcodes) {
  std::string out = "view,dim,birth,death\n";
  for (const auto& code : barcodes)
    for (const auto& bar : code.bars)
      out += fmt::format("{},{},{},{}\n", code.view_index, bar.dim, bar.start, bar.end);
  return out;
}

std::string barcode_svg(std::span<const Barcode> barcodes) {
  constexpr double kWidth = 480, kLeft = 60, kRight = 20, kRow = 12, kGap = 4;
  constexpr double kHeader = 24, kAxis = 28;
  double plot = kWidth - kLeft - kRight;

  double height = 0;
  for (const auto& code : barcodes)
    height += kHeader + static_cast<double>(code.bars.size()) * kRow + kAxis;
  height = std::max(height, 1.0);

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "viewBox=\"0 0 {:.0f} {:.0f}\" font-family=\"sans-serif\" font-size=\"10\">\n",
      kWidth, height, kWidth, height);
  out += fmt::format("<rect x=\"0\" y=\"0\" width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n",
                     kWidth, height);
  double y = 0;
  for (const auto& code : barcodes) {
    double span = code.hi > code.lo ? code.hi - code.lo : 1.0;
    auto x_of = [&](double v) { return kLeft + (v - code.lo) / span * plot; };
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">view {}</text>\n", kLeft, y + 16,
                       code.view_index);
    y += kHeader;
    for (const auto& bar : code.bars) {
      double x0 = x_of(bar.start);
      double w = std::max(x_of(bar.end) - x0, 1.0);
      const char* color = bar.dim == 0 ? "red" : "blue";
      out += fmt::format(
          "<rect class=\"dim{}\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" "
          "fill=\"{}\"/>\n",
          bar.dim, x0, y + kGap / 2, w, kRow - kGap, color);
      y += kRow;
    }
    double axis_y = y + 6;
    out += fmt::format(
        "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"black\"/>\n", kLeft,
        axis_y, kLeft + plot, axis_y);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.4g}</text>\n",
                       kLeft, axis_y + 14, code.lo);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.4g}</text>\n",
                       kLeft + plot, axis_y + 14, code.hi);
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">threshold</text>\n",
                       kLeft - 6, axis_y + 4);
    y += kAxis;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace topogdn
