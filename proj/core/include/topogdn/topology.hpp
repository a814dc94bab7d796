#pragma once

// Sublevel-set persistence on sensor graphs.
//
// A node enters the filtration at the first threshold a_j with f(v) <= a_j;
// an edge enters once both endpoints have (the max of their levels). Nodes and
// edges entering at the same level are processed in ascending index order, and
// a merge kills the younger component: later birth level, then higher creator
// index. Every node creates exactly one dim-0 pair, so dim0[v] is node v's.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "topogdn/graphlearn.hpp"

namespace topogdn {

/// Simple undirected graph; edges stored once as (u, v) with u < v, sorted.
struct UndirectedGraph {
  std::size_t nodes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  static UndirectedGraph from_edges(std::size_t nodes,
                                    std::vector<std::pair<std::size_t, std::size_t>> edges);
};

/// Edge {i, j} present when either A_ij or A_ji is set.
UndirectedGraph symmetrize(const Adjacency& adjacency);
/// `copies` disjoint copies; copy b occupies nodes [b * N, (b + 1) * N).
UndirectedGraph disjoint_union(const UndirectedGraph& graph, std::size_t copies);

struct FiltrationView {
  std::size_t view_index = 0;
  std::vector<double> values;      // f_i per node
  std::vector<double> thresholds;  // strictly ascending, last >= max value
  bool degenerate = false;

  std::size_t levels() const { return thresholds.size(); }
  double top() const { return thresholds.back(); }
  /// Level at which each node enters.
  std::vector<std::size_t> entry_levels() const;
};

inline constexpr double kDegenerateSpread = 1e-9;

/// Thresholds at the filtrations + 1 uniform quantiles of `values` (linear
/// interpolation, duplicates dropped). All-equal values give the degenerate
/// pair {v, v + 1e-9}.
FiltrationView quantile_view(std::vector<double> values, std::size_t filtrations,
                             std::size_t view_index = 0);
/// One quantile view per column of a nodes x views value matrix (row-major).
std::vector<FiltrationView> make_views(std::span<const double> values, std::size_t nodes,
                                       std::size_t views, std::size_t filtrations);
/// View with caller-chosen thresholds; validates ordering and coverage.
FiltrationView explicit_view(std::vector<double> values, std::vector<double> thresholds,
                             std::size_t view_index = 0);

struct Dim0Pair {
  double birth = 0;
  double death = 0;
  std::size_t creator = 0;
  // Endpoint of the merging edge (or the creator) with the largest value;
  // its value is the death coordinate in value space. Unset for essentials.
  std::size_t destroyer = 0;
  bool essential = false;
  std::size_t birth_level = 0;
  std::size_t death_level = 0;
};

struct Dim1Pair {
  double birth = 0;
  double death = 0;
  bool essential = true;
  std::size_t birth_level = 0;
  std::size_t death_level = 0;
  std::pair<std::size_t, std::size_t> edge;  // the edge that closed the cycle
  std::size_t birth_node = 0;  // larger-valued endpoint of `edge`
  std::size_t death_node = 0;  // largest-valued vertex of the killing triangle; unset if essential
};

struct PersistenceDiagram {
  std::size_t view_index = 0;
  std::vector<Dim0Pair> dim0;  // indexed by creator node
  std::vector<Dim1Pair> dim1;
};

/// Graph: nodes and edges only (every cycle is essential).
/// Clique: triangles of the graph fill in and may kill cycles.
enum class ComplexMode { Graph, Clique };

std::vector<Dim0Pair> persistence_0dim(const FiltrationView& view, const UndirectedGraph& graph);
std::vector<Dim1Pair> persistence_1dim(const FiltrationView& view, const UndirectedGraph& graph,
                                       ComplexMode mode = ComplexMode::Graph);
PersistenceDiagram compute_persistence(const FiltrationView& view, const UndirectedGraph& graph,
                                       ComplexMode mode = ComplexMode::Graph);

struct BettiPoint {
  double threshold = 0;
  std::size_t beta0 = 0;
  std::size_t beta1 = 0;
  bool operator==(const BettiPoint&) const = default;
};

inline constexpr std::size_t kOracleMaxNodes = 64;

/// Brute force: rebuilds each sublevel complex from scratch and counts
/// components by search; beta1 = |E| - |V| + beta0 (minus the GF(2) rank of
/// the triangle boundaries in clique mode).
std::vector<BettiPoint> oracle_betti(const FiltrationView& view, const UndirectedGraph& graph,
                                     ComplexMode mode = ComplexMode::Graph);
/// Number of bars alive at each threshold.
std::vector<BettiPoint> betti_from_diagram(const PersistenceDiagram& diagram,
                                           const FiltrationView& view);

struct Bar {
  int dim = 0;
  double start = 0;
  double end = 0;
  bool essential = false;
};

struct Barcode {
  std::size_t view_index = 0;
  double lo = 0;  // first threshold
  double hi = 0;  // last threshold
  std::vector<Bar> bars;
};

Barcode to_barcode(const PersistenceDiagram& diagram, const FiltrationView& view);
/// Rows "view,dim,birth,death".
std::string barcode_csv(std::span<const Barcode> barcodes);
/// Horizontal bars, dim 0 red and dim 1 blue, x-axis in threshold units.
std::string barcode_svg(std::span<const Barcode> barcodes);

}  // namespace topogdn
