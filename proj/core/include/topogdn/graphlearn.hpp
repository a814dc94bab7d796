#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "topogdn/rng.hpp"
#include "topogdn/tensor.hpp"

namespace topogdn {

/// Cosine similarity with 1e-12 added to each norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Directed Top-K graph. neighbors[i] lists the peers row i selected
/// (A_ij = 1), in ascending index order; self-loops never appear.
struct Adjacency {
  std::size_t nodes = 0;
  std::size_t k = 0;
  std::vector<std::vector<std::size_t>> neighbors;

  bool has_edge(std::size_t i, std::size_t j) const;
  /// Dense N x N 0/1 matrix, row-major.
  std::vector<double> dense() const;
  static Adjacency from_dense(std::span<const double> matrix, std::size_t nodes);
  bool operator==(const Adjacency&) const = default;
};

/// Row i keeps the k most similar peers j != i, ties to the lower index.
/// k >= N is clamped to N - 1 with a logged warning.
Adjacency build_adjacency(std::span<const double> embeddings, std::size_t nodes, std::size_t dim,
                          std::size_t k);
Adjacency build_adjacency(const Tensor& embeddings, std::size_t k);

/// Top-K selection on a precomputed N x N similarity matrix (diagonal ignored).
Adjacency top_k_adjacency(std::span<const double> similarity, std::size_t nodes, std::size_t k);

/// Pairwise cosine matrix (N x N, diagonal included).
std::vector<double> similarity_matrix(std::span<const double> embeddings, std::size_t nodes,
                                      std::size_t dim);

/// Learnable sensor embeddings plus the adjacency derived from them.
class SensorGraph {
 public:
  SensorGraph(std::size_t nodes, std::size_t dim, std::size_t k, Rng& rng);

  void rebuild();
  /// Rebuilds once more and locks the adjacency against further rebuilds.
  void freeze();
  bool frozen() const { return frozen_; }
  /// Restores a stored structure (e.g. from a checkpoint) and freezes it.
  void set_adjacency(Adjacency adjacency);

  std::size_t nodes() const { return nodes_; }
  std::size_t dim() const { return dim_; }
  std::size_t k() const { return k_; }
  Tensor& embeddings() { return embeddings_; }
  const Tensor& embeddings() const { return embeddings_; }
  const Adjacency& adjacency() const { return adjacency_; }

 private:
  std::size_t nodes_;
  std::size_t dim_;
  std::size_t k_;
  Tensor embeddings_;
  Adjacency adjacency_;
  bool frozen_ = false;
};

/// Graphviz rendering: one node per sensor, edge i -> j for A_ij = 1.
std::string adjacency_to_dot(const Adjacency& adjacency, std::span<const std::string> names);

}  // namespace topogdn
