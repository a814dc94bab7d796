#include "topogdn/graphlearn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "topogdn/errors.hpp"

namespace topogdn {

namespace {
constexpr double kNormGuard = 1e-12;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ContractError(fmt::format("similarity of vectors of length {} and {}", a.size(),
                                    b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / ((std::sqrt(na) + kNormGuard) * (std::sqrt(nb) + kNormGuard));
}

bool Adjacency::has_edge(std::size_t i, std::size_t j) const {
  const auto& row = neighbors[i];
  return std::binary_search(row.begin(), row.end(), j);
}

std::vector<double> Adjacency::dense() const {
  std::vector<double> m(nodes * nodes, 0.0);
  for (std::size_t i = 0; i < nodes; ++i)
    for (auto j : neighbors[i]) m[i * nodes + j] = 1.0;
  return m;
}

Adjacency Adjacency::from_dense(std::span<const double> matrix, std::size_t nodes) {
  if (matrix.size() != nodes * nodes)
    throw ContractError(fmt::format("adjacency of {} entries for {} nodes", matrix.size(), nodes));
  Adjacency a;
  a.nodes = nodes;
  a.neighbors.resize(nodes);
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t j = 0; j < nodes; ++j)
      if (matrix[i * nodes + j] != 0.0) {
        if (i == j) throw ContractError(fmt::format("adjacency has a self-loop at {}", i));
        a.neighbors[i].push_back(j);
      }
  a.k = nodes ? a.neighbors[0].size() : 0;
  return a;
}

std::vector<double> similarity_matrix(std::span<const double> embeddings, std::size_t nodes,
                                      std::size_t dim) {
  std::vector<double> sim(nodes * nodes);
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t j = 0; j < nodes; ++j)
      sim[i * nodes + j] =
          cosine_similarity(embeddings.subspan(i * dim, dim), embeddings.subspan(j * dim, dim));
  return sim;
}

Adjacency top_k_adjacency(std::span<const double> similarity, std::size_t nodes, std::size_t k) {
  if (k < 1) throw ConfigError("top-k must be at least 1");
  if (nodes < 2) throw ConfigError("a sensor graph needs at least 2 nodes");
  if (similarity.size() != nodes * nodes)
    throw ContractError(
        fmt::format("{} similarity entries for {} nodes", similarity.size(), nodes));
  std::size_t kk = k;
  if (k >= nodes) {
    kk = nodes - 1;
    spdlog::warn("top-k {} >= {} nodes; clamping to {}", k, nodes, kk);
  }
  Adjacency a;
  a.nodes = nodes;
  a.k = kk;
  a.neighbors.resize(nodes);
  std::vector<std::size_t> peers;
  for (std::size_t i = 0; i < nodes; ++i) {
    peers.clear();
    for (std::size_t j = 0; j < nodes; ++j)
      if (j != i) peers.push_back(j);
    const double* row = similarity.data() + i * nodes;
    std::partial_sort(peers.begin(), peers.begin() + static_cast<std::ptrdiff_t>(kk), peers.end(),
                      [row](std::size_t x, std::size_t y) {
                        return row[x] != row[y] ? row[x] > row[y] : x < y;
                      });
    a.neighbors[i].assign(peers.begin(), peers.begin() + static_cast<std::ptrdiff_t>(kk));
    std::sort(a.neighbors[i].begin(), a.neighbors[i].end());
  }
  return a;
}

Adjacency build_adjacency(std::span<const double> embeddings, std::size_t nodes, std::size_t dim,
                          std::size_t k) {
  if (embeddings.size() != nodes * dim)
    throw ContractError(
        fmt::format("{} embedding values for {} nodes of dim {}", embeddings.size(), nodes, dim));
  return top_k_adjacency(similarity_matrix(embeddings, nodes, dim), nodes, k);
}

Adjacency build_adjacency(const Tensor& embeddings, std::size_t k) {
  if (embeddings.rank() != 2)
    throw ContractError("embeddings must be N x d, got " + shape_str(embeddings.shape()));
  return build_adjacency(embeddings.values(), embeddings.dim(0), embeddings.dim(1), k);
}

SensorGraph::SensorGraph(std::size_t nodes, std::size_t dim, std::size_t k, Rng& rng)
    : nodes_(nodes), dim_(dim), k_(k) {
  if (nodes < 2) throw ConfigError("a sensor graph needs at least 2 nodes");
  if (dim < 1) throw ConfigError("embedding dimension must be positive");
  if (k < 1) throw ConfigError("top-k must be at least 1");
  if (k >= nodes) {
    k_ = nodes - 1;
    spdlog::warn("top-k {} >= {} nodes; clamping to {}", k, nodes, k_);
  }
  std::vector<double> init(nodes * dim);
  double s = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& v : init) v = rng.normal() * s;
  embeddings_ = Tensor::from({nodes, dim}, std::move(init), true);
  rebuild();
}

void SensorGraph::rebuild() {
  if (frozen_) return;
  adjacency_ = build_adjacency(embeddings_, k_);
}

void SensorGraph::freeze() {
  rebuild();
  frozen_ = true;
}

void SensorGraph::set_adjacency(Adjacency adjacency) {
  if (adjacency.nodes != nodes_)
    throw ContractError(
        fmt::format("adjacency for {} nodes, graph has {}", adjacency.nodes, nodes_));
  adjacency_ = std::move(adjacency);
  frozen_ = true;
}

std::string adjacency_to_dot(const Adjacency& adjacency, std::span<const std::string> names) {
  auto label = [&](std::size_t i) {
    return i < names.size() ? names[i] : fmt::format("s{}", i);
  };
  std::string out = "digraph sensors {\n";
  for (std::size_t i = 0; i < adjacency.nodes; ++i) out += fmt::format("  \"{}\";\n", label(i));
  for (std::size_t i = 0; i < adjacency.nodes; ++i)
    for (auto j : adjacency.neighbors[i])
      out += fmt::format("  \"{}\" -> \"{}\";\n", label(i), label(j));
  out += "}\n";
  return out;
}

}  // namespace topogdn
