#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "topogdn/graphlearn.hpp"
#include "topogdn/rng.hpp"
#include "topogdn/tensor.hpp"

namespace topogdn {

/// Directed message edges over `nodes` nodes: information flows src -> dst,
/// and dst aggregates over all edges that end at it.
struct EdgeList {
  std::size_t nodes = 0;
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;

  std::size_t size() const { return src.size(); }
};

/// Edges j -> i for every A_ij = 1, replicated over `copies` disjoint
/// blocks of adjacency.nodes nodes each (batched graphs).
EdgeList message_edges(const Adjacency& adjacency, std::size_t copies = 1);

struct AttentionConfig {
  std::size_t in_dim = 0;  // window width w
  std::size_t dim = 0;     // hidden width d, equal to the sensor-embedding width
  std::size_t hidden = 0;  // score feed-forward width; 0 means `dim`
  std::size_t heads = 1;
};

/// Learnable tensors of one attention head.
struct AttentionHead {
  Tensor weight;          // in_dim x d; h_i = weight^T Y_i
  Tensor score_dst;       // d x hidden, applied to g_i
  Tensor score_src;       // d x hidden, applied to g_j
  Tensor score_bias;      // 1 x hidden
  Tensor score_out;       // hidden x 1
  Tensor score_out_bias;  // 1 x 1
};

/// Per-edge attention coefficients of each head from the latest forward().
struct AttentionTrace {
  std::vector<std::vector<double>> alpha;
};

class GraphAttention {
 public:
  GraphAttention(AttentionConfig config, Rng& rng);

  /// Y: M x in_dim node series, C: M x d sensor embeddings (row per node).
  /// Returns Z: M x d, the head average of sigmoid(sum_j alpha_ij h_j).
  Tensor forward(const Tensor& series, const Tensor& embeddings, const EdgeList& edges,
                 AttentionTrace* trace = nullptr) const;

  const AttentionConfig& config() const { return config_; }
  std::vector<AttentionHead>& heads() { return heads_; }
  const std::vector<AttentionHead>& heads() const { return heads_; }

 private:
  AttentionConfig config_;
  std::vector<AttentionHead> heads_;
};

// Plain-vector evaluations of the individual steps, used as references.

/// h = W Y for the in_dim x d weight layout of AttentionHead.
std::vector<double> node_hidden(const Tensor& weight, std::span<const double> series);
/// g = c + h.
std::vector<double> fuse_embedding(std::span<const double> embedding, std::span<const double> hidden);
/// Feed-forward on the explicit concatenation [g_i || g_j].
double attention_score(const AttentionHead& head, std::span<const double> g_i,
                       std::span<const double> g_j);

}  // namespace topogdn
