#include "topogdn/attention.hpp"

#include <cmath>

#include <fmt/format.h>

#include "topogdn/errors.hpp"

namespace topogdn {

namespace {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

EdgeList message_edges(const Adjacency& adjacency, std::size_t copies) {
  EdgeList edges;
  edges.nodes = adjacency.nodes * copies;
  for (std::size_t b = 0; b < copies; ++b) {
    std::size_t base = b * adjacency.nodes;
    for (std::size_t i = 0; i < adjacency.nodes; ++i)
      for (auto j : adjacency.neighbors[i]) {
        edges.src.push_back(base + j);
        edges.dst.push_back(base + i);
      }
  }
  return edges;
}

GraphAttention::GraphAttention(AttentionConfig config, Rng& rng) : config_(config) {
  if (config_.in_dim == 0 || config_.dim == 0)
    throw ConfigError("attention needs positive input and hidden widths");
  if (config_.hidden == 0) config_.hidden = config_.dim;
  if (config_.heads == 0) throw ConfigError("attention needs at least one head");
  std::size_t d = config_.dim, hid = config_.hidden;
  for (std::size_t h = 0; h < config_.heads; ++h) {
    AttentionHead head;
    head.weight = uniform_param({config_.in_dim, d}, 1.0 / std::sqrt(double(config_.in_dim)), rng);
    double bs = 1.0 / std::sqrt(2.0 * double(d));
    head.score_dst = uniform_param({d, hid}, bs, rng);
    head.score_src = uniform_param({d, hid}, bs, rng);
    head.score_bias = Tensor::zeros({1, hid}, true);
    head.score_out = uniform_param({hid, 1}, 1.0 / std::sqrt(double(hid)), rng);
    head.score_out_bias = Tensor::zeros({1, 1}, true);
    heads_.push_back(std::move(head));
  }
}

Tensor GraphAttention::forward(const Tensor& series, const Tensor& embeddings,
                               const EdgeList& edges, AttentionTrace* trace) const {
  if (series.rank() != 2 || series.dim(1) != config_.in_dim)
    throw ContractError(fmt::format("attention input {} does not have width {}",
                                    shape_str(series.shape()), config_.in_dim));
  std::size_t m = series.dim(0);
  if (embeddings.rank() != 2 || embeddings.dim(0) != m || embeddings.dim(1) != config_.dim)
    throw ContractError(fmt::format("sensor embeddings {} do not match {} nodes of width {}",
                                    shape_str(embeddings.shape()), m, config_.dim));
  if (edges.nodes != m)
    throw ContractError(fmt::format("edge list covers {} nodes, input has {}", edges.nodes, m));
  std::vector<char> has_in(m, 0);
  for (auto i : edges.dst) has_in[i] = 1;
  for (std::size_t i = 0; i < m; ++i)
    if (!has_in[i])
      throw ConfigError(fmt::format("node {} has an empty neighborhood", i));

  if (trace) trace->alpha.clear();
  Tensor total;
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const AttentionHead& p = heads_[h];
    Tensor hidden = matmul(series, p.weight);     // M x d
    Tensor fused = add(hidden, embeddings);       // g = c + h
    Tensor proj_dst = matmul(fused, p.score_dst);  // M x hid
    Tensor proj_src = matmul(fused, p.score_src);
    Tensor pre = add(add(index_rows(proj_dst, edges.dst), index_rows(proj_src, edges.src)),
                     p.score_bias);
    Tensor score = add(matmul(leaky_relu(pre), p.score_out), p.score_out_bias);  // E x 1
    Tensor alpha = segment_softmax(leaky_relu(score), edges.dst, m);
    if (trace) trace->alpha.emplace_back(alpha.values().begin(), alpha.values().end());
    Tensor messages = mul(index_rows(hidden, edges.src), alpha);  // E x d
    Tensor z = sigmoid(scatter_add_rows(messages, edges.dst, m));
    total = h == 0 ? z : add(total, z);
  }
  if (heads_.size() == 1) return total;
  return scale(total, 1.0 / static_cast<double>(heads_.size()));
}

std::vector<double> node_hidden(const Tensor& weight, std::span<const double> series) {
  if (weight.rank() != 2 || weight.dim(0) != series.size())
    throw ContractError(fmt::format("projection {} cannot map a series of length {}",
                                    shape_str(weight.shape()), series.size()));
  std::size_t d = weight.dim(1);
  std::vector<double> h(d, 0.0);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < series.size(); ++c) h[r] += weight.at(c, r) * series[c];
  return h;
}

std::vector<double> fuse_embedding(std::span<const double> embedding,
                                   std::span<const double> hidden) {
  if (embedding.size() != hidden.size())
    throw ContractError(fmt::format("cannot fuse embedding of length {} with hidden of length {}",
                                    embedding.size(), hidden.size()));
  std::vector<double> g(hidden.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = embedding[i] + hidden[i];
  return g;
}

double attention_score(const AttentionHead& head, std::span<const double> g_i,
                       std::span<const double> g_j) {
  std::size_t d = head.score_dst.dim(0), hid = head.score_dst.dim(1);
  if (g_i.size() != d || g_j.size() != d)
    throw ContractError("attention_score: fused vectors must have the embedding width");
  std::vector<double> concat(g_i.begin(), g_i.end());
  concat.insert(concat.end(), g_j.begin(), g_j.end());
  double out = head.score_out_bias[0];
  for (std::size_t u = 0; u < hid; ++u) {
    double acc = head.score_bias[u];
    for (std::size_t r = 0; r < 2 * d; ++r) {
      double w = r < d ? head.score_dst.at(r, u) : head.score_src.at(r - d, u);
      acc += concat[r] * w;
    }
    double act = acc >= 0.0 ? acc : kLeakySlope * acc;
    out += act * head.score_out[u];
  }
  return out;
}

}  // namespace topogdn
