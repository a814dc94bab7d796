#pragma once

// Persistence pairs to fixed-size vectors, and the pooling layer that ties
// view projection, persistence and vectorization together.

#include <cstddef>
#include <string>
#include <vector>

#include "topogdn/rng.hpp"
#include "topogdn/tensor.hpp"
#include "topogdn/topology.hpp"

namespace topogdn {

enum class TransformFamily { Triangle, Gaussian, Line, RationalHat };

std::string family_name(TransformFamily family);
/// Accepts "triangle", "gaussian", "line", "rational-hat".
TransformFamily parse_family(const std::string& name);

/// One instance of a point transformation with q samples. Every tensor is
/// 1 x q except `width` (1 x 1). Meaning per family:
///   triangle:     grid_b = sample positions t
///   gaussian:     (grid_b, grid_d) = 2-D sample points, width = sigma
///   line:         (grid_b, grid_d) = line directions w, offset = per-line b
///   rational-hat: (grid_b, grid_d) = 2-D sample points, width = r
struct PointTransform {
  TransformFamily family = TransformFamily::Triangle;
  Tensor grid_b;
  Tensor grid_d;
  Tensor offset;
  Tensor width;

  std::size_t samples() const { return grid_b.numel(); }
};

/// Initial parameters for instance `instance` of a family.
PointTransform make_transform(TransformFamily family, std::size_t instance, std::size_t samples,
                              double sigma, double radius);

/// Plain evaluation at one diagram point (b, d). Throws ContractError if b > d.
std::vector<double> transform_point(const PointTransform& transform, double birth, double death);
/// Differentiable evaluation on P points given as P x 1 columns; returns P x q.
Tensor transform_points(const PointTransform& transform, const Tensor& birth, const Tensor& death);

struct VectorizeConfig {
  std::vector<TransformFamily> families{TransformFamily::Triangle, TransformFamily::Gaussian,
                                        TransformFamily::Line, TransformFamily::RationalHat};
  std::size_t instances_per_family = 3;
  std::size_t samples_q = 16;
  double gaussian_sigma = 0.1;
  double rational_hat_r = 0.5;
  std::size_t filtrations = 8;
  ComplexMode mode = ComplexMode::Graph;

  std::size_t views() const { return families.size() * instances_per_family; }
};

/// Per-node and per-graph topological features. `global` has one row per
/// graph copy in the batch; node m belongs to copy m / nodes_per_copy.
struct TopoEmbedding {
  Tensor per_node;  // M x d
  Tensor global;    // B x d
};

struct TopoTrace {
  std::vector<FiltrationView> views;
  std::vector<PersistenceDiagram> diagrams;
};

/// p = Z + per_node + global broadcast to each copy's nodes.
Tensor fuse(const Tensor& z, const TopoEmbedding& topo, std::size_t nodes_per_copy);

class TopoPooling {
 public:
  TopoPooling(std::size_t dim, VectorizeConfig config, Rng& rng);

  /// z: M x d node features of `copies` disjoint graphs sharing `graph`'s
  /// structure (graph covers one copy). Views are computed over the union.
  TopoEmbedding forward(const Tensor& z, const UndirectedGraph& graph, std::size_t copies,
                        TopoTrace* trace = nullptr) const;

  /// Projection to view values only: M x k, each in (0, 1).
  Tensor view_values(const Tensor& z) const;

  const VectorizeConfig& config() const { return config_; }
  std::size_t dim() const { return dim_; }

  Tensor projection;       // d x k
  Tensor projection_bias;  // 1 x k
  std::vector<PointTransform> transforms;  // one per view
  Tensor node_weight;      // (k q) x d
  Tensor node_bias;        // 1 x d
  Tensor global_weight;    // (k q) x d
  Tensor global_bias;      // 1 x d

  /// Learnable tensors whose gradients flow through the persistence
  /// coordinates; their derivatives are only piecewise defined.
  std::vector<Tensor*> filtration_parameters();
  std::vector<Tensor*> smooth_parameters();

 private:
  std::size_t dim_;
  VectorizeConfig config_;
};

}  // namespace topogdn
