#include "topogdn/vectorize.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "topogdn/errors.hpp"

namespace topogdn {

namespace {

Tensor row(std::vector<double> values, bool grad = true) {
  std::size_t n = values.size();
  return Tensor::from({1, n}, std::move(values), grad);
}

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace

std::string family_name(TransformFamily family) {
  switch (family) {
    case TransformFamily::Triangle: return "triangle";
    case TransformFamily::Gaussian: return "gaussian";
    case TransformFamily::Line: return "line";
    case TransformFamily::RationalHat: return "rational-hat";
  }
  return "unknown";
}

TransformFamily parse_family(const std::string& name) {
  if (name == "triangle") return TransformFamily::Triangle;
  if (name == "gaussian") return TransformFamily::Gaussian;
  if (name == "line") return TransformFamily::Line;
  if (name == "rational-hat" || name == "rational_hat") return TransformFamily::RationalHat;
  throw ConfigError(fmt::format("unknown transform family '{}'", name));
}

PointTransform make_transform(TransformFamily family, std::size_t instance, std::size_t samples,
                              double sigma, double radius) {
  if (samples < 1) throw ConfigError("point transforms need at least one sample");
  PointTransform t;
  t.family = family;
  std::vector<double> gb(samples), gd(samples, 0.0), off(samples, 0.0);
  auto lin = [samples](std::size_t s) {
    return samples == 1 ? 0.5 : static_cast<double>(s) / static_cast<double>(samples - 1);
  };
  switch (family) {
    case TransformFamily::Triangle:
      for (std::size_t s = 0; s < samples; ++s) gb[s] = lin(s);
      break;
    case TransformFamily::Gaussian:
    case TransformFamily::RationalHat: {
      auto g = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(samples))));
      double shift = 0.25 * static_cast<double>(instance) / static_cast<double>(g);
      for (std::size_t s = 0; s < samples; ++s) {
        gb[s] = (static_cast<double>(s % g) + 0.5) / static_cast<double>(g) + shift;
        gd[s] = (static_cast<double>(s / g) + 0.5) / static_cast<double>(g) + shift;
      }
      break;
    }
    case TransformFamily::Line: {
      double angle = static_cast<double>(instance % 4) * std::numbers::pi / 4.0;
      for (std::size_t s = 0; s < samples; ++s) {
        gb[s] = std::cos(angle);
        gd[s] = std::sin(angle);
        off[s] = -lin(s);
      }
      break;
    }
  }
  t.grid_b = row(std::move(gb));
  t.grid_d = row(std::move(gd), family != TransformFamily::Triangle);
  t.offset = row(std::move(off), family == TransformFamily::Line);
  double width = family == TransformFamily::Gaussian ? sigma : radius;
  bool width_used = family == TransformFamily::Gaussian || family == TransformFamily::RationalHat;
  t.width = Tensor::from({1, 1}, {width}, width_used);
  return t;
}

std::vector<double> transform_point(const PointTransform& t, double b, double d) {
  if (b > d) throw ContractError(fmt::format("diagram point ({}, {}) has birth after death", b, d));
  std::size_t q = t.samples();
  std::vector<double> out(q);
  double width = t.width.values()[0];
  for (std::size_t s = 0; s < q; ++s) {
    double tb = t.grid_b.values()[s], td = t.grid_d.values()[s];
    switch (t.family) {
      case TransformFamily::Triangle:
        out[s] = relu(std::min(tb - b, d - tb));
        break;
      case TransformFamily::Gaussian: {
        double dist2 = (tb - b) * (tb - b) + (td - d) * (td - d);
        out[s] = std::exp(-dist2 / (2.0 * width * width));
        break;
      }
      case TransformFamily::Line:
        out[s] = tb * b + td * d + t.offset.values()[s];
        break;
      case TransformFamily::RationalHat: {
        double l1 = std::abs(tb - b) + std::abs(td - d);
        out[s] = 1.0 / (1.0 + l1) - 1.0 / (1.0 + std::abs(width - l1));
        break;
      }
    }
  }
  return out;
}

Tensor transform_points(const PointTransform& t, const Tensor& birth, const Tensor& death) {
  if (birth.rank() != 2 || birth.dim(1) != 1 || birth.shape() != death.shape())
    throw ContractError(fmt::format("transform expects matching P x 1 columns, got {} and {}",
                                    shape_str(birth.shape()), shape_str(death.shape())));
  switch (t.family) {
    case TransformFamily::Triangle: {
      Tensor tent = minimum(sub(t.grid_b, birth), sub(death, t.grid_b));
      return maximum(tent, Tensor::zeros({1, 1}));
    }
    case TransformFamily::Gaussian: {
      Tensor dist2 = add(square(sub(t.grid_b, birth)), square(sub(t.grid_d, death)));
      Tensor coef = reciprocal(scale(square(t.width), 2.0));
      return exp(neg(mul(dist2, coef)));
    }
    case TransformFamily::Line:
      return add(add(mul(birth, t.grid_b), mul(death, t.grid_d)), t.offset);
    case TransformFamily::RationalHat: {
      Tensor l1 = add(abs(sub(t.grid_b, birth)), abs(sub(t.grid_d, death)));
      return sub(reciprocal(add_scalar(l1, 1.0)),
                 reciprocal(add_scalar(abs(sub(t.width, l1)), 1.0)));
    }
  }
  throw ContractError("unknown transform family");
}

Tensor fuse(const Tensor& z, const TopoEmbedding& topo, std::size_t nodes_per_copy) {
  if (z.shape() != topo.per_node.shape())
    throw ContractError(fmt::format("cannot fuse features {} with topological features {}",
                                    shape_str(z.shape()), shape_str(topo.per_node.shape())));
  if (nodes_per_copy == 0 || z.dim(0) % nodes_per_copy != 0 ||
      topo.global.rank() != 2 || topo.global.dim(0) != z.dim(0) / nodes_per_copy ||
      topo.global.dim(1) != z.dim(1))
    throw ContractError(fmt::format("global features {} do not cover {} rows in copies of {}",
                                    shape_str(topo.global.shape()), z.dim(0), nodes_per_copy));
  std::vector<std::size_t> copy_of(z.dim(0));
  for (std::size_t m = 0; m < copy_of.size(); ++m) copy_of[m] = m / nodes_per_copy;
  return add(add(z, topo.per_node), index_rows(topo.global, copy_of));
}

TopoPooling::TopoPooling(std::size_t dim, VectorizeConfig config, Rng& rng)
    : dim_(dim), config_(std::move(config)) {
  if (dim == 0) throw ConfigError("topological pooling needs a positive feature width");
  if (config_.families.empty() || config_.instances_per_family == 0)
    throw ConfigError("at least one graph view is required");
  if (config_.samples_q == 0) throw ConfigError("samples_q must be positive");
  if (config_.filtrations == 0) throw ConfigError("graph filtrations must be at least 1");
  if (!(config_.gaussian_sigma > 0.0)) throw ConfigError("gaussian_sigma must be positive");
  std::size_t k = config_.views(), q = config_.samples_q;
  projection = uniform_param({dim, k}, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
  projection_bias = Tensor::zeros({1, k}, true);
  for (auto family : config_.families)
    for (std::size_t i = 0; i < config_.instances_per_family; ++i)
      transforms.push_back(
          make_transform(family, i, q, config_.gaussian_sigma, config_.rational_hat_r));
  double bound = 1.0 / std::sqrt(static_cast<double>(k * q));
  node_weight = uniform_param({k * q, dim}, bound, rng);
  node_bias = Tensor::zeros({1, dim}, true);
  global_weight = uniform_param({k * q, dim}, bound, rng);
  global_bias = Tensor::zeros({1, dim}, true);
}

Tensor TopoPooling::view_values(const Tensor& z) const {
  if (z.rank() != 2 || z.dim(1) != dim_)
    throw ContractError(fmt::format("pooling input {} does not have width {}",
                                    shape_str(z.shape()), dim_));
  return sigmoid(add(matmul(z, projection), projection_bias));
}

TopoEmbedding TopoPooling::forward(const Tensor& z, const UndirectedGraph& graph,
                                   std::size_t copies, TopoTrace* trace) const {
  Tensor values = view_values(z);
  const std::size_t m = z.dim(0), k = config_.views(), q = config_.samples_q;
  if (copies == 0 || graph.nodes * copies != m)
    throw ContractError(fmt::format("{} copies of a {}-node graph do not cover {} rows", copies,
                                    graph.nodes, m));
  UndirectedGraph all = copies == 1 ? graph : disjoint_union(graph, copies);
  auto views = make_views(values.values(), m, k, config_.filtrations);
  if (trace) {
    trace->views.clear();
    trace->diagrams.clear();
  }

  std::vector<Tensor> node_parts, global_parts;
  std::vector<std::size_t> column(m);
  for (std::size_t i = 0; i < k; ++i) {
    const FiltrationView& view = views[i];
    PersistenceDiagram diagram = compute_persistence(view, all, config_.mode);

    // Pair coordinates live in value space: births and deaths are the values
    // of the nodes that create and end each class, so gradients reach the
    // projection through them. Essential deaths sit at the top threshold,
    // carried by the largest-valued node.
    for (std::size_t r = 0; r < m; ++r) column[r] = r * k + i;
    Tensor f = take(values, column, {m, 1});
    std::size_t top_node = static_cast<std::size_t>(
        std::max_element(view.values.begin(), view.values.end()) - view.values.begin());
    const double top_offset = view.top() - view.values[top_node];
    auto deaths = [&](const std::vector<std::size_t>& node, const std::vector<char>& essential) {
      std::size_t p = node.size();
      std::vector<std::size_t> pick(p);
      std::vector<double> offset(p);
      for (std::size_t r = 0; r < p; ++r) {
        pick[r] = essential[r] ? top_node : node[r];
        offset[r] = essential[r] ? top_offset : 0.0;
      }
      return add(index_rows(f, pick), Tensor::from({p, 1}, std::move(offset)));
    };

    std::vector<std::size_t> birth0(m), death0(m);
    std::vector<char> essential0(m);
    for (std::size_t r = 0; r < m; ++r) {
      birth0[r] = diagram.dim0[r].creator;
      death0[r] = diagram.dim0[r].destroyer;
      essential0[r] = diagram.dim0[r].essential;
    }
    node_parts.push_back(
        transform_points(transforms[i], index_rows(f, birth0), deaths(death0, essential0)));

    if (diagram.dim1.empty()) {
      global_parts.push_back(Tensor::zeros({copies, q}));
    } else {
      std::size_t p = diagram.dim1.size();
      std::vector<std::size_t> birth1(p), death1(p), copy(p);
      std::vector<char> essential1(p);
      for (std::size_t r = 0; r < p; ++r) {
        birth1[r] = diagram.dim1[r].birth_node;
        death1[r] = diagram.dim1[r].death_node;
        essential1[r] = diagram.dim1[r].essential;
        copy[r] = diagram.dim1[r].edge.first / graph.nodes;
      }
      Tensor feats =
          transform_points(transforms[i], index_rows(f, birth1), deaths(death1, essential1));
      // Mean over each copy's cycles, so the scale does not grow with |E|.
      std::vector<double> inv(copies, 0.0);
      for (auto c : copy) inv[c] += 1.0;
      for (auto& c : inv) c = c > 0 ? 1.0 / c : 0.0;
      global_parts.push_back(
          mul(scatter_add_rows(feats, copy, copies), Tensor::from({copies, 1}, std::move(inv))));
    }
    if (trace) {
      trace->views.push_back(view);
      trace->diagrams.push_back(std::move(diagram));
    }
  }

  TopoEmbedding out;
  out.per_node = add(matmul(concat_cols(node_parts), node_weight), node_bias);
  out.global = add(matmul(concat_cols(global_parts), global_weight), global_bias);
  return out;
}

std::vector<Tensor*> TopoPooling::filtration_parameters() {
  return {&projection, &projection_bias};
}

std::vector<Tensor*> TopoPooling::smooth_parameters() {
  std::vector<Tensor*> out{&node_weight, &node_bias, &global_weight, &global_bias};
  for (auto& t : transforms) {
    out.push_back(&t.grid_b);
    if (t.grid_d.requires_grad()) out.push_back(&t.grid_d);
    if (t.offset.requires_grad()) out.push_back(&t.offset);
    if (t.width.requires_grad()) out.push_back(&t.width);
  }
  return out;
}

}  // namespace topogdn
