#include "topogdn/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "topogdn/errors.hpp"

namespace topogdn {

using detail::Storage;
using StoragePtr = std::shared_ptr<Storage>;

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

thread_local Tape* g_active_tape = nullptr;

void check_shape(const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
}

StoragePtr make_storage(Shape shape, std::vector<double> values) {
  auto s = std::make_shared<Storage>();
  s->shape = std::move(shape);
  s->values = std::move(values);
  return s;
}

StoragePtr make_output(Shape shape) {
  std::size_t n = shape_numel(shape);
  return make_storage(std::move(shape), std::vector<double>(n, 0.0));
}

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

/// Records an entry when gradients are needed and returns the output handle.
Tensor finish(const char* op, StoragePtr out, std::vector<StoragePtr> inputs, bool grad,
              std::function<void(Storage&)> backprop) {
  if (grad) {
    out->requires_grad = true;
    g_active_tape->record(Tape::Entry{op, std::move(inputs), out, std::move(backprop)});
  }
  return Tensor(std::move(out));
}

// ---- broadcasting -------------------------------------------------------

struct Broadcast {
  Shape out;
  bool same = true;
  std::vector<std::size_t> sa, sb;  // zero stride on broadcast dimensions; only when !same

  /// Calls fn(flat, ia, ib) for every output element in row-major order.
  template <class Fn>
  void visit(Fn&& fn) const {
    std::size_t n = shape_numel(out);
    if (same) {
      for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
      return;
    }
    std::size_t rank = out.size();
    std::size_t inner = out[rank - 1], ia_step = sa[rank - 1], ib_step = sb[rank - 1];
    std::vector<std::size_t> idx(rank, 0);
    std::size_t pa = 0, pb = 0;
    for (std::size_t flat = 0; flat < n; flat += inner) {
      for (std::size_t j = 0; j < inner; ++j) fn(flat + j, pa + j * ia_step, pb + j * ib_step);
      for (std::size_t i = rank - 1; i-- > 0;) {
        ++idx[i];
        pa += sa[i];
        pb += sb[i];
        if (idx[i] < out[i]) break;
        pa -= sa[i] * idx[i];
        pb -= sb[i] * idx[i];
        idx[i] = 0;
      }
    }
  }
};

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    return bc;
  }
  bc.same = false;
  std::size_t rank = std::max(a.size(), b.size());
  bc.out.assign(rank, 1);
  auto dim_of = [rank](const Shape& s, std::size_t i) -> std::size_t {
    std::size_t off = rank - s.size();
    return i < off ? 1 : s[i - off];
  };
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t da = dim_of(a, i), db = dim_of(b, i);
    if (da != db && da != 1 && db != 1)
      throw DimensionError(fmt::format("{}: shapes {} and {} are not broadcast-compatible", op,
                                       shape_str(a), shape_str(b)));
    bc.out[i] = std::max(da, db);
  }
  auto strides = [&](const Shape& s) {
    std::vector<std::size_t> st(rank, 0);
    std::size_t acc = 1;
    for (std::size_t i = rank; i-- > 0;) {
      std::size_t d = dim_of(s, i);
      st[i] = d == 1 ? 0 : acc;
      acc *= d;
    }
    return st;
  };
  bc.sa = strides(a);
  bc.sb = strides(b);
  if (rank == 0) bc.same = true;
  return bc;
}

/// Elementwise binary op. `fwd(a, b)` gives the value; `dfa`/`dfb` give the
/// partials given (a, b, out).
template <class F, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F fwd, DA dfa, DB dfb) {
  Broadcast bc = broadcast(a.shape(), b.shape(), op);
  auto out = make_output(bc.out);
  const double* av = a.storage()->values.data();
  const double* bv = b.storage()->values.data();
  double* ov = out->values.data();
  if (bc.same) {
    std::size_t n = out->values.size();
    for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(av[i], bv[i]);
  } else {
    bc.visit([&](std::size_t i, std::size_t ia, std::size_t ib) { ov[i] = fwd(av[ia], bv[ib]); });
  }
  bool grad = wants_grad({&a, &b});
  auto sa = a.storage(), sb = b.storage();
  return finish(op, out, {sa, sb}, grad,
                [sa, sb, bc = std::move(bc), dfa, dfb](Storage& o) {
                  const double* g = o.grad.data();
                  const double* x = sa->values.data();
                  const double* y = sb->values.data();
                  const double* z = o.values.data();
                  double* ga = sa->requires_grad ? sa->grad_buffer() : nullptr;
                  double* gb = sb->requires_grad ? sb->grad_buffer() : nullptr;
                  bc.visit([&](std::size_t i, std::size_t ia, std::size_t ib) {
                    if (ga) ga[ia] += g[i] * dfa(x[ia], y[ib], z[i]);
                    if (gb) gb[ib] += g[i] * dfb(x[ia], y[ib], z[i]);
                  });
                });
}

/// Elementwise unary op; `df(x, y)` is the derivative given input and output.
template <class F, class DF>
Tensor unary(const char* op, const Tensor& x, F fwd, DF df) {
  auto out = make_output(x.shape());
  const auto& xv = x.storage()->values;
  for (std::size_t i = 0; i < xv.size(); ++i) out->values[i] = fwd(xv[i]);
  bool grad = wants_grad({&x});
  auto sx = x.storage();
  return finish(op, out, {sx}, grad, [sx, df](Storage& o) {
    double* gx = sx->grad_buffer();
    for (std::size_t i = 0; i < o.values.size(); ++i)
      gx[i] += o.grad[i] * df(sx->values[i], o.values[i]);
  });
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw DimensionError(
        fmt::format("{}: expected rank {}, got shape {}", op, rank, shape_str(t.shape())));
}

}  // namespace

// ---- Tensor -------------------------------------------------------------

Tensor::Tensor() : s_(make_storage({}, {0.0})) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  std::size_t n = shape_numel(shape);
  Tensor t(make_storage(std::move(shape), std::vector<double>(n, value)));
  t.s_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != values.size())
    throw DimensionError(fmt::format("shape {} needs {} values, got {}", shape_str(shape),
                                     shape_numel(shape), values.size()));
  Tensor t(make_storage(std::move(shape), std::move(values)));
  t.s_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  Tensor t(make_storage({}, {value}));
  t.s_->requires_grad = requires_grad;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank())
    throw DimensionError(fmt::format("axis {} out of range for {}", axis, shape_str(shape())));
  return s_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1)
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return s_->values[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return s_->values[row * s_->shape.back() + col];
}

Tensor& Tensor::set_requires_grad(bool on) {
  s_->requires_grad = on;
  return *this;
}

std::span<const double> Tensor::grad() const {
  if (s_->grad.empty()) s_->grad.assign(s_->values.size(), 0.0);
  return s_->grad;
}

void Tensor::zero_grad() {
  if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(make_storage(s_->shape, s_->values)); }

// ---- Tape ---------------------------------------------------------------

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) {
    entries_.clear();
    throw ContractError("backward(): loss is not connected to the tape");
  }
  loss.storage()->grad_buffer()[0] += 1.0;
  for (std::size_t i = entries_.size(); i-- > 0;) {
    Entry& e = entries_[i];
    if (observer_) observer_(e);
    if (e.output->grad.empty()) {
      // Unreached from the loss; still materialize input grads so every
      // requires_grad leaf has a buffer.
      for (auto& in : e.inputs)
        if (in->requires_grad) in->grad_buffer();
      continue;
    }
    e.backprop(*e.output);
  }
  entries_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoTapeScope::NoTapeScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoTapeScope::~NoTapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss) {
  if (g_active_tape == nullptr) throw ContractError("backward(): no active tape");
  g_active_tape->backward(loss);
}

// ---- linear algebra -----------------------------------------------------

/// C (m x n) += A (m x k) * B (k x n), all row-major. Four rows of C share
/// each pass over a row of B.
void gemm_accumulate(double* __restrict C, const double* __restrict A,
                     const double* __restrict B, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* __restrict c0 = C + i * n;
    double* __restrict c1 = c0 + n;
    double* __restrict c2 = c1 + n;
    double* __restrict c3 = c2 + n;
    const double* a = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      double a0 = a[p], a1 = a[k + p], a2 = a[2 * k + p], a3 = a[3 * k + p];
      const double* __restrict brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        double b = brow[j];
        c0[j] += a0 * b;
        c1[j] += a1 * b;
        c2[j] += a2 * b;
        c3[j] += a3 * b;
      }
    }
  }
  for (; i < m; ++i) {
    double* __restrict crow = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double aip = A[i * k + p];
      const double* __restrict brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError(fmt::format("matmul: inner dimensions disagree for {} and {}",
                                     shape_str(a.shape()), shape_str(b.shape())));
  auto out = make_output({m, n});
  const double* A = a.values().data();
  const double* B = b.values().data();
  double* C = out->values.data();
  gemm_accumulate(C, A, B, m, k, n);
  auto sa = a.storage(), sb = b.storage();
  return finish("matmul", out, {sa, sb}, wants_grad({&a, &b}), [sa, sb, m, k, n](Storage& o) {
    const double* G = o.grad.data();
    if (sa->requires_grad) {
      double* GA = sa->grad_buffer();
      const double* B = sb->values.data();
      std::vector<double> bt(k * n);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
      gemm_accumulate(GA, G, bt.data(), m, n, k);
    }
    if (sb->requires_grad) {
      double* GB = sb->grad_buffer();
      const double* A = sa->values.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double aip = A[i * k + p];
          if (aip == 0.0) continue;
          const double* grow = G + i * n;
          double* gbrow = GB + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  std::size_t r = x.dim(0), c = x.dim(1);
  auto out = make_output({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out->values[j * r + i] = x.values()[i * c + j];
  auto sx = x.storage();
  return finish("transpose", out, {sx}, wants_grad({&x}), [sx, r, c](Storage& o) {
    double* g = sx->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_shape(shape);
  if (shape_numel(shape) != x.numel())
    throw DimensionError(fmt::format("reshape: cannot view {} as {}", shape_str(x.shape()),
                                     shape_str(shape)));
  auto out = make_storage(std::move(shape), x.storage()->values);
  auto sx = x.storage();
  return finish("reshape", out, {sx}, wants_grad({&x}), [sx](Storage& o) {
    double* g = sx->grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

// ---- elementwise --------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

// Ties route the gradient to the first argument.
Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary(
      "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary(
      "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      "add_scalar", x, [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary(
      "leaky_relu", x, [slope](double v) { return v >= 0.0 ? v : slope * v; },
      [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor abs(const Tensor& x) {
  return unary(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor reciprocal(const Tensor& x) {
  return unary(
      "reciprocal", x, [](double v) { return 1.0 / v; },
      [](double, double y) { return -y * y; });
}

// ---- reductions ---------------------------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  auto out = make_storage({}, {acc});
  auto sx = x.storage();
  return finish("sum", out, {sx}, wants_grad({&x}), [sx](Storage& o) {
    double* g = sx->grad_buffer();
    for (std::size_t i = 0; i < sx->values.size(); ++i) g[i] += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  double n = static_cast<double>(x.numel());
  auto out = make_storage({}, {acc / n});
  auto sx = x.storage();
  return finish("mean", out, {sx}, wants_grad({&x}), [sx, n](Storage& o) {
    double* g = sx->grad_buffer();
    double share = o.grad[0] / n;
    for (std::size_t i = 0; i < sx->values.size(); ++i) g[i] += share;
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank())
    throw DomainError(
        fmt::format("softmax: axis {} invalid for shape {}", axis, shape_str(x.shape())));
  const Shape& sh = x.shape();
  std::size_t len = sh[axis];
  if (len == 0) throw DomainError("softmax: empty axis slice");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= sh[i];
  for (std::size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
  auto out = make_output(sh);
  const auto& xv = x.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        double e = std::exp(xv[base + j * inner] - mx);
        out->values[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out->values[base + j * inner] /= total;
    }
  auto sx = x.storage();
  return finish("softmax", out, {sx}, wants_grad({&x}),
                [sx, outer, inner, len](Storage& o) {
                  double* g = sx->grad_buffer();
                  for (std::size_t ob = 0; ob < outer; ++ob)
                    for (std::size_t in = 0; in < inner; ++in) {
                      std::size_t base = ob * len * inner + in;
                      double dot = 0.0;
                      for (std::size_t j = 0; j < len; ++j)
                        dot += o.grad[base + j * inner] * o.values[base + j * inner];
                      for (std::size_t j = 0; j < len; ++j) {
                        std::size_t p = base + j * inner;
                        g[p] += o.values[p] * (o.grad[p] - dot);
                      }
                    }
                });
}

// ---- indexing -----------------------------------------------------------

Tensor index_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "index_rows");
  std::size_t r = x.dim(0), c = x.dim(1);
  if (rows.empty()) throw DimensionError("index_rows: empty index");
  auto out = make_output({rows.size(), c});
  for (std::size_t e = 0; e < rows.size(); ++e) {
    if (rows[e] >= r)
      throw DimensionError(fmt::format("index_rows: row {} out of range {}", rows[e], r));
    std::copy_n(x.values().data() + rows[e] * c, c, out->values.data() + e * c);
  }
  auto sx = x.storage();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return finish("index_rows", out, {sx}, wants_grad({&x}),
                [sx, idx = std::move(idx), c](Storage& o) {
                  double* g = sx->grad_buffer();
                  for (std::size_t e = 0; e < idx.size(); ++e)
                    for (std::size_t j = 0; j < c; ++j) g[idx[e] * c + j] += o.grad[e * c + j];
                });
}

Tensor scatter_add_rows(const Tensor& x, std::span<const std::size_t> rows,
                        std::size_t out_rows) {
  require_rank(x, 2, "scatter_add_rows");
  std::size_t e_count = x.dim(0), c = x.dim(1);
  if (rows.size() != e_count)
    throw DimensionError(fmt::format("scatter_add_rows: {} indices for {} rows", rows.size(),
                                     e_count));
  auto out = make_output({out_rows, c});
  for (std::size_t e = 0; e < e_count; ++e) {
    if (rows[e] >= out_rows)
      throw DimensionError(fmt::format("scatter_add_rows: row {} out of range {}", rows[e],
                                       out_rows));
    for (std::size_t j = 0; j < c; ++j) out->values[rows[e] * c + j] += x.values()[e * c + j];
  }
  auto sx = x.storage();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return finish("scatter_add_rows", out, {sx}, wants_grad({&x}),
                [sx, idx = std::move(idx), c](Storage& o) {
                  double* g = sx->grad_buffer();
                  for (std::size_t e = 0; e < idx.size(); ++e)
                    for (std::size_t j = 0; j < c; ++j) g[e * c + j] += o.grad[idx[e] * c + j];
                });
}

Tensor take(const Tensor& x, std::span<const std::size_t> index, Shape shape) {
  check_shape(shape);
  if (shape_numel(shape) != index.size())
    throw DimensionError(fmt::format("take: {} indices cannot fill shape {}", index.size(),
                                     shape_str(shape)));
  auto out = make_output(std::move(shape));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.numel())
      throw DimensionError(fmt::format("take: index {} out of range {}", index[i], x.numel()));
    out->values[i] = x.values()[index[i]];
  }
  auto sx = x.storage();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return finish("take", out, {sx}, wants_grad({&x}), [sx, idx = std::move(idx)](Storage& o) {
    double* g = sx->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += o.grad[i];
  });
}

Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment,
                       std::size_t segments) {
  std::size_t n = scores.numel();
  if (segment.size() != n)
    throw DimensionError(
        fmt::format("segment_softmax: {} segment ids for {} scores", segment.size(), n));
  std::vector<double> mx(segments, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < n; ++e) {
    if (segment[e] >= segments)
      throw DimensionError(fmt::format("segment_softmax: segment {} out of range {}",
                                       segment[e], segments));
    mx[segment[e]] = std::max(mx[segment[e]], scores.values()[e]);
  }
  auto out = make_output(scores.shape());
  std::vector<double> total(segments, 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    double v = std::exp(scores.values()[e] - mx[segment[e]]);
    out->values[e] = v;
    total[segment[e]] += v;
  }
  for (std::size_t e = 0; e < n; ++e) out->values[e] /= total[segment[e]];
  auto sx = scores.storage();
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return finish("segment_softmax", out, {sx}, wants_grad({&scores}),
                [sx, seg = std::move(seg), segments](Storage& o) {
                  std::vector<double> dot(segments, 0.0);
                  for (std::size_t e = 0; e < seg.size(); ++e)
                    dot[seg[e]] += o.grad[e] * o.values[e];
                  double* g = sx->grad_buffer();
                  for (std::size_t e = 0; e < seg.size(); ++e)
                    g[e] += o.values[e] * (o.grad[e] - dot[seg[e]]);
                });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  std::size_t rows = parts[0].rank() == 2 ? parts[0].dim(0) : 0;
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows)
      throw DimensionError(fmt::format("concat_cols: row count {} vs {}", p.dim(0), rows));
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  auto out = make_output({rows, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * widths[k], widths[k], out->values.data() + r * total + off);
    off += widths[k];
  }
  bool grad = false;
  std::vector<StoragePtr> inputs;
  for (const auto& p : parts) {
    grad = grad || wants_grad({&p});
    inputs.push_back(p.storage());
  }
  auto ins = inputs;
  return finish("concat_cols", out, std::move(inputs), grad,
                [ins, widths, rows, total](Storage& o) {
                  std::size_t off = 0;
                  for (std::size_t k = 0; k < ins.size(); ++k) {
                    if (ins[k]->requires_grad) {
                      double* g = ins[k]->grad_buffer();
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < widths[k]; ++j)
                          g[r * widths[k] + j] += o.grad[r * total + off + j];
                    }
                    off += widths[k];
                  }
                });
}

Tensor conv1d_replicate(const Tensor& x, const Tensor& kernel, std::size_t dilation) {
  require_rank(x, 2, "conv1d_replicate");
  std::size_t rows = x.dim(0), w = x.dim(1), wp = kernel.numel();
  if (dilation == 0) throw DimensionError("conv1d_replicate: dilation must be positive");
  if (w < (wp - 1) * dilation + 1)
    throw DimensionError(fmt::format(
        "conv1d_replicate: window {} shorter than effective kernel width {}", w,
        (wp - 1) * dilation + 1));
  auto out = make_output({rows, w});
  const double* X = x.values().data();
  const double* K = kernel.values().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < w; ++t) {
      double acc = 0.0;
      for (std::size_t j = 0; j < wp; ++j)
        acc += X[r * w + std::min(t + j * dilation, w - 1)] * K[j];
      out->values[r * w + t] = acc;
    }
  auto sx = x.storage(), sk = kernel.storage();
  return finish("conv1d_replicate", out, {sx, sk}, wants_grad({&x, &kernel}),
                [sx, sk, rows, w, wp, dilation](Storage& o) {
                  const double* G = o.grad.data();
                  double* gx = sx->requires_grad ? sx->grad_buffer() : nullptr;
                  double* gk = sk->requires_grad ? sk->grad_buffer() : nullptr;
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t t = 0; t < w; ++t) {
                      double g = G[r * w + t];
                      for (std::size_t j = 0; j < wp; ++j) {
                        std::size_t src = r * w + std::min(t + j * dilation, w - 1);
                        if (gx) gx[src] += g * sk->values[j];
                        if (gk) gk[j] += g * sx->values[src];
                      }
                    }
                });
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape())
    throw DimensionError(fmt::format("mse_loss: prediction {} vs target {}",
                                     shape_str(prediction.shape()), shape_str(target.shape())));
  return mean(square(sub(prediction, target)));
}

// ---- checkpoint ---------------------------------------------------------

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  bool done() const { return pos_ == data_.size(); }

  std::uint64_t uint(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) {
    if (data_.size() - pos_ < n)
      throw ParseError(fmt::format("{}: truncated checkpoint at byte {}", path_, pos_));
  }

  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, std::span<const NamedTensor> tensors) {
  std::string buf = "TGDN";
  put_u32(buf, kCheckpointVersion);
  for (const auto& nt : tensors) {
    put_u32(buf, static_cast<std::uint32_t>(nt.name.size()));
    buf += nt.name;
    put_u32(buf, static_cast<std::uint32_t>(nt.tensor.rank()));
    for (auto d : nt.tensor.shape()) put_u64(buf, d);
    for (double v : nt.tensor.values()) put_u64(buf, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing checkpoint " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);
  if (r.bytes(4) != "TGDN") throw ParseError(path + ": bad checkpoint magic");
  auto version = r.uint(4);
  if (version != kCheckpointVersion)
    throw ParseError(fmt::format("{}: unsupported checkpoint version {}", path, version));
  std::vector<NamedTensor> out;
  while (!r.done()) {
    auto name = r.bytes(static_cast<std::size_t>(r.uint(4)));
    auto rank = r.uint(4);
    Shape shape;
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::size_t>(r.uint(8)));
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = std::bit_cast<double>(r.uint(8));
    out.push_back({std::move(name), rank == 0 ? Tensor::scalar(values[0])
                                              : Tensor::from(std::move(shape), std::move(values))});
  }
  return out;
}

}  // namespace topogdn
