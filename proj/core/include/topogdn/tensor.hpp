#pragma once

// Dense f64 tensors with a reverse-mode tape.
//
// A Tensor is a cheap handle onto shared storage. Operations record onto the
// thread's active Tape (see TapeScope) whenever one of their inputs requires a
// gradient; with no active tape they run as plain arithmetic. Broadcasting is
// numpy-style, right-aligned: each trailing dimension pair must be equal or
// contain a 1.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace topogdn {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Storage {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  double* grad_buffer() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad.data();
  }
};
}  // namespace detail

class Tensor {
 public:
  /// Scalar constant 0.
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return s_->values.size(); }

  std::span<const double> values() const { return s_->values; }
  /// Direct write access; intended for initialization and optimizer updates.
  std::span<double> data() { return s_->values; }
  double item() const;
  double operator[](std::size_t flat) const { return s_->values[flat]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !s_->grad.empty(); }
  /// Gradient buffer; zero-filled if nothing has been accumulated yet.
  std::span<const double> grad() const;
  void zero_grad();

  /// New storage with the same values and no gradient tracking.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

  // Internal plumbing for op implementations.
  explicit Tensor(std::shared_ptr<detail::Storage> s) : s_(std::move(s)) {}
  const std::shared_ptr<detail::Storage>& storage() const { return s_; }

 private:
  std::shared_ptr<detail::Storage> s_;
};

/// Ordered record of differentiable operations.
class Tape {
 public:
  struct Entry {
    const char* op = "";
    std::vector<std::shared_ptr<detail::Storage>> inputs;
    std::shared_ptr<detail::Storage> output;
    std::function<void(detail::Storage& out)> backprop;
  };

  void record(Entry entry) { entries_.push_back(std::move(entry)); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1, replays entries in reverse recording order,
  /// then clears the tape. Throws ContractError for a non-scalar loss.
  void backward(const Tensor& loss);

  /// Called once per entry during backward, in visiting order.
  void set_visit_observer(std::function<void(const Entry&)> observer) {
    observer_ = std::move(observer);
  }

 private:
  std::vector<Entry> entries_;
  std::function<void(const Entry&)> observer_;
};

/// Installs a tape as the calling thread's active tape for the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording for the scope (inference).
class NoTapeScope {
 public:
  NoTapeScope();
  ~NoTapeScope();
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// backward() on the active tape.
void backward(const Tensor& loss);

// ---- operations ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
inline constexpr double kLeakySlope = 0.2;
Tensor leaky_relu(const Tensor& x, double slope = kLeakySlope);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
Tensor reciprocal(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);

/// Rows of a rank-2 tensor selected (with repetition) by index.
Tensor index_rows(const Tensor& x, std::span<const std::size_t> rows);
/// out[rows[e], :] += x[e, :]; out has `out_rows` rows.
Tensor scatter_add_rows(const Tensor& x, std::span<const std::size_t> rows, std::size_t out_rows);
/// Flat gather: out[i] = x.flat[index[i]], reshaped to `shape`.
Tensor take(const Tensor& x, std::span<const std::size_t> index, Shape shape);
/// Softmax of a length-E score vector within each segment id.
Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment,
                       std::size_t segments);
/// Concatenation of rank-2 tensors along columns.
Tensor concat_cols(std::span<const Tensor> parts);
/// Per-row 1-D correlation with clamp-to-last (replication) padding:
/// out[r, t] = sum_j x[r, min(t + j * dilation, w - 1)] * kernel[j].
Tensor conv1d_replicate(const Tensor& x, const Tensor& kernel, std::size_t dilation);

Tensor mse_loss(const Tensor& prediction, const Tensor& target);

// ---- checkpoint files ---------------------------------------------------

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian "TGDN" + u32 version, then per tensor:
/// u32 name length, name bytes, u32 rank, u64 dims, f64 values.
void save_checkpoint(const std::string& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace topogdn
