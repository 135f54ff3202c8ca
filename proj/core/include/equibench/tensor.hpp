#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace equibench {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// A tensor is either detached, or attached to the gradient tape that is
/// active on the current thread. Attached tensors are produced by
/// `GradTape::watch` and by any primitive that consumes an attached input;
/// only those ever receive gradients.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  /// Rows/cols of a rank-2 tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const noexcept { return data_; }
  /// Writable view; only valid on detached tensors.
  std::span<double> mutable_data();

  double item() const;
  double at(std::size_t i) const { return data_.at(i); }
  double at(std::size_t r, std::size_t c) const;
  std::span<const double> row(std::size_t r) const;

  bool attached() const noexcept { return tape_serial_ != 0; }
  std::uint64_t tape_serial() const noexcept { return tape_serial_; }
  std::size_t node() const noexcept { return node_; }

  /// Copy without tape linkage.
  Tensor detach() const;

 private:
  friend class GradTape;
  friend struct TensorAccess;

  Shape shape_{0};
  std::vector<double> data_;
  std::uint64_t tape_serial_ = 0;
  std::size_t node_ = 0;
};

/// Gradients returned by `GradTape::backward`, keyed by tape handle.
class Gradients {
 public:
  /// Gradient of the loss w.r.t. `leaf`; zeros when the loss does not depend on it.
  Tensor of(const Tensor& leaf) const;
  bool contains(const Tensor& leaf) const;
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class GradTape;
  std::unordered_map<std::size_t, Tensor> grads_;
  std::uint64_t serial_ = 0;
};

/// Reverse-mode tape. Constructing a tape makes it the active tape of the
/// calling thread until it is destroyed; tapes nest. One tape is meant to live
/// for one forward pass plus one backward pass.
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  /// Attach a leaf. The returned tensor carries the same values.
  Tensor watch(const Tensor& value);

  /// Gradients of a scalar attached `loss` w.r.t. every watched leaf.
  Gradients backward(const Tensor& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  /// Number of recorded operations whose backward rule ran during the last
  /// `backward` call.
  std::size_t last_backward_visits() const noexcept { return last_visits_; }
  std::uint64_t serial() const noexcept { return serial_; }

  static GradTape* active();

  // Internal: used by the primitives to record themselves.
  using BackwardFn = std::function<void(std::span<const double> grad_out,
                                        std::span<std::vector<double>*> grad_in)>;
  void record(Tensor& out, std::vector<const Tensor*> inputs, BackwardFn fn);

 private:
  struct Node {
    std::vector<std::size_t> inputs;
    std::size_t size = 0;
    Shape shape;
    BackwardFn backward;
    bool leaf = false;
  };

  std::vector<Node> nodes_;
  std::uint64_t serial_;
  GradTape* previous_;
  std::size_t last_visits_ = 0;
};

enum class ElementwiseOp { add, sub, mul, relu, sigmoid, tanh };
enum class ReduceOp { sum, mean, max };

std::string to_string(ElementwiseOp op);
std::string to_string(ReduceOp op);
ReduceOp reduce_op_from_string(const std::string& name);

// Primitives. Every primitive checks shapes and throws DimensionError naming
// the offending shapes.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Binary ops broadcast any length-1 axis of equal-rank operands.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
/// log(1 + exp(x)), evaluated without overflow.
Tensor softplus(const Tensor& a);
/// sign(x) * log(1 + |x|); compresses wide-range invariants.
Tensor signed_log1p(const Tensor& a);

/// Dispatch form; `b` is required for the binary ops and ignored otherwise.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b = nullptr);

/// Reduce one axis away. Max routes the gradient to the first maximal entry.
Tensor reduce(ReduceOp op, const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

/// Rows of `a` picked by `index` (rank-2 input).
Tensor gather_rows(const Tensor& a, std::span<const std::uint32_t> index);
/// Rows of `a` reduced into `n_segments` buckets by `segment`. Empty buckets
/// yield zero rows for every op.
Tensor segment_reduce(ReduceOp op, const Tensor& a, std::span<const std::uint32_t> segment,
                      std::size_t n_segments);
/// Column-wise concatenation of rank-2 tensors with equal row counts.
/// Zero-width parts are allowed.
Tensor concat_cols(const std::vector<Tensor>& parts);

/// Reduced-precision evaluation: while a scope is alive, every primitive
/// rounds its result to the nearest 32-bit float. Gradients are unaffected.
enum class Precision { f64, f32 };

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision precision);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision previous_;
};

Precision current_precision();

struct FiniteDiffResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares the tape gradient of scalar `f` at `x` with central differences.
/// Statistic per coordinate: |analytic - numeric| / (|analytic| + 1e-12).
FiniteDiffResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                                   const Tensor& x, double step = 1e-6);

}  // namespace equibench
