#include "equibench/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "equibench/error.hpp"

namespace equibench {

namespace {

constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

thread_local GradTape* t_active_tape = nullptr;
thread_local Precision t_precision = Precision::f64;
std::atomic<std::uint64_t> g_next_serial{1};

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void round_if_needed(std::vector<double>& values) {
  if (t_precision == Precision::f32) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
  }
}

/// Records `out` on the active tape when any input is attached.
bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  bool any = false;
  for (const Tensor* t : inputs) {
    if (t == nullptr || !t->attached()) continue;
    GradTape* tape = GradTape::active();
    if (tape == nullptr || tape->serial() != t->tape_serial()) {
      throw ContractError("tensor is attached to a gradient tape that is not active");
    }
    any = true;
  }
  return any;
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_string(a.shape()));
  }
}

Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  auto fail = [&] {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  };
  if (a.rank() != b.rank()) fail();
  Shape out(a.rank());
  for (std::size_t i = 0; i < a.rank(); ++i) {
    const std::size_t x = a.shape()[i];
    const std::size_t y = b.shape()[i];
    if (x == y || y == 1) {
      out[i] = x;
    } else if (x == 1) {
      out[i] = y;
    } else {
      fail();
    }
  }
  return out;
}

/// Flat index into an operand for every flat index of the broadcast output.
std::vector<std::size_t> broadcast_index(const Shape& out, const Shape& in) {
  const std::size_t n = product(out);
  std::vector<std::size_t> index(n);
  if (out == in) {
    std::iota(index.begin(), index.end(), std::size_t{0});
    return index;
  }
  const std::size_t rank = out.size();
  std::vector<std::size_t> in_stride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t k = rank; k-- > 0;) {
    in_stride[k] = in[k] == 1 ? 0 : stride;
    stride *= in[k];
  }
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    index[flat] = offset;
    for (std::size_t k = rank; k-- > 0;) {
      ++counter[k];
      offset += in_stride[k];
      if (counter[k] < out[k]) break;
      offset -= in_stride[k] * counter[k];
      counter[k] = 0;
    }
  }
  return index;
}

template <typename Fwd, typename Dfa, typename Dfb>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Dfa dfa, Dfb dfb) {
  Shape shape = broadcast_shape(a, b, name);
  const std::size_t n = product(shape);
  std::vector<double> out(n);
  const auto av = a.data();
  const auto bv = b.data();
  const bool same = a.shape() == b.shape();
  std::vector<std::size_t> ia;
  std::vector<std::size_t> ib;
  if (same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    ia = broadcast_index(shape, a.shape());
    ib = broadcast_index(shape, b.shape());
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[ia[i]], bv[ib[i]]);
  }
  round_if_needed(out);
  Tensor result(std::move(shape), std::move(out));
  if (wants_grad({&a, &b})) {
    GradTape::active()->record(
        result, {&a, &b},
        [av = std::vector<double>(av.begin(), av.end()),
         bv = std::vector<double>(bv.begin(), bv.end()), ia = std::move(ia), ib = std::move(ib),
         same, dfa, dfb](std::span<const double> g, std::span<std::vector<double>*> gin) {
          const std::size_t n = g.size();
          if (gin[0] != nullptr) {
            auto& ga = *gin[0];
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t x = same ? i : ia[i];
              const std::size_t y = same ? i : ib[i];
              ga[x] += g[i] * dfa(av[x], bv[y]);
            }
          }
          if (gin[1] != nullptr) {
            auto& gb = *gin[1];
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t x = same ? i : ia[i];
              const std::size_t y = same ? i : ib[i];
              gb[y] += g[i] * dfb(av[x], bv[y]);
            }
          }
        });
  }
  return result;
}

/// `dfdx` receives the input value and the output value.
template <typename Fwd, typename Df>
Tensor unary(const Tensor& a, Fwd fwd, Df dfdx) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  round_if_needed(out);
  Tensor result(a.shape(), std::move(out));
  if (wants_grad({&a})) {
    GradTape::active()->record(
        result, {&a},
        [av = std::vector<double>(av.begin(), av.end()),
         yv = std::vector<double>(result.data().begin(), result.data().end()),
         dfdx](std::span<const double> g, std::span<std::vector<double>*> gin) {
          auto& ga = *gin[0];
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(av[i], yv[i]);
        });
  }
  return result;
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  require_rank(*this, 2, "rows");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_rank(*this, 2, "cols");
  return shape_[1];
}

std::span<double> Tensor::mutable_data() {
  if (attached()) throw ContractError("cannot mutate a tape-attached tensor");
  return data_;
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw DimensionError("item() needs a single value, shape is " + shape_string(shape_));
  }
  return data_[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  require_rank(*this, 2, "at");
  if (r >= shape_[0] || c >= shape_[1]) throw DimensionError("index out of range");
  return data_[r * shape_[1] + c];
}

std::span<const double> Tensor::row(std::size_t r) const {
  require_rank(*this, 2, "row");
  if (r >= shape_[0]) throw DimensionError("row out of range");
  return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
}

Tensor Tensor::detach() const {
  Tensor copy = *this;
  copy.tape_serial_ = 0;
  copy.node_ = 0;
  return copy;
}

// ---------------------------------------------------------------------------
// Gradients / tape

Tensor Gradients::of(const Tensor& leaf) const {
  if (leaf.attached() && leaf.tape_serial() == serial_) {
    if (auto it = grads_.find(leaf.node()); it != grads_.end()) return it->second;
  }
  return Tensor::zeros(leaf.shape());
}

bool Gradients::contains(const Tensor& leaf) const {
  return leaf.attached() && leaf.tape_serial() == serial_ && grads_.count(leaf.node()) > 0;
}

GradTape::GradTape() : serial_(g_next_serial.fetch_add(1)), previous_(t_active_tape) {
  t_active_tape = this;
}

GradTape::~GradTape() { t_active_tape = previous_; }

GradTape* GradTape::active() { return t_active_tape; }

Tensor GradTape::watch(const Tensor& value) {
  if (t_active_tape != this) throw ContractError("watch() on a tape that is not active");
  Tensor out = value.detach();
  Node node;
  node.size = out.size();
  node.shape = out.shape();
  node.leaf = true;
  nodes_.push_back(std::move(node));
  out.tape_serial_ = serial_;
  out.node_ = nodes_.size() - 1;
  return out;
}

void GradTape::record(Tensor& out, std::vector<const Tensor*> inputs, BackwardFn fn) {
  Node node;
  node.size = out.size();
  node.backward = std::move(fn);
  node.inputs.reserve(inputs.size());
  for (const Tensor* t : inputs) {
    node.inputs.push_back(t != nullptr && t->attached() ? t->node() : kNoNode);
  }
  nodes_.push_back(std::move(node));
  out.tape_serial_ = serial_;
  out.node_ = nodes_.size() - 1;
}

Gradients GradTape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.attached() || loss.tape_serial() != serial_) {
    throw ContractError("backward needs a loss attached to this tape");
  }
  std::vector<std::vector<double>> grads(nodes_.size());
  grads[loss.node()] = {1.0};
  last_visits_ = 0;
  std::vector<std::vector<double>*> gin;
  // Nodes are appended in evaluation order, so reverse index order is a
  // reverse topological order.
  for (std::size_t id = loss.node() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.leaf || grads[id].empty()) continue;
    gin.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (in == kNoNode) continue;
      if (grads[in].empty()) grads[in].assign(nodes_[in].size, 0.0);
      gin[k] = &grads[in];
    }
    node.backward(grads[id], gin);
    ++last_visits_;
    if (id != loss.node()) std::vector<double>().swap(grads[id]);
  }
  Gradients result;
  result.serial_ = serial_;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].leaf && !grads[id].empty()) {
      result.grads_.emplace(id, Tensor(nodes_[id].shape, std::move(grads[id])));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Primitives

std::string to_string(ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::add: return "add";
    case ElementwiseOp::sub: return "sub";
    case ElementwiseOp::mul: return "mul";
    case ElementwiseOp::relu: return "relu";
    case ElementwiseOp::sigmoid: return "sigmoid";
    case ElementwiseOp::tanh: return "tanh";
  }
  return "?";
}

std::string to_string(ReduceOp op) {
  switch (op) {
    case ReduceOp::sum: return "sum";
    case ReduceOp::mean: return "mean";
    case ReduceOp::max: return "max";
  }
  return "?";
}

ReduceOp reduce_op_from_string(const std::string& name) {
  if (name == "sum") return ReduceOp::sum;
  if (name == "mean") return ReduceOp::mean;
  if (name == "max") return ReduceOp::max;
  throw DomainError("unknown reduction '" + name + "' (expected sum, mean or max)");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  round_if_needed(out);
  Tensor result(Shape{m, n}, std::move(out));
  if (wants_grad({&a, &b})) {
    const bool need_a = a.attached();
    const bool need_b = b.attached();
    GradTape::active()->record(
        result, {&a, &b},
        [m, k, n, av = need_b ? std::vector<double>(av.begin(), av.end()) : std::vector<double>{},
         bv = need_a ? std::vector<double>(bv.begin(), bv.end()) : std::vector<double>{}](
            std::span<const double> g, std::span<std::vector<double>*> gin) {
          if (gin[0] != nullptr) {
            // dA = G Bᵀ
            auto& ga = *gin[0];
            for (std::size_t i = 0; i < m; ++i) {
              const double* grow = g.data() + i * n;
              for (std::size_t p = 0; p < k; ++p) {
                const double* brow = bv.data() + p * n;
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                ga[i * k + p] += acc;
              }
            }
          }
          if (gin[1] != nullptr) {
            // dB = Aᵀ G
            auto& gb = *gin[1];
            for (std::size_t i = 0; i < m; ++i) {
              const double* grow = g.data() + i * n;
              for (std::size_t p = 0; p < k; ++p) {
                const double aip = av[i * k + p];
                double* gbrow = gb.data() + p * n;
                for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
              }
            }
          }
        });
  }
  return result;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.shape()[0];
  const std::size_t c = a.shape()[1];
  const auto av = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  Tensor result(Shape{c, r}, std::move(out));
  if (wants_grad({&a})) {
    GradTape::active()->record(result, {&a},
                               [r, c](std::span<const double> g, std::span<std::vector<double>*> gin) {
                                 auto& ga = *gin[0];
                                 for (std::size_t i = 0; i < r; ++i) {
                                   for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
                                 }
                               });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Tensor signed_log1p(const Tensor& a) {
  return unary(
      a, [](double x) { return std::copysign(std::log1p(std::abs(x)), x); },
      [](double x, double) { return 1.0 / (1.0 + std::abs(x)); });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b) {
  auto need_b = [&]() -> const Tensor& {
    if (b == nullptr) throw ContractError(to_string(op) + " needs a second operand");
    return *b;
  };
  switch (op) {
    case ElementwiseOp::add: return add(a, need_b());
    case ElementwiseOp::sub: return sub(a, need_b());
    case ElementwiseOp::mul: return mul(a, need_b());
    case ElementwiseOp::relu: return relu(a);
    case ElementwiseOp::sigmoid: return sigmoid(a);
    case ElementwiseOp::tanh: return tanh(a);
  }
  throw ContractError("unknown elementwise op");
}

Tensor reduce(ReduceOp op, const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(a.shape()));
  }
  const Shape& in = a.shape();
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= in[k];
  for (std::size_t k = axis + 1; k < in.size(); ++k) inner *= in[k];
  const std::size_t len = in[axis];
  Shape out_shape;
  for (std::size_t k = 0; k < in.size(); ++k) {
    if (k != axis) out_shape.push_back(in[k]);
  }
  const auto av = a.data();
  std::vector<double> out(outer * inner, 0.0);
  std::vector<std::size_t> argmax;
  if (op == ReduceOp::max) argmax.assign(outer * inner, 0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t dst = o * inner + i;
      if (op == ReduceOp::max) {
        if (len == 0) continue;
        std::size_t best = o * len * inner + i;
        for (std::size_t l = 1; l < len; ++l) {
          const std::size_t src = (o * len + l) * inner + i;
          if (av[src] > av[best]) best = src;
        }
        out[dst] = av[best];
        argmax[dst] = best;
      } else {
        double acc = 0.0;
        for (std::size_t l = 0; l < len; ++l) acc += av[(o * len + l) * inner + i];
        out[dst] = op == ReduceOp::mean && len > 0 ? acc / static_cast<double>(len) : acc;
      }
    }
  }
  round_if_needed(out);
  Tensor result(std::move(out_shape), std::move(out));
  if (wants_grad({&a})) {
    GradTape::active()->record(
        result, {&a},
        [op, outer, inner, len, argmax = std::move(argmax)](std::span<const double> g,
                                                            std::span<std::vector<double>*> gin) {
          auto& ga = *gin[0];
          if (op == ReduceOp::max) {
            if (len == 0) return;
            for (std::size_t d = 0; d < g.size(); ++d) ga[argmax[d]] += g[d];
            return;
          }
          const double w = op == ReduceOp::mean && len > 0 ? 1.0 / static_cast<double>(len) : 1.0;
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t l = 0; l < len; ++l) {
              for (std::size_t i = 0; i < inner; ++i) {
                ga[(o * len + l) * inner + i] += w * g[o * inner + i];
              }
            }
          }
        });
  }
  return result;
}

Tensor sum_all(const Tensor& a) {
  if (a.rank() == 0) return a;
  Tensor flat = a;
  // Axis by axis; cheap for the small tensors used here.
  while (flat.rank() > 1) flat = reduce(ReduceOp::sum, flat, 0);
  return reduce(ReduceOp::sum, flat, 0);
}

Tensor mean_all(const Tensor& a) {
  if (a.size() == 0) throw DomainError("mean of an empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor gather_rows(const Tensor& a, std::span<const std::uint32_t> index) {
  require_rank(a, 2, "gather_rows");
  const std::size_t rows = a.shape()[0];
  const std::size_t cols = a.shape()[1];
  const auto av = a.data();
  std::vector<double> out(index.size() * cols);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(index[r]) + " out of range for " +
                           shape_string(a.shape()));
    }
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(index[r] * cols), cols,
                out.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  Tensor result(Shape{index.size(), cols}, std::move(out));
  if (wants_grad({&a})) {
    GradTape::active()->record(
        result, {&a},
        [cols, idx = std::vector<std::uint32_t>(index.begin(), index.end())](
            std::span<const double> g, std::span<std::vector<double>*> gin) {
          auto& ga = *gin[0];
          for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t c = 0; c < cols; ++c) ga[idx[r] * cols + c] += g[r * cols + c];
          }
        });
  }
  return result;
}

Tensor segment_reduce(ReduceOp op, const Tensor& a, std::span<const std::uint32_t> segment,
                      std::size_t n_segments) {
  require_rank(a, 2, "segment_reduce");
  const std::size_t rows = a.shape()[0];
  const std::size_t cols = a.shape()[1];
  if (segment.size() != rows) {
    throw DimensionError("segment_reduce: " + std::to_string(segment.size()) +
                         " segment ids for shape " + shape_string(a.shape()));
  }
  const auto av = a.data();
  std::vector<double> out(n_segments * cols, 0.0);
  std::vector<double> count(n_segments, 0.0);
  std::vector<std::size_t> argmax;
  if (op == ReduceOp::max) argmax.assign(n_segments * cols, std::numeric_limits<std::size_t>::max());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t s = segment[r];
    if (s >= n_segments) throw DimensionError("segment_reduce: segment id out of range");
    count[s] += 1.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t dst = s * cols + c;
      const double v = av[r * cols + c];
      if (op == ReduceOp::max) {
        if (argmax[dst] == std::numeric_limits<std::size_t>::max() || v > out[dst]) {
          out[dst] = v;
          argmax[dst] = r * cols + c;
        }
      } else {
        out[dst] += v;
      }
    }
  }
  if (op == ReduceOp::mean) {
    for (std::size_t s = 0; s < n_segments; ++s) {
      if (count[s] == 0.0) continue;
      for (std::size_t c = 0; c < cols; ++c) out[s * cols + c] /= count[s];
    }
  }
  round_if_needed(out);
  Tensor result(Shape{n_segments, cols}, std::move(out));
  if (wants_grad({&a})) {
    GradTape::active()->record(
        result, {&a},
        [op, cols, seg = std::vector<std::uint32_t>(segment.begin(), segment.end()),
         count = std::move(count),
         argmax = std::move(argmax)](std::span<const double> g, std::span<std::vector<double>*> gin) {
          auto& ga = *gin[0];
          if (op == ReduceOp::max) {
            for (std::size_t d = 0; d < argmax.size(); ++d) {
              if (argmax[d] != std::numeric_limits<std::size_t>::max()) ga[argmax[d]] += g[d];
            }
            return;
          }
          for (std::size_t r = 0; r < seg.size(); ++r) {
            const std::size_t s = seg[r];
            const double w = op == ReduceOp::mean ? 1.0 / count[s] : 1.0;
            for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += w * g[s * cols + c];
          }
        });
  }
  return result;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  widths.reserve(parts.size());
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.shape()[0] != rows) {
      throw DimensionError("concat_cols: shape " + shape_string(p.shape()) + " does not have " +
                           std::to_string(rows) + " rows");
    }
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].data();
    const std::size_t w = widths[k];
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    }
    offset += w;
  }
  Tensor result(Shape{rows, total}, std::move(out));
  bool any = false;
  for (const Tensor& p : parts) any = wants_grad({&p}) || any;
  if (any) {
    std::vector<const Tensor*> inputs;
    for (const Tensor& p : parts) inputs.push_back(&p);
    GradTape::active()->record(
        result, std::move(inputs),
        [rows, total, widths](std::span<const double> g, std::span<std::vector<double>*> gin) {
          std::size_t offset = 0;
          for (std::size_t k = 0; k < widths.size(); ++k) {
            const std::size_t w = widths[k];
            if (gin[k] != nullptr) {
              auto& gk = *gin[k];
              for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < w; ++c) gk[r * w + c] += g[r * total + offset + c];
              }
            }
            offset += w;
          }
        });
  }
  return result;
}

PrecisionScope::PrecisionScope(Precision precision) : previous_(t_precision) {
  t_precision = precision;
}

PrecisionScope::~PrecisionScope() { t_precision = previous_; }

Precision current_precision() { return t_precision; }

FiniteDiffResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                   double step) {
  std::vector<double> analytic;
  {
    GradTape tape;
    Tensor leaf = tape.watch(x);
    Tensor y = f(leaf);
    const Tensor g = tape.backward(y).of(leaf);
    analytic.assign(g.data().begin(), g.data().end());
  }
  FiniteDiffResult result;
  Tensor probe = x.detach();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double original = probe.data()[i];
    probe.mutable_data()[i] = original + step;
    const double up = f(probe).item();
    probe.mutable_data()[i] = original - step;
    const double down = f(probe).item();
    probe.mutable_data()[i] = original;
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-12);
    if (i == 0 || err > result.max_relative_error) {
      result = {err, i, analytic[i], numeric};
    }
  }
  return result;
}

}  // namespace equibench
