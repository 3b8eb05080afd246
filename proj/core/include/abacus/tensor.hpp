#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abacus/errors.hpp"

namespace abacus {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// Right-aligned numpy-style broadcasting; throws ShapeError on mismatch.
Shape broadcast_shape(const Shape& a, const Shape& b);

namespace detail {
struct TapeState;
struct TensorAccess;
}  // namespace detail

// Dense row-major tensor of doubles. Plain value type: copies are deep and
// share nothing. A tensor produced by an op on tape-tracked inputs carries a
// handle to the node that computed it, which is all reverse mode needs.
class Tensor {
 public:
  Tensor() : shape_{}, data_(1, 0.0) {}
  Tensor(double v) : shape_{}, data_(1, v) {}  // rank-0 scalar, implicit on purpose
  Tensor(Shape shape, std::vector<double> data);
  Tensor(Shape shape, double fill);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }

  // Value of a one-element tensor; anything else is a contract violation.
  double item() const;
  double operator[](std::size_t flat) const { return data_[flat]; }

  bool all_finite() const;

  bool has_node() const { return node_ >= 0; }
  int node() const { return node_; }

 private:
  Shape shape_;
  std::vector<double> data_;
  std::shared_ptr<detail::TapeState> tape_;
  int node_ = -1;

  friend struct detail::TensorAccess;
};

// Records every op applied to tensors derived from its leaves. One tape per
// cost evaluation: build, differentiate, throw away.
class Tape {
 public:
  Tape();

  // Registers a copy of `value` as a differentiable leaf on this tape.
  Tensor leaf(const Tensor& value);

  std::size_t num_nodes() const;
  std::uint64_t uid() const;

 private:
  std::shared_ptr<detail::TapeState> state_;
  friend struct detail::TensorAccess;
};

// ---- elementwise ops --------------------------------------------------

enum class EwKind { Add, Sub, Mul, Div, Neg, Exp, Log, Sigmoid, Tanh, Softplus, Square, Sqrt };

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // negative input is a domain error; log(0) = -inf
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);

// Uniform dispatch over the table above; unary kinds take one argument.
Tensor elementwise(EwKind kind, const Tensor& a);
Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b);
bool elementwise_is_unary(EwKind kind);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- reductions, shaping, linear algebra ------------------------------

enum class ReduceKind { Sum, Mean, LogSumExp, Max };

// Axes may be negative (python-style). Empty axis list means "all axes".
Tensor reduce(ReduceKind kind, const Tensor& a, std::vector<int> axes = {}, bool keep_dims = false);
Tensor reduce_sum(const Tensor& a, std::vector<int> axes = {}, bool keep_dims = false);
Tensor reduce_mean(const Tensor& a, std::vector<int> axes = {}, bool keep_dims = false);
Tensor logsumexp(const Tensor& a, std::vector<int> axes = {}, bool keep_dims = false);
Tensor reduce_max(const Tensor& a, std::vector<int> axes = {}, bool keep_dims = false);

Tensor reshape(const Tensor& a, Shape shape);
Tensor broadcast_to(const Tensor& a, const Shape& shape);

// Batched matrix product over the trailing two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

// out[i...] = a[i..., idx[i...]] over the last axis of `a`. Indices must be
// integral and in range; gradients flow to `a` only.
Tensor gather_last(const Tensor& a, const Tensor& indices);

// Identical values, no tape linkage: backward contributes exactly zero.
Tensor stop_gradient(const Tensor& a);

// d(cost)/d(leaf) for each leaf, as tensors shaped like the leaves. `cost`
// must hold exactly one element. Leaves the cost cannot reach get zeros.
std::vector<Tensor> gradients(const Tensor& cost, std::span<const Tensor> leaves);

// ---- trainable parameters ----------------------------------------------

// A named value with Adam state. `use(tape)` places it on a tape for one
// cost evaluation; the overload of gradients() below finds it there.
class Parameter {
 public:
  explicit Parameter(Tensor value, std::string name = "");

  const Tensor& value() const { return value_; }
  Tensor& value() { return value_; }
  const std::string& name() const { return name_; }
  std::int64_t step_count() const { return steps_; }

  Tensor use(Tape& tape);

 private:
  Tensor value_;
  Tensor adam_m_;
  Tensor adam_v_;
  std::int64_t steps_ = 0;
  std::string name_;
  std::uint64_t used_tape_ = 0;
  int used_node_ = -1;

  friend std::vector<Tensor> gradients(const Tensor&, std::span<Parameter* const>);
  friend struct AdamConfig;
  friend void adam_step(std::span<Parameter* const>, std::span<const Tensor>, const struct AdamConfig&);
};

std::vector<Tensor> gradients(const Tensor& cost, std::span<Parameter* const> params);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update per parameter. Non-finite gradients raise
// NumericError naming the offending parameter.
void adam_step(std::span<Parameter* const> params, std::span<const Tensor> grads,
               const AdamConfig& cfg);

}  // namespace abacus
