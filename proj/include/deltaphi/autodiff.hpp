#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace dphi::ad {

/// Dense row-major array of doubles with an explicit shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  double& operator[](std::size_t k) { return values_[k]; }
  double operator[](std::size_t k) const { return values_[k]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

/// Linear record of primitive applications. Nodes are appended in evaluation
/// order, so every node's inputs precede it and a reverse sweep is a valid
/// topological order for the adjoint pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient. The tensor is referenced, not copied, and
  /// must outlive the tape.
  Var parameter(const Tensor& value);
  /// Leaf that owns its value and receives a gradient.
  Var variable(Tensor value);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  /// Gradient of the last backward() target with respect to `v`. Nodes that
  /// did not influence the loss report zeros.
  Tensor grad(Var v) const;

  /// Reverse sweep from a scalar node. Throws ContractViolation if `loss`
  /// does not hold exactly one element.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  using Adjoint = std::function<void(Tape&, std::size_t self)>;

  // Primitive implementation hooks.
  Var record(Tensor value, std::initializer_list<Var> inputs, Adjoint adjoint);
  const Tensor& grad_ref(std::size_t id) const { return nodes_[id].grad; }
  bool wants_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::span<double> grad_accumulator(std::size_t id);

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Adjoint adjoint;

    const Tensor& value() const { return external ? *external : owned; }
  };
  std::deque<Node> nodes_;  // stable addresses: value() references survive record()
};

// ---- primitives -----------------------------------------------------------
// Spatial primitives take a single sample laid out as [channels, height, width].

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);

/// Per-point channel mixing: y[o] = sum_i weight[o, i] x[i] + bias[o].
/// weight has shape [out, in], bias [out].
Var channel_linear(Var x, Var weight, Var bias);

/// 3x3 zero-padded cross-correlation, weight [out, in, 3, 3], no bias.
Var conv3x3(Var x, Var weight);

/// Fourier-domain channel mixing restricted to the lowest frequencies.
/// Retained rows are ky in [0, modes_h) and [H - modes_h, H); retained columns
/// kx in [0, modes_w) of the half spectrum. weight has shape
/// [in, out, 2 * modes_h, modes_w, 2] (interleaved real/imag). The inverse
/// transform takes the real part, which applies the weights with Hermitian
/// symmetry. Requires 2 * modes_h <= H and modes_w <= W / 2 + 1.
Var spectral_conv(Var x, Var weight, std::size_t modes_h, std::size_t modes_w);

Var gelu(Var x);
Var relu(Var x);
Var mean_reduce(Var x);
Var l2_norm(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

/// Builds a scalar on the given tape from one leaf per parameter tensor.
using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Largest deviation between reverse-mode gradients and central differences
/// (f(t + eps) - f(t - eps)) / 2eps over every parameter coordinate, measured
/// as |g_ad - g_fd| / (max(|g_ad|, |g_fd|) + 1e-6).
/// eps must lie in [1e-7, 1e-3].
double gradient_check(const ScalarFunction& f, std::vector<Tensor> params, double eps);

}  // namespace dphi::ad
