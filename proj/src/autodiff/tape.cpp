#include <numeric>
#include <string>
#include <utility>

#include "deltaphi/autodiff.hpp"
#include "deltaphi/error.hpp"

namespace dphi::ad {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  DPHI_REQUIRE(!shape_.empty(), "Tensor: empty shape");
  for (auto d : shape_) DPHI_REQUIRE(d > 0, "Tensor: zero-length axis");
  values_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  DPHI_REQUIRE(!shape_.empty(), "Tensor: empty shape");
  for (auto d : shape_) DPHI_REQUIRE(d > 0, "Tensor: zero-length axis");
  DPHI_REQUIRE(values_.size() == shape_size(shape_),
               "Tensor: " + std::to_string(values_.size()) + " values for shape of size " +
                   std::to_string(shape_size(shape_)));
}

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(const Tensor& value) {
  Node n;
  n.external = &value;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  DPHI_REQUIRE(v.tape == this && v.id < nodes_.size(), "Tape: foreign or stale Var");
  return nodes_[v.id].value();
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Adjoint adjoint) {
  Node n;
  n.owned = std::move(value);
  for (const Var& in : inputs) {
    DPHI_REQUIRE(in.tape == this, "Tape: input recorded on a different tape");
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.adjoint = std::move(adjoint);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

std::span<double> Tape::grad_accumulator(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Tensor(n.value().shape(), 0.0);
  return n.grad.values();
}

Tensor Tape::grad(Var v) const {
  DPHI_REQUIRE(v.tape == this && v.id < nodes_.size(), "Tape: foreign or stale Var");
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Tensor(n.value().shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  DPHI_REQUIRE(loss.tape == this, "backward: loss recorded on a different tape");
  DPHI_REQUIRE(value(loss).size() == 1, "backward: loss must be a scalar");
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id].requires_grad) return;
  grad_accumulator(loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.adjoint && n.grad.size() != 0) n.adjoint(*this, id);
  }
}

}  // namespace dphi::ad
