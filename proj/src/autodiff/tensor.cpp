#include "mtnas/autodiff/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "mtnas/errors.hpp"
#include "mtnas/kernels/kernels.hpp"

namespace mtnas::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {

void check_shape(const Shape& shape, std::size_t values, const char* where) {
  if (shape.empty() || std::find(shape.begin(), shape.end(), 0) != shape.end()) {
    throw DimensionError(std::string(where) + ": dimensions must be positive, got " +
                         to_string(shape));
  }
  if (numel(shape) != values) {
    throw DimensionError(std::string(where) + ": shape " + to_string(shape) + " needs " +
                         std::to_string(numel(shape)) + " values, got " + std::to_string(values));
  }
}

}  // namespace

Parameter::Parameter(std::string n, Shape s) : name(std::move(n)), shape(std::move(s)) {
  check_shape(shape, numel(shape), "Parameter");
  value.assign(numel(shape), 0.0);
  grad.assign(value.size(), 0.0);
}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

double Var::item() const {
  if (size() != 1) throw ContractError("item: tensor of shape " + to_string(shape()) + " is not scalar");
  return node_->value[0];
}

Node* Tape::append(std::unique_ptr<Node> node) {
  node->tape = this;
  node->index = nodes_.size();
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

Var Tape::constant(Shape shape, std::vector<double> value) {
  check_shape(shape, value.size(), "constant");
  auto n = std::make_unique<Node>();
  n->op = "constant";
  n->shape = std::move(shape);
  n->value = std::move(value);
  return Var(append(std::move(n)));
}

Var Tape::constant(Shape shape, double fill) {
  const std::size_t count = numel(shape);
  return constant(std::move(shape), std::vector<double>(count, fill));
}

Var Tape::variable(Shape shape, std::vector<double> value) {
  check_shape(shape, value.size(), "variable");
  auto n = std::make_unique<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->grad.assign(n->value.size(), 0.0);
  n->requires_grad = true;
  return Var(append(std::move(n)));
}

Var Tape::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(it->second);
  auto n = std::make_unique<Node>();
  n->op = "param";
  n->shape = p.shape;
  n->value = p.value;
  n->grad.assign(n->value.size(), 0.0);
  n->param = &p;
  n->requires_grad = true;
  Node* raw = append(std::move(n));
  bound_.emplace(&p, raw);
  return Var(raw);
}

Var Tape::record(const char* op, Shape shape, std::vector<double> value, std::vector<Node*> parents,
                 std::function<void(Node&)> backward) {
  check_shape(shape, value.size(), op);
  auto n = std::make_unique<Node>();
  n->op = op;
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (Node* p : parents) {
    if (p->tape != this) throw ContractError(std::string(op) + ": operand belongs to another tape");
    n->requires_grad = n->requires_grad || p->requires_grad;
  }
  n->parents = std::move(parents);
  if (n->requires_grad) {
    n->grad.assign(n->value.size(), 0.0);
    n->backward = std::move(backward);
  }
  return Var(append(std::move(n)));
}

void Tape::backward(Var root) {
  Node* r = root.node();
  if (r == nullptr || r->tape != this) throw ContractError("backward: root is not on this tape");
  if (r->size() != 1) {
    throw ContractError("backward: root must be scalar, got shape " + to_string(r->shape));
  }
  if (!r->requires_grad) return;

  for (std::size_t i = 0; i <= r->index; ++i) {
    Node& n = *nodes_[i];
    n.reached = false;
    if (n.requires_grad && (!n.is_leaf() || n.param != nullptr)) {
      std::fill(n.grad.begin(), n.grad.end(), 0.0);
    }
  }
  r->grad[0] += 1.0;
  r->reached = true;

  for (std::size_t i = r->index + 1; i-- > 0;) {
    Node& n = *nodes_[i];
    if (!n.reached || !n.requires_grad) continue;
    if (n.backward) n.backward(n);
    for (Node* p : n.parents) p->reached = true;
  }

  const auto& k = kernels::active();
  for (std::size_t i = 0; i <= r->index; ++i) {
    Node& n = *nodes_[i];
    if (n.param != nullptr && n.reached) k.axpy(n.grad.size(), 1.0, n.grad.data(), n.param->grad.data());
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) {
    if (n->is_leaf() && n->requires_grad) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
}

}  // namespace mtnas::ad
