#pragma once

// Reverse-mode automatic differentiation over dense row-major double tensors.
//
// A Tape records every node created through it in creation order, so parents
// always precede children. Parameters live outside tapes; binding one to a
// tape creates a leaf that aliases it, and backward() accumulates into the
// parameter's grad. Tapes are single-threaded; distinct tapes share nothing.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mtnas::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Persistent trainable tensor.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Shape shape);

  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const { return value.size(); }
  void zero_grad();
};

using ParamList = std::vector<Parameter*>;

void zero_grad(std::span<Parameter* const> params);

class Tape;

struct Node {
  Tape* tape = nullptr;
  std::size_t index = 0;
  const char* op = "leaf";
  Shape shape;
  std::vector<double> value;
  /// Adjoint. Interior nodes and parameter leaves are reset at the start of
  /// every backward pass; free leaves accumulate across passes.
  std::vector<double> grad;
  std::vector<Node*> parents;
  std::function<void(Node&)> backward;
  Parameter* param = nullptr;
  bool requires_grad = false;
  bool reached = false;

  bool is_leaf() const { return parents.empty(); }
  std::size_t size() const { return value.size(); }
};

/// Non-owning handle to a node on a tape.
class Var {
 public:
  Var() = default;
  explicit Var(Node* node) : node_(node) {}

  Node* node() const { return node_; }
  Tape& tape() const { return *node_->tape; }
  explicit operator bool() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  /// Row count of a rank-2 tensor (1 for rank 1).
  std::size_t rows() const { return rank() == 2 ? node_->shape[0] : 1; }
  /// Trailing dimension.
  std::size_t cols() const { return node_->shape.back(); }

  std::span<const double> value() const { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  double item() const;
  double at(std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  bool requires_grad() const { return node_->requires_grad; }

 private:
  Node* node_ = nullptr;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives gradient.
  Var constant(Shape shape, std::vector<double> value);
  Var constant(Shape shape, double fill);
  /// Tape-owned leaf that receives gradient.
  Var variable(Shape shape, std::vector<double> value);
  /// Leaf aliasing a parameter; repeated calls return the same node.
  Var param(Parameter& p);

  /// Appends an interior node. The node requires grad when any parent does;
  /// otherwise the backward rule is dropped.
  Var record(const char* op, Shape shape, std::vector<double> value, std::vector<Node*> parents,
             std::function<void(Node&)> backward);

  /// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
  void backward(Var root);

  /// Zeroes the grads of this tape's free leaves.
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return *nodes_[i]; }

 private:
  Node* append(std::unique_ptr<Node> node);

  std::vector<std::unique_ptr<Node>> nodes_;
  std::unordered_map<const Parameter*, Node*> bound_;
};

}  // namespace mtnas::ad
