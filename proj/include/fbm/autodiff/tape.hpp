#pragma once

#include <fbm/core/error.hpp>
#include <fbm/core/types.hpp>

#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fbm::ad {

// A named, persistent weight tensor. Parameters outlive tapes; a tape only
// references them. Non-trainable parameters (target networks, frozen
// features) enter a tape as constants and never receive gradients.
struct Parameter {
  std::string name;
  Matrix value;
  bool trainable = true;
};

class Tape;

// Handle to a node on a tape.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradient per parameter produced by Tape::backward.
class Gradients {
 public:
  const Matrix* find(const Parameter& p) const {
    auto it = grads_.find(&p);
    return it == grads_.end() ? nullptr : &it->second;
  }

  Matrix of(const Parameter& p) const {
    if (const Matrix* g = find(p)) return *g;
    return Matrix::Zero(p.value.rows(), p.value.cols());
  }

  void accumulate(const Parameter& p, const Matrix& g) {
    auto [it, inserted] = grads_.try_emplace(&p, g);
    if (!inserted) it->second += g;
  }

  bool empty() const { return grads_.empty(); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<const Parameter*, Matrix> grads_;
};

// Append-only record of a dynamic computation. Nodes are stored in creation
// order, so every node's inputs precede it and reverse iteration is a valid
// topological order for backpropagation.
class Tape {
 public:
  // Receives the gradient flowing into the node and scatters it into the
  // node's inputs via grad_buffer().
  using Backprop = std::function<void(Tape&, const Matrix&)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), nullptr, false, nullptr); }

  // Tracked leaf; its gradient is readable through grad() after backward.
  Var variable(Matrix value) { return push(std::move(value), nullptr, true, nullptr); }

  // Leaf bound to a parameter. Repeated calls reuse the same node. The
  // parameter value is referenced, not copied, so it must not change while
  // this tape is alive.
  Var param(const Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var(this, it->second);
    Var v = push(Matrix(), &p.value, p.trainable, p.trainable ? &p : nullptr);
    param_nodes_.emplace(&p, v.id());
    return v;
  }

  Var record(Matrix value, std::initializer_list<Var> inputs, Backprop backprop) {
    bool tracked = false;
    for (const Var& in : inputs) {
      check_owned(in);
      tracked = tracked || nodes_[in.id()].tracked;
    }
    Var v = push(std::move(value), nullptr, tracked, nullptr);
    if (tracked) nodes_[v.id()].backprop = std::move(backprop);
    return v;
  }

  Var record(Matrix value, const std::vector<Var>& inputs, Backprop backprop) {
    bool tracked = false;
    for (const Var& in : inputs) {
      check_owned(in);
      tracked = tracked || nodes_[in.id()].tracked;
    }
    Var v = push(std::move(value), nullptr, tracked, nullptr);
    if (tracked) nodes_[v.id()].backprop = std::move(backprop);
    return v;
  }

  const Matrix& value(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.external ? *n.external : n.value;
  }

  // Value of the node at a raw index; lets a backprop closure read its own
  // output (the node it creates lands at index size() of the tape).
  const Matrix& value_at(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  bool tracked(Var v) const { return nodes_[v.id()].tracked; }

  // Gradient accumulator of a node, zero-initialised on first use.
  Matrix& grad_buffer(Var v) {
    Node& n = nodes_[v.id()];
    if (n.grad.size() == 0) {
      const Matrix& val = value(v);
      n.grad = Matrix::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  // Gradient of the last backward pass w.r.t. a node (zero if unreached).
  Matrix grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.size() == 0) {
      const Matrix& val = value(v);
      return Matrix::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  Gradients backward(Var loss) {
    check_owned(loss);
    const Matrix& lv = value(loss);
    require(lv.rows() == 1 && lv.cols() == 1,
            "backward: loss must be scalar, got shape " + shape_str(lv));
    for (Node& n : nodes_) n.grad.resize(0, 0);
    Gradients out;
    if (!nodes_[loss.id()].tracked) return out;
    grad_buffer(loss)(0, 0) = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.tracked || n.grad.size() == 0) continue;
      if (n.backprop) n.backprop(*this, n.grad);
    }
    for (std::size_t i = 0; i <= loss.id(); ++i) {
      const Node& n = nodes_[i];
      if (n.param != nullptr && n.grad.size() != 0) out.accumulate(*n.param, n.grad);
    }
    return out;
  }

  std::size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    param_nodes_.clear();
  }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool tracked = false;
    const Parameter* param = nullptr;
    Backprop backprop;
  };

  Var push(Matrix value, const Matrix* external, bool tracked, const Parameter* param) {
#ifndef NDEBUG
    require(all_finite(external ? *external : value), "tape: non-finite tensor value");
#endif
    Node n;
    n.value = std::move(value);
    n.external = external;
    n.tracked = tracked;
    n.param = param;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  void check_owned(Var v) const {
    require(v.tape() == this && v.id() < nodes_.size(), "tape: variable belongs to another tape");
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

inline double Var::item() const {
  const Matrix& v = value();
  require(v.size() == 1, "item: tensor is not scalar, shape " + shape_str(v));
  return v(0, 0);
}

}  // namespace fbm::ad
