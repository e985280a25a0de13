#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "mvsa/core/tensor.hpp"

namespace mvsa {

/// Trainable weight with its gradient and Adam moments.
template <typename T>
struct BasicParameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  BasicTensor<T> adam_m;
  BasicTensor<T> adam_v;
  std::int64_t step_count = 0;

  BasicParameter() = default;
  BasicParameter(std::string n, BasicTensor<T> v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.shape()),
        adam_m(value.shape()),
        adam_v(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }
};

using Parameter = BasicParameter<float>;

/// Handle to a value recorded on a Tape.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

/// Linear record of a forward computation, replayed in reverse by backward().
/// Nodes are appended in execution order, so inputs always precede outputs.
template <typename T>
class Tape {
 public:
  using TensorT = BasicTensor<T>;
  using BackwardFn = std::function<void(Tape&, const TensorT& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(TensorT value) { return push(std::move(value), false, nullptr, {}); }

  Var param(BasicParameter<T>& p) {
    return push(p.value, grad_enabled_, &p, {});
  }

  /// Appends an op result. `fn` runs during backward with this node's
  /// gradient and is dropped when no input needs a gradient.
  Var record(TensorT value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
  }

  Var record(TensorT value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool needs = false;
    if (grad_enabled_) {
      for (Var in : inputs) needs = needs || node(in).requires_grad;
    }
    return push(std::move(value), needs, nullptr, needs ? std::move(fn) : BackwardFn{});
  }

  const TensorT& value(Var v) const { return node(v).value; }
  const Shape& shape(Var v) const { return node(v).value.shape(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient accumulator of `v`, zero-initialized on first access.
  TensorT& grad(Var v) {
    Node& n = node(v);
    if (n.grad.empty()) n.grad = TensorT(n.value.shape());
    return n.grad;
  }

  /// Reverse sweep from a scalar. Parameter gradients accumulate (+=) into
  /// BasicParameter::grad. The tape cannot be reused afterwards.
  void backward(Var loss);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // Activation-pattern fingerprint: relu and max-pool fold their kink side /
  // argmax choice into this hash when tracking is on. Two forward passes with
  // equal fingerprints evaluated the same smooth piece of the function.
  void set_track_kinks(bool on) { track_kinks_ = on; }
  bool tracking_kinks() const { return track_kinks_; }
  void fold_kink(std::uint64_t v) {
    kink_hash_ = (kink_hash_ ^ v) * 0x100000001B3ULL + 0x9E3779B97F4A7C15ULL;
  }
  std::uint64_t kink_fingerprint() const { return kink_hash_; }

 private:
  struct Node {
    TensorT value;
    TensorT grad;
    bool requires_grad = false;
    BasicParameter<T>* param = nullptr;
    BackwardFn backward;
  };

  Var push(TensorT value, bool requires_grad, BasicParameter<T>* p, BackwardFn fn) {
    if (consumed_) throw UsageError("tape already consumed by backward()");
    nodes_.push_back(Node{std::move(value), {}, requires_grad, p, std::move(fn)});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  Node& node(Var v) {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw UsageError("invalid tape variable");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw UsageError("invalid tape variable");
    }
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  // deque: references returned by value() stay valid while the tape grows.
  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
  bool consumed_ = false;
  bool track_kinks_ = false;
  std::uint64_t kink_hash_ = 0xCBF29CE484222325ULL;
};

template <typename T>
void Tape<T>::backward(Var loss) {
  if (consumed_) throw UsageError("backward() called twice on the same tape");
  if (!grad_enabled_) throw UsageError("backward() on a tape recorded without gradients");
  Node& root = node(loss);
  if (root.value.numel() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " +
                     shape_str(root.value.shape()));
  }
  consumed_ = true;
  if (!root.requires_grad) return;
  grad(loss).fill(T{1});
  for (auto i = static_cast<std::int64_t>(loss.id); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.empty()) continue;
    if (n.param != nullptr) {
      auto& pg = n.param->grad;
      for (std::int64_t j = 0; j < pg.numel(); ++j) pg[j] += n.grad[j];
    } else if (n.backward) {
      n.backward(*this, n.grad);
    }
    n.grad = TensorT();
    n.backward = nullptr;
  }
}

}  // namespace mvsa
