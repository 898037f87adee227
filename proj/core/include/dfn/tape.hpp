#pragma once

#include <array>
#include <functional>
#include <unordered_map>
#include <vector>

#include "dfn/tensor.hpp"

namespace dfn {

template <std::floating_point S>
class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; the tape owns the
/// tensor.
template <std::floating_point S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor<S>& value() const;
  int n() const { return value().n(); }
  int c() const { return value().c(); }
  int h() const { return value().h(); }
  int w() const { return value().w(); }
};

/// Gradient of a scalar loss with respect to the trainable leaves it
/// reached. Leaves the loss never touched read back as zeros.
template <std::floating_point S>
class GradientMap {
 public:
  GradientMap() = default;

  bool contains(Var<S> leaf) const { return grads_.count(leaf.id) != 0; }

  /// Gradient tensor for a leaf; zeros of the leaf's shape if unreached.
  Tensor<S> at(Var<S> leaf) const {
    auto it = grads_.find(leaf.id);
    if (it != grads_.end()) return it->second;
    const Tensor<S>& v = leaf.value();
    return Tensor<S>(v.n(), v.c(), v.h(), v.w());
  }

  const Tensor<S>* find(Var<S> leaf) const {
    auto it = grads_.find(leaf.id);
    return it == grads_.end() ? nullptr : &it->second;
  }

  std::size_t reached() const { return grads_.size(); }

  void insert(int id, Tensor<S> g) { grads_.emplace(id, std::move(g)); }

 private:
  std::unordered_map<int, Tensor<S>> grads_;
};

/// Recorded computation graph. Nodes are appended in execution order, so the
/// tape is topologically sorted by construction; backward() walks it once in
/// reverse. A tape is owned by a single execution context.
template <std::floating_point S>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape<S>&, const Tensor<S>& grad_out,
                                        const Tensor<S>& own_value,
                                        std::array<int, 3> in)>;
  using ForwardFn = std::function<Tensor<S>(Tape<S>&, std::array<int, 3> in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New leaf holding an externally supplied value. Trainable leaves receive
  /// gradients in backward().
  Var<S> leaf(Tensor<S> value, bool trainable = false);
  Var<S> constant(Tensor<S> value) { return leaf(std::move(value), false); }

  /// Record an op result. `bwd` accumulates into input gradient buffers,
  /// `fwd` recomputes the value from the inputs' current values (replay).
  Var<S> record(const char* op, std::array<int, 3> inputs, Tensor<S> value,
                BackwardFn bwd, ForwardFn fwd);

  const Tensor<S>& value(int id) const { return nodes_[id].value; }
  const Tensor<S>& value(Var<S> v) const { return nodes_[v.id].value; }
  bool requires_grad(int id) const { return id >= 0 && nodes_[id].requires_grad; }
  const char* op_name(int id) const { return nodes_[id].op; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Gradient accumulation buffer for node `id` (zero-initialized on first
  /// use), or nullptr when that node needs no gradient. Only meaningful
  /// inside backward fns.
  Tensor<S>* grad_accumulator(int id);

  /// Reverse-mode gradients of a scalar loss w.r.t. every trainable leaf.
  GradientMap<S> backward(Var<S> loss);

  /// Re-executes every recorded op from current leaf values, in recording
  /// order, replacing node values. Deterministic ops reproduce the original
  /// values bit for bit.
  void replay();

 private:
  struct Node {
    const char* op;
    std::array<int, 3> in{-1, -1, -1};
    Tensor<S> value;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
    ForwardFn forward;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor<S>> grads_;  // live only during backward()
};

template <std::floating_point S>
const Tensor<S>& Var<S>::value() const {
  return tape->value(id);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace dfn
