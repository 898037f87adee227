#include "dfn/tape.hpp"

#include <stdexcept>

namespace dfn {

template <std::floating_point S>
Var<S> Tape<S>::leaf(Tensor<S> value, bool trainable) {
  Node n;
  n.op = trainable ? "leaf" : "const";
  n.value = std::move(value);
  n.requires_grad = trainable;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <std::floating_point S>
Var<S> Tape<S>::record(const char* op, std::array<int, 3> inputs, Tensor<S> value,
                       BackwardFn bwd, ForwardFn fwd) {
  Node n;
  n.op = op;
  n.in = inputs;
  n.value = std::move(value);
  for (int id : inputs) {
    if (id < 0) continue;
    if (id >= static_cast<int>(nodes_.size()))
      throw std::logic_error("tape input id out of range");
    n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  }
  n.backward = std::move(bwd);
  n.forward = std::move(fwd);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <std::floating_point S>
Tensor<S>* Tape<S>::grad_accumulator(int id) {
  if (id < 0 || !nodes_[id].requires_grad) return nullptr;
  Tensor<S>& g = grads_[id];
  if (g.empty()) {
    const Tensor<S>& v = nodes_[id].value;
    g = Tensor<S>(v.n(), v.c(), v.h(), v.w());
  }
  return &g;
}

template <std::floating_point S>
GradientMap<S> Tape<S>::backward(Var<S> loss) {
  if (loss.tape != this || loss.id < 0 ||
      loss.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("backward: loss is not on this tape");
  if (nodes_[loss.id].value.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                nodes_[loss.id].value.shape_str());

  grads_.assign(nodes_.size(), Tensor<S>());
  grads_[loss.id] = Tensor<S>::scalar(S(1));

  GradientMap<S> out;
  for (int i = loss.id; i >= 0; --i) {
    Node& node = nodes_[i];
    Tensor<S>& g = grads_[i];
    if (g.empty() || !node.requires_grad) {
      g = Tensor<S>();
      continue;
    }
    if (node.is_leaf) {
      out.insert(i, std::move(g));
    } else {
      node.backward(*this, g, node.value, node.in);
    }
    g = Tensor<S>();  // consumed; release before moving on
  }
  grads_.clear();
  grads_.shrink_to_fit();
  return out;
}

template <std::floating_point S>
void Tape<S>::replay() {
  for (Node& node : nodes_) {
    if (node.is_leaf) continue;
    node.value = node.forward(*this, node.in);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace dfn
