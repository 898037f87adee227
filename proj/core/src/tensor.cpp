#include "dfn/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace dfn {

template <std::floating_point S>
Tensor<S>::Tensor(int n, int c, int h, int w) : n_(n), c_(c), h_(h), w_(w) {
  if (n < 0 || c < 0 || h < 0 || w < 0)
    throw std::invalid_argument("tensor extents must be non-negative");
  elems_.assign(static_cast<std::size_t>(n) * c * h * w, S(0));
}

template <std::floating_point S>
Tensor<S> Tensor<S>::full(int n, int c, int h, int w, S value) {
  Tensor t(n, c, h, w);
  t.fill(value);
  return t;
}

template <std::floating_point S>
Tensor<S> Tensor<S>::scalar(S value) {
  return full(1, 1, 1, 1, value);
}

template <std::floating_point S>
Tensor<S> Tensor<S>::row(std::initializer_list<S> values) {
  Tensor t(1, 1, 1, static_cast<int>(values.size()));
  int i = 0;
  for (S v : values) t.elems_[i++] = v;
  return t;
}

template <std::floating_point S>
std::string Tensor<S>::shape_str() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "[%d,%d,%d,%d]", n_, c_, h_, w_);
  return buf;
}

template <std::floating_point S>
void Tensor<S>::fill(S value) {
  for (S& e : elems_) e = value;
}

template <std::floating_point S>
bool Tensor<S>::all_finite() const {
  for (S e : elems_)
    if (!std::isfinite(e)) return false;
  return true;
}

template <std::floating_point S>
S Tensor<S>::scalar_value() const {
  if (size() != 1)
    throw std::logic_error("scalar_value on tensor of shape " + shape_str());
  return elems_[0];
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace dfn
