#pragma once

#include <concepts>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dfn {

enum class Precision : unsigned char { single_prec = 0, double_prec = 1 };

template <std::floating_point S>
constexpr Precision precision_of = sizeof(S) == 4 ? Precision::single_prec
                                                  : Precision::double_prec;

/// Dense rank-4 array in (batch, channel, height, width) order, row-major
/// with width fastest. The carrier for activations, parameters and gradients.
template <std::floating_point S>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w);

  static Tensor full(int n, int c, int h, int w, S value);
  static Tensor scalar(S value);
  /// 1 x 1 x 1 x W row, handy in tests.
  static Tensor row(std::initializer_list<S> values);

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return elems_.size(); }
  bool empty() const { return elems_.empty(); }
  Precision precision() const { return precision_of<S>; }

  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  std::string shape_str() const;

  S* data() { return elems_.data(); }
  const S* data() const { return elems_.data(); }
  std::span<S> flat() { return elems_; }
  std::span<const S> flat() const { return elems_; }

  S& at(int b, int ch, int y, int x) { return elems_[index(b, ch, y, x)]; }
  S at(int b, int ch, int y, int x) const { return elems_[index(b, ch, y, x)]; }

  /// Pointer to the contiguous h*w plane of (batch, channel).
  S* plane(int b, int ch) { return elems_.data() + plane_index(b, ch); }
  const S* plane(int b, int ch) const { return elems_.data() + plane_index(b, ch); }

  void fill(S value);
  bool all_finite() const;
  S scalar_value() const;  // requires size() == 1

  bool operator==(const Tensor& o) const {
    return same_shape(o) && elems_ == o.elems_;
  }

 private:
  std::size_t index(int b, int ch, int y, int x) const {
    return ((static_cast<std::size_t>(b) * c_ + ch) * h_ + y) * w_ + x;
  }
  std::size_t plane_index(int b, int ch) const {
    return (static_cast<std::size_t>(b) * c_ + ch) * static_cast<std::size_t>(h_) * w_;
  }

  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<S> elems_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace dfn
