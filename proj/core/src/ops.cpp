#include "dfn/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gemm.hpp"
#include "im2col.hpp"

namespace dfn {
namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

template <std::floating_point S>
void check_same_tape(Var<S> a, Var<S> b, const char* op) {
  if (a.tape != b.tape || a.tape == nullptr)
    fail(std::string(op) + ": operands recorded on different tapes");
}

struct ConvDims {
  int out_h, out_w;
};

template <std::floating_point S>
ConvDims conv_dims(const Tensor<S>& in, const Tensor<S>& weight,
                   const Tensor<S>& bias, int stride, int pad) {
  if (weight.h() % 2 == 0 || weight.w() % 2 == 0)
    fail("conv2d: kernel extents must be odd, got " + weight.shape_str());
  if (stride < 1) fail("conv2d: stride must be positive");
  if (pad < 0) fail("conv2d: zero_pad must be non-negative");
  if (in.c() != weight.c())
    fail("conv2d: input channels " + in.shape_str() +
         " do not match weight " + weight.shape_str());
  if (bias.n() != 1 || bias.c() != weight.n() || bias.h() != 1 || bias.w() != 1)
    fail("conv2d: bias must be [1," + std::to_string(weight.n()) +
         ",1,1], got " + bias.shape_str());
  int oh = (in.h() + 2 * pad - weight.h()) / stride + 1;
  int ow = (in.w() + 2 * pad - weight.w()) / stride + 1;
  if (in.h() + 2 * pad < weight.h() || in.w() + 2 * pad < weight.w() ||
      oh < 1 || ow < 1)
    fail("conv2d: kernel " + weight.shape_str() + " does not fit input " +
         in.shape_str() + " with pad " + std::to_string(pad));
  return {oh, ow};
}

template <std::floating_point S>
Tensor<S> conv2d_fwd(const Tensor<S>& in, const Tensor<S>& weight,
                     const Tensor<S>& bias, int stride, int pad) {
  ConvDims d = conv_dims(in, weight, bias, stride, pad);
  const int cout = weight.n();
  const int k = weight.c() * weight.h() * weight.w();
  const int cols = d.out_h * d.out_w;
  Tensor<S> out(in.n(), cout, d.out_h, d.out_w);
  std::vector<S> col(static_cast<std::size_t>(k) * cols);
  for (int b = 0; b < in.n(); ++b) {
    detail::im2col(in.plane(b, 0), in.c(), in.h(), in.w(), weight.h(),
                   weight.w(), stride, pad, pad, d.out_h, d.out_w, col.data());
    detail::gemm(false, false, cout, cols, k, S(1), weight.data(), k,
                 col.data(), cols, S(0), out.plane(b, 0), cols);
    for (int co = 0; co < cout; ++co) {
      S bv = bias.at(0, co, 0, 0);
      S* p = out.plane(b, co);
      for (int i = 0; i < cols; ++i) p[i] += bv;
    }
  }
  return out;
}

template <std::floating_point S>
Tensor<S> fc_fwd(const Tensor<S>& in, const Tensor<S>& weight,
                 const Tensor<S>& bias) {
  if (in.h() != 1 || in.w() != 1)
    fail("fully_connected: input spatial extents must be 1x1, got " +
         in.shape_str() + " (reshape first)");
  if (weight.h() != 1 || weight.w() != 1 || weight.c() != in.c())
    fail("fully_connected: weight " + weight.shape_str() +
         " incompatible with input " + in.shape_str());
  const int cout = weight.n();
  if (bias.n() != 1 || bias.c() != cout || bias.h() != 1 || bias.w() != 1)
    fail("fully_connected: bias must be [1," + std::to_string(cout) +
         ",1,1], got " + bias.shape_str());
  Tensor<S> out(in.n(), cout, 1, 1);
  // out[N x Cout] = in[N x C] * W^T
  detail::gemm(false, true, in.n(), cout, in.c(), S(1), in.data(), in.c(),
               weight.data(), weight.c(), S(0), out.data(), cout);
  for (int b = 0; b < in.n(); ++b)
    for (int co = 0; co < cout; ++co) out.at(b, co, 0, 0) += bias.at(0, co, 0, 0);
  return out;
}

template <std::floating_point S>
Tensor<S> activation_fwd(const Tensor<S>& x, Activation kind) {
  Tensor<S> y(x.n(), x.c(), x.h(), x.w());
  const S* in = x.data();
  S* out = y.data();
  const std::size_t sz = x.size();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < sz; ++i) out[i] = in[i] > S(0) ? in[i] : S(0);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < sz; ++i) out[i] = S(1) / (S(1) + std::exp(-in[i]));
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < sz; ++i) out[i] = std::tanh(in[i]);
      break;
  }
  return y;
}

template <std::floating_point S>
Tensor<S> softmax_fwd(const Tensor<S>& x, int group_size) {
  if (group_size < 1) fail("softmax_over_taps: group_size must be positive");
  if (x.c() % group_size != 0)
    fail("softmax_over_taps: channel count " + std::to_string(x.c()) +
         " not divisible by group size " + std::to_string(group_size));
  const int groups = x.c() / group_size;
  const int plane = x.h() * x.w();
  Tensor<S> y(x.n(), x.c(), x.h(), x.w());
  std::vector<S> m(plane), sum(plane);
  for (int b = 0; b < x.n(); ++b) {
    for (int g = 0; g < groups; ++g) {
      const int c0 = g * group_size;
      for (int i = 0; i < plane; ++i) m[i] = x.plane(b, c0)[i];
      for (int k = 1; k < group_size; ++k) {
        const S* p = x.plane(b, c0 + k);
        for (int i = 0; i < plane; ++i) m[i] = p[i] > m[i] ? p[i] : m[i];
      }
      for (int i = 0; i < plane; ++i) sum[i] = S(0);
      for (int k = 0; k < group_size; ++k) {
        const S* p = x.plane(b, c0 + k);
        S* q = y.plane(b, c0 + k);
        for (int i = 0; i < plane; ++i) {
          q[i] = std::exp(p[i] - m[i]);
          sum[i] += q[i];
        }
      }
      for (int k = 0; k < group_size; ++k) {
        S* q = y.plane(b, c0 + k);
        for (int i = 0; i < plane; ++i) q[i] /= sum[i];
      }
    }
  }
  return y;
}

template <std::floating_point S>
Tensor<S> upsample_fwd(const Tensor<S>& x, int factor) {
  if (factor < 1) fail("upsample_nearest: factor must be positive");
  Tensor<S> y(x.n(), x.c(), x.h() * factor, x.w() * factor);
  for (int b = 0; b < x.n(); ++b)
    for (int c = 0; c < x.c(); ++c) {
      const S* src = x.plane(b, c);
      S* dst = y.plane(b, c);
      for (int i = 0; i < x.h(); ++i)
        for (int fy = 0; fy < factor; ++fy) {
          S* row = dst + (static_cast<std::size_t>(i) * factor + fy) * x.w() * factor;
          const S* srow = src + static_cast<std::size_t>(i) * x.w();
          for (int j = 0; j < x.w(); ++j)
            for (int fx = 0; fx < factor; ++fx) row[j * factor + fx] = srow[j];
        }
    }
  return y;
}

}  // namespace

template <std::floating_point S>
Var<S> conv2d(Var<S> input, Var<S> weight, Var<S> bias, int stride,
              int zero_pad) {
  check_same_tape(input, weight, "conv2d");
  check_same_tape(input, bias, "conv2d");
  Tape<S>& t = *input.tape;
  Tensor<S> out = conv2d_fwd(t.value(input), t.value(weight), t.value(bias),
                             stride, zero_pad);
  auto bwd = [stride, zero_pad](Tape<S>& tp, const Tensor<S>& g,
                                const Tensor<S>&, std::array<int, 3> in) {
    const Tensor<S>& x = tp.value(in[0]);
    const Tensor<S>& w = tp.value(in[1]);
    Tensor<S>* gx = tp.grad_accumulator(in[0]);
    Tensor<S>* gw = tp.grad_accumulator(in[1]);
    Tensor<S>* gb = tp.grad_accumulator(in[2]);
    const int cout = w.n();
    const int k = w.c() * w.h() * w.w();
    const int oh = g.h(), ow = g.w();
    const int cols = oh * ow;
    if (gb) {
      for (int b = 0; b < g.n(); ++b)
        for (int co = 0; co < cout; ++co) {
          const S* p = g.plane(b, co);
          S acc = S(0);
          for (int i = 0; i < cols; ++i) acc += p[i];
          gb->at(0, co, 0, 0) += acc;
        }
    }
    std::vector<S> col(gw || gx ? static_cast<std::size_t>(k) * cols : 0);
    for (int b = 0; b < g.n(); ++b) {
      if (gw) {
        detail::im2col(x.plane(b, 0), x.c(), x.h(), x.w(), w.h(), w.w(),
                       stride, zero_pad, zero_pad, oh, ow, col.data());
        // gw[Cout x K] += g_b[Cout x HW] * col^T[HW x K]
        detail::gemm(false, true, cout, k, cols, S(1), g.plane(b, 0), cols,
                     col.data(), cols, S(1), gw->data(), k);
      }
      if (gx) {
        // col grads [K x HW] = W^T[K x Cout] * g_b[Cout x HW]
        detail::gemm(true, false, k, cols, cout, S(1), w.data(), k,
                     g.plane(b, 0), cols, S(0), col.data(), cols);
        detail::col2im(col.data(), x.c(), x.h(), x.w(), w.h(), w.w(), stride,
                       zero_pad, zero_pad, oh, ow, gx->plane(b, 0));
      }
    }
  };
  auto fwd = [stride, zero_pad](Tape<S>& tp, std::array<int, 3> in) {
    return conv2d_fwd(tp.value(in[0]), tp.value(in[1]), tp.value(in[2]),
                      stride, zero_pad);
  };
  return t.record("conv2d", {input.id, weight.id, bias.id}, std::move(out),
                  std::move(bwd), std::move(fwd));
}

template <std::floating_point S>
Var<S> fully_connected(Var<S> input, Var<S> weight, Var<S> bias) {
  check_same_tape(input, weight, "fully_connected");
  check_same_tape(input, bias, "fully_connected");
  Tape<S>& t = *input.tape;
  Tensor<S> out = fc_fwd(t.value(input), t.value(weight), t.value(bias));
  auto bwd = [](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>&,
                std::array<int, 3> in) {
    const Tensor<S>& x = tp.value(in[0]);
    const Tensor<S>& w = tp.value(in[1]);
    Tensor<S>* gx = tp.grad_accumulator(in[0]);
    Tensor<S>* gw = tp.grad_accumulator(in[1]);
    Tensor<S>* gb = tp.grad_accumulator(in[2]);
    const int n = x.n(), c = x.c(), cout = w.n();
    if (gx)  // gx[N x C] += g[N x Cout] * W[Cout x C]
      detail::gemm(false, false, n, c, cout, S(1), g.data(), cout, w.data(), c,
                   S(1), gx->data(), c);
    if (gw)  // gw[Cout x C] += g^T[Cout x N] * x[N x C]
      detail::gemm(true, false, cout, c, n, S(1), g.data(), cout, x.data(), c,
                   S(1), gw->data(), c);
    if (gb)
      for (int b = 0; b < n; ++b)
        for (int co = 0; co < cout; ++co)
          gb->at(0, co, 0, 0) += g.at(b, co, 0, 0);
  };
  auto fwd = [](Tape<S>& tp, std::array<int, 3> in) {
    return fc_fwd(tp.value(in[0]), tp.value(in[1]), tp.value(in[2]));
  };
  return t.record("fully_connected", {input.id, weight.id, bias.id},
                  std::move(out), std::move(bwd), std::move(fwd));
}

template <std::floating_point S>
Var<S> activation(Var<S> x, Activation kind) {
  Tape<S>& t = *x.tape;
  Tensor<S> out = activation_fwd(t.value(x), kind);
  auto bwd = [kind](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>& y,
                    std::array<int, 3> in) {
    Tensor<S>* gx = tp.grad_accumulator(in[0]);
    if (!gx) return;
    const S* gp = g.data();
    const S* yp = y.data();
    S* out = gx->data();
    const std::size_t sz = g.size();
    switch (kind) {
      case Activation::relu:
        for (std::size_t i = 0; i < sz; ++i)
          if (yp[i] > S(0)) out[i] += gp[i];
        break;
      case Activation::sigmoid:
        for (std::size_t i = 0; i < sz; ++i)
          out[i] += gp[i] * yp[i] * (S(1) - yp[i]);
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < sz; ++i)
          out[i] += gp[i] * (S(1) - yp[i] * yp[i]);
        break;
    }
  };
  auto fwd = [kind](Tape<S>& tp, std::array<int, 3> in) {
    return activation_fwd(tp.value(in[0]), kind);
  };
  return t.record("activation", {x.id, -1, -1}, std::move(out), std::move(bwd),
                  std::move(fwd));
}

template <std::floating_point S>
Var<S> softmax_over_taps(Var<S> x, int group_size) {
  Tape<S>& t = *x.tape;
  Tensor<S> out = softmax_fwd(t.value(x), group_size);
  auto bwd = [group_size](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>& y,
                          std::array<int, 3> in) {
    Tensor<S>* gx = tp.grad_accumulator(in[0]);
    if (!gx) return;
    const int groups = y.c() / group_size;
    const int plane = y.h() * y.w();
    std::vector<S> dot(plane);
    for (int b = 0; b < y.n(); ++b)
      for (int grp = 0; grp < groups; ++grp) {
        const int c0 = grp * group_size;
        for (int i = 0; i < plane; ++i) dot[i] = S(0);
        for (int k = 0; k < group_size; ++k) {
          const S* gp = g.plane(b, c0 + k);
          const S* yp = y.plane(b, c0 + k);
          for (int i = 0; i < plane; ++i) dot[i] += gp[i] * yp[i];
        }
        for (int k = 0; k < group_size; ++k) {
          const S* gp = g.plane(b, c0 + k);
          const S* yp = y.plane(b, c0 + k);
          S* o = gx->plane(b, c0 + k);
          for (int i = 0; i < plane; ++i) o[i] += yp[i] * (gp[i] - dot[i]);
        }
      }
  };
  auto fwd = [group_size](Tape<S>& tp, std::array<int, 3> in) {
    return softmax_fwd(tp.value(in[0]), group_size);
  };
  return t.record("softmax_over_taps", {x.id, -1, -1}, std::move(out),
                  std::move(bwd), std::move(fwd));
}

template <std::floating_point S>
Var<S> upsample_nearest(Var<S> x, int factor) {
  Tape<S>& t = *x.tape;
  Tensor<S> out = upsample_fwd(t.value(x), factor);
  auto bwd = [factor](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>&,
                      std::array<int, 3> in) {
    Tensor<S>* gx = tp.grad_accumulator(in[0]);
    if (!gx) return;
    const int h = gx->h(), w = gx->w();
    for (int b = 0; b < gx->n(); ++b)
      for (int c = 0; c < gx->c(); ++c) {
        S* dst = gx->plane(b, c);
        const S* src = g.plane(b, c);
        for (int i = 0; i < h; ++i)
          for (int fy = 0; fy < factor; ++fy) {
            const S* row =
                src + (static_cast<std::size_t>(i) * factor + fy) * w * factor;
            S* drow = dst + static_cast<std::size_t>(i) * w;
            for (int j = 0; j < w; ++j)
              for (int fx = 0; fx < factor; ++fx) drow[j] += row[j * factor + fx];
          }
      }
  };
  auto fwd = [factor](Tape<S>& tp, std::array<int, 3> in) {
    return upsample_fwd(tp.value(in[0]), factor);
  };
  return t.record("upsample_nearest", {x.id, -1, -1}, std::move(out),
                  std::move(bwd), std::move(fwd));
}

template <std::floating_point S>
Var<S> add(Var<S> a, Var<S> b) {
  check_same_tape(a, b, "add");
  Tape<S>& t = *a.tape;
  const Tensor<S>& av = t.value(a);
  const Tensor<S>& bv = t.value(b);
  if (!av.same_shape(bv))
    fail("add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Tensor<S> out(av.n(), av.c(), av.h(), av.w());
  for (std::size_t i = 0; i < av.size(); ++i)
    out.data()[i] = av.data()[i] + bv.data()[i];
  auto bwd = [](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>&,
                std::array<int, 3> in) {
    for (int side = 0; side < 2; ++side)
      if (Tensor<S>* gx = tp.grad_accumulator(in[side])) {
        S* o = gx->data();
        const S* gp = g.data();
        for (std::size_t i = 0; i < g.size(); ++i) o[i] += gp[i];
      }
  };
  auto fwd = [](Tape<S>& tp, std::array<int, 3> in) {
    const Tensor<S>& x = tp.value(in[0]);
    const Tensor<S>& y = tp.value(in[1]);
    Tensor<S> out(x.n(), x.c(), x.h(), x.w());
    for (std::size_t i = 0; i < x.size(); ++i)
      out.data()[i] = x.data()[i] + y.data()[i];
    return out;
  };
  return t.record("add", {a.id, b.id, -1}, std::move(out), std::move(bwd),
                  std::move(fwd));
}

template <std::floating_point S>
Var<S> mul(Var<S> a, Var<S> b) {
  check_same_tape(a, b, "mul");
  Tape<S>& t = *a.tape;
  const Tensor<S>& av = t.value(a);
  const Tensor<S>& bv = t.value(b);
  if (!av.same_shape(bv))
    fail("mul: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Tensor<S> out(av.n(), av.c(), av.h(), av.w());
  for (std::size_t i = 0; i < av.size(); ++i)
    out.data()[i] = av.data()[i] * bv.data()[i];
  auto bwd = [](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>&,
                std::array<int, 3> in) {
    const Tensor<S>& x = tp.value(in[0]);
    const Tensor<S>& y = tp.value(in[1]);
    if (Tensor<S>* gx = tp.grad_accumulator(in[0]))
      for (std::size_t i = 0; i < g.size(); ++i)
        gx->data()[i] += g.data()[i] * y.data()[i];
    if (Tensor<S>* gy = tp.grad_accumulator(in[1]))
      for (std::size_t i = 0; i < g.size(); ++i)
        gy->data()[i] += g.data()[i] * x.data()[i];
  };
  auto fwd = [](Tape<S>& tp, std::array<int, 3> in) {
    const Tensor<S>& x = tp.value(in[0]);
    const Tensor<S>& y = tp.value(in[1]);
    Tensor<S> out(x.n(), x.c(), x.h(), x.w());
    for (std::size_t i = 0; i < x.size(); ++i)
      out.data()[i] = x.data()[i] * y.data()[i];
    return out;
  };
  return t.record("mul", {a.id, b.id, -1}, std::move(out), std::move(bwd),
                  std::move(fwd));
}

template <std::floating_point S>
Var<S> scale(Var<S> x, S factor) {
  Tape<S>& t = *x.tape;
  const Tensor<S>& xv = t.value(x);
  Tensor<S> out(xv.n(), xv.c(), xv.h(), xv.w());
  for (std::size_t i = 0; i < xv.size(); ++i)
    out.data()[i] = xv.data()[i] * factor;
  auto bwd = [factor](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>&,
                      std::array<int, 3> in) {
    if (Tensor<S>* gx = tp.grad_accumulator(in[0]))
      for (std::size_t i = 0; i < g.size(); ++i)
        gx->data()[i] += g.data()[i] * factor;
  };
  auto fwd = [factor](Tape<S>& tp, std::array<int, 3> in) {
    const Tensor<S>& v = tp.value(in[0]);
    Tensor<S> out(v.n(), v.c(), v.h(), v.w());
    for (std::size_t i = 0; i < v.size(); ++i)
      out.data()[i] = v.data()[i] * factor;
    return out;
  };
  return t.record("scale", {x.id, -1, -1}, std::move(out), std::move(bwd),
                  std::move(fwd));
}

template <std::floating_point S>
Var<S> reshape(Var<S> x, int n, int c, int h, int w) {
  Tape<S>& t = *x.tape;
  const Tensor<S>& xv = t.value(x);
  if (static_cast<std::size_t>(n) * c * h * w != xv.size())
    fail("reshape: element count mismatch, " + xv.shape_str() + " -> [" +
         std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
         "," + std::to_string(w) + "]");
  Tensor<S> out(n, c, h, w);
  std::copy(xv.data(), xv.data() + xv.size(), out.data());
  auto bwd = [](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>&,
                std::array<int, 3> in) {
    if (Tensor<S>* gx = tp.grad_accumulator(in[0]))
      for (std::size_t i = 0; i < g.size(); ++i) gx->data()[i] += g.data()[i];
  };
  auto fwd = [n, c, h, w](Tape<S>& tp, std::array<int, 3> in) {
    const Tensor<S>& v = tp.value(in[0]);
    Tensor<S> out(n, c, h, w);
    std::copy(v.data(), v.data() + v.size(), out.data());
    return out;
  };
  return t.record("reshape", {x.id, -1, -1}, std::move(out), std::move(bwd),
                  std::move(fwd));
}

template <std::floating_point S>
Var<S> slice_channels(Var<S> x, int first, int count) {
  Tape<S>& t = *x.tape;
  const Tensor<S>& xv = t.value(x);
  if (first < 0 || count < 1 || first + count > xv.c())
    fail("slice_channels: range [" + std::to_string(first) + "," +
         std::to_string(first + count) + ") out of bounds for " +
         xv.shape_str());
  const std::size_t plane = static_cast<std::size_t>(xv.h()) * xv.w();
  Tensor<S> out(xv.n(), count, xv.h(), xv.w());
  for (int b = 0; b < xv.n(); ++b)
    for (int c = 0; c < count; ++c)
      std::copy(xv.plane(b, first + c), xv.plane(b, first + c) + plane,
                out.plane(b, c));
  auto bwd = [first, count](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>&,
                            std::array<int, 3> in) {
    Tensor<S>* gx = tp.grad_accumulator(in[0]);
    if (!gx) return;
    const std::size_t plane = static_cast<std::size_t>(g.h()) * g.w();
    for (int b = 0; b < g.n(); ++b)
      for (int c = 0; c < count; ++c) {
        const S* src = g.plane(b, c);
        S* dst = gx->plane(b, first + c);
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
  };
  auto fwd = [first, count](Tape<S>& tp, std::array<int, 3> in) {
    const Tensor<S>& v = tp.value(in[0]);
    const std::size_t plane = static_cast<std::size_t>(v.h()) * v.w();
    Tensor<S> out(v.n(), count, v.h(), v.w());
    for (int b = 0; b < v.n(); ++b)
      for (int c = 0; c < count; ++c)
        std::copy(v.plane(b, first + c), v.plane(b, first + c) + plane,
                  out.plane(b, c));
    return out;
  };
  return t.record("slice_channels", {x.id, -1, -1}, std::move(out),
                  std::move(bwd), std::move(fwd));
}

template <std::floating_point S>
Var<S> sum_all(Var<S> x) {
  Tape<S>& t = *x.tape;
  const Tensor<S>& xv = t.value(x);
  S acc = S(0);
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv.data()[i];
  auto bwd = [](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>&,
                std::array<int, 3> in) {
    if (Tensor<S>* gx = tp.grad_accumulator(in[0])) {
      const S gv = g.data()[0];
      for (std::size_t i = 0; i < gx->size(); ++i) gx->data()[i] += gv;
    }
  };
  auto fwd = [](Tape<S>& tp, std::array<int, 3> in) {
    const Tensor<S>& v = tp.value(in[0]);
    S acc = S(0);
    for (std::size_t i = 0; i < v.size(); ++i) acc += v.data()[i];
    return Tensor<S>::scalar(acc);
  };
  return t.record("sum_all", {x.id, -1, -1}, Tensor<S>::scalar(acc),
                  std::move(bwd), std::move(fwd));
}

#define DFN_INSTANTIATE_OPS(S)                                              \
  template Var<S> conv2d<S>(Var<S>, Var<S>, Var<S>, int, int);              \
  template Var<S> fully_connected<S>(Var<S>, Var<S>, Var<S>);               \
  template Var<S> activation<S>(Var<S>, Activation);                       \
  template Var<S> softmax_over_taps<S>(Var<S>, int);                        \
  template Var<S> upsample_nearest<S>(Var<S>, int);                         \
  template Var<S> add<S>(Var<S>, Var<S>);                                   \
  template Var<S> mul<S>(Var<S>, Var<S>);                                   \
  template Var<S> scale<S>(Var<S>, S);                                      \
  template Var<S> reshape<S>(Var<S>, int, int, int, int);                   \
  template Var<S> slice_channels<S>(Var<S>, int, int);                      \
  template Var<S> sum_all<S>(Var<S>);

DFN_INSTANTIATE_OPS(float)
DFN_INSTANTIATE_OPS(double)

}  // namespace dfn
