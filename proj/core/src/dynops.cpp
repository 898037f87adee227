#include "dfn/dynops.hpp"

#include <stdexcept>
#include <string>
#include <vector>

#include "dfn/ops.hpp"
#include "gemm.hpp"
#include "im2col.hpp"

namespace dfn {

void FilterSpec::validate() const {
  if (s_h < 1 || s_w < 1 || s_h % 2 == 0 || s_w % 2 == 0)
    throw std::invalid_argument("FilterSpec: extents must be odd and >= 1, got " +
                                std::to_string(s_h) + "x" + std::to_string(s_w));
  if (n < 1 || c_b < 1)
    throw std::invalid_argument("FilterSpec: n and c_b must be >= 1, got n=" +
                                std::to_string(n) + " c_b=" + std::to_string(c_b));
}

namespace {

template <std::floating_point S>
void check_field(const Tensor<S>& in, const Tensor<S>& taps,
                 const FilterSpec& spec, FilterMode expect, const char* op) {
  spec.validate();
  if (spec.mode != expect)
    throw std::invalid_argument(std::string(op) + ": filter field mode mismatch");
  if (in.c() != spec.c_b)
    throw std::invalid_argument(std::string(op) + ": input " + in.shape_str() +
                                " does not carry c_b=" + std::to_string(spec.c_b) +
                                " channels");
  if (taps.n() != in.n())
    throw std::invalid_argument(std::string(op) + ": batch mismatch, input " +
                                in.shape_str() + " vs taps " + taps.shape_str());
  if (taps.c() != spec.tap_channels())
    throw std::invalid_argument(std::string(op) + ": taps " + taps.shape_str() +
                                " must carry " + std::to_string(spec.tap_channels()) +
                                " channels");
  if (expect == FilterMode::local) {
    if (taps.h() != in.h() || taps.w() != in.w())
      throw std::invalid_argument(std::string(op) + ": local taps " +
                                  taps.shape_str() + " spatial extents must match input " +
                                  in.shape_str());
  } else {
    if (taps.h() != 1 || taps.w() != 1)
      throw std::invalid_argument(std::string(op) + ": convolutional taps must be " +
                                  "[N,C,1,1], got " + taps.shape_str());
  }
}

// G(b,f,i) = sum_r taps(b, f*cbK + r, i) * col_b[r][i], where the im2col row
// r = c*K + k matches the tap channel ordering exactly.
template <std::floating_point S>
Tensor<S> dlf_fwd(const Tensor<S>& in, const Tensor<S>& taps,
                  const FilterSpec& spec) {
  const int hw = in.h() * in.w();
  const int cbk = spec.taps_per_filter();
  Tensor<S> out(in.n(), spec.n, in.h(), in.w());
  std::vector<S> col(static_cast<std::size_t>(cbk) * hw);
  for (int b = 0; b < in.n(); ++b) {
    detail::im2col(in.plane(b, 0), in.c(), in.h(), in.w(), spec.s_h, spec.s_w,
                   1, spec.s_h / 2, spec.s_w / 2, in.h(), in.w(), col.data());
    for (int f = 0; f < spec.n; ++f) {
      S* o = out.plane(b, f);
      for (int r = 0; r < cbk; ++r) {
        const S* tp = taps.plane(b, f * cbk + r);
        const S* cp = col.data() + static_cast<std::size_t>(r) * hw;
        for (int i = 0; i < hw; ++i) o[i] += tp[i] * cp[i];
      }
    }
  }
  return out;
}

// Convolutional mode: one filter per sample; taps reshape to [n x cbK] and the
// application is a plain GEMM against the lowered input.
template <std::floating_point S>
Tensor<S> dconv_fwd(const Tensor<S>& in, const Tensor<S>& taps,
                    const FilterSpec& spec) {
  const int hw = in.h() * in.w();
  const int cbk = spec.taps_per_filter();
  Tensor<S> out(in.n(), spec.n, in.h(), in.w());
  std::vector<S> col(static_cast<std::size_t>(cbk) * hw);
  for (int b = 0; b < in.n(); ++b) {
    detail::im2col(in.plane(b, 0), in.c(), in.h(), in.w(), spec.s_h, spec.s_w,
                   1, spec.s_h / 2, spec.s_w / 2, in.h(), in.w(), col.data());
    detail::gemm(false, false, spec.n, hw, cbk, S(1), taps.plane(b, 0), cbk,
                 col.data(), hw, S(0), out.plane(b, 0), hw);
  }
  return out;
}

}  // namespace

template <std::floating_point S>
Var<S> dynamic_local_filtering(Var<S> input_b, const FilterField<S>& filters) {
  Tape<S>& t = *input_b.tape;
  if (filters.taps.tape != &t)
    throw std::invalid_argument("dynamic_local_filtering: operands on different tapes");
  const FilterSpec spec = filters.spec;
  check_field(t.value(input_b), t.value(filters.taps), spec, FilterMode::local,
              "dynamic_local_filtering");
  Tensor<S> out = dlf_fwd(t.value(input_b), t.value(filters.taps), spec);
  auto bwd = [spec](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>&,
                    std::array<int, 3> in) {
    const Tensor<S>& x = tp.value(in[0]);
    const Tensor<S>& taps = tp.value(in[1]);
    Tensor<S>* gx = tp.grad_accumulator(in[0]);
    Tensor<S>* gt = tp.grad_accumulator(in[1]);
    if (!gx && !gt) return;
    const int hw = x.h() * x.w();
    const int cbk = spec.taps_per_filter();
    std::vector<S> col(static_cast<std::size_t>(cbk) * hw);
    std::vector<S> gcol(gx ? col.size() : 0);
    for (int b = 0; b < x.n(); ++b) {
      if (gt) {
        detail::im2col(x.plane(b, 0), x.c(), x.h(), x.w(), spec.s_h, spec.s_w,
                       1, spec.s_h / 2, spec.s_w / 2, x.h(), x.w(), col.data());
        for (int f = 0; f < spec.n; ++f) {
          const S* gp = g.plane(b, f);
          for (int r = 0; r < cbk; ++r) {
            S* o = gt->plane(b, f * cbk + r);
            const S* cp = col.data() + static_cast<std::size_t>(r) * hw;
            for (int i = 0; i < hw; ++i) o[i] += gp[i] * cp[i];
          }
        }
      }
      if (gx) {
        std::fill(gcol.begin(), gcol.end(), S(0));
        for (int f = 0; f < spec.n; ++f) {
          const S* gp = g.plane(b, f);
          for (int r = 0; r < cbk; ++r) {
            const S* tp2 = taps.plane(b, f * cbk + r);
            S* o = gcol.data() + static_cast<std::size_t>(r) * hw;
            for (int i = 0; i < hw; ++i) o[i] += gp[i] * tp2[i];
          }
        }
        detail::col2im(gcol.data(), x.c(), x.h(), x.w(), spec.s_h, spec.s_w, 1,
                       spec.s_h / 2, spec.s_w / 2, x.h(), x.w(), gx->plane(b, 0));
      }
    }
  };
  auto fwd = [spec](Tape<S>& tp, std::array<int, 3> in) {
    return dlf_fwd(tp.value(in[0]), tp.value(in[1]), spec);
  };
  return t.record("dynamic_local_filtering", {input_b.id, filters.taps.id, -1},
                  std::move(out), std::move(bwd), std::move(fwd));
}

template <std::floating_point S>
Var<S> dynamic_convolution(Var<S> input_b, const FilterField<S>& filters) {
  Tape<S>& t = *input_b.tape;
  if (filters.taps.tape != &t)
    throw std::invalid_argument("dynamic_convolution: operands on different tapes");
  const FilterSpec spec = filters.spec;
  check_field(t.value(input_b), t.value(filters.taps), spec,
              FilterMode::convolutional, "dynamic_convolution");
  Tensor<S> out = dconv_fwd(t.value(input_b), t.value(filters.taps), spec);
  auto bwd = [spec](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>&,
                    std::array<int, 3> in) {
    const Tensor<S>& x = tp.value(in[0]);
    const Tensor<S>& taps = tp.value(in[1]);
    Tensor<S>* gx = tp.grad_accumulator(in[0]);
    Tensor<S>* gt = tp.grad_accumulator(in[1]);
    if (!gx && !gt) return;
    const int hw = x.h() * x.w();
    const int cbk = spec.taps_per_filter();
    std::vector<S> col(static_cast<std::size_t>(cbk) * hw);
    for (int b = 0; b < x.n(); ++b) {
      if (gt) {
        detail::im2col(x.plane(b, 0), x.c(), x.h(), x.w(), spec.s_h, spec.s_w,
                       1, spec.s_h / 2, spec.s_w / 2, x.h(), x.w(), col.data());
        // gt_b[n x cbK] += g_b[n x HW] * col^T
        detail::gemm(false, true, spec.n, cbk, hw, S(1), g.plane(b, 0), hw,
                     col.data(), hw, S(1), gt->plane(b, 0), cbk);
      }
      if (gx) {
        // gcol[cbK x HW] = taps_b^T[cbK x n] * g_b[n x HW]
        detail::gemm(true, false, cbk, hw, spec.n, S(1), taps.plane(b, 0), cbk,
                     g.plane(b, 0), hw, S(0), col.data(), hw);
        detail::col2im(col.data(), x.c(), x.h(), x.w(), spec.s_h, spec.s_w, 1,
                       spec.s_h / 2, spec.s_w / 2, x.h(), x.w(), gx->plane(b, 0));
      }
    }
  };
  auto fwd = [spec](Tape<S>& tp, std::array<int, 3> in) {
    return dconv_fwd(tp.value(in[0]), tp.value(in[1]), spec);
  };
  return t.record("dynamic_convolution", {input_b.id, filters.taps.id, -1},
                  std::move(out), std::move(bwd), std::move(fwd));
}

template <std::floating_point S>
Var<S> separable_dynamic_filtering(Var<S> input_b,
                                   const FilterField<S>& h_filters,
                                   const FilterField<S>& v_filters) {
  if (h_filters.spec.mode != v_filters.spec.mode)
    throw std::invalid_argument(
        "separable_dynamic_filtering: horizontal and vertical fields must share a mode");
  if (h_filters.spec.s_h != 1 || v_filters.spec.s_w != 1)
    throw std::invalid_argument(
        "separable_dynamic_filtering: expected 1xS horizontal and Sx1 vertical filters");
  if (v_filters.spec.c_b != h_filters.spec.n)
    throw std::invalid_argument(
        "separable_dynamic_filtering: vertical c_b must equal horizontal n");
  if (h_filters.spec.mode == FilterMode::local)
    return dynamic_local_filtering(dynamic_local_filtering(input_b, h_filters),
                                   v_filters);
  return dynamic_convolution(dynamic_convolution(input_b, h_filters),
                             v_filters);
}

template <std::floating_point S>
Var<S> dynamic_pixel_bias(Var<S> input, const BiasField<S>& bias) {
  return add(input, bias.values);
}

#define DFN_INSTANTIATE_DYNOPS(S)                                            \
  template Var<S> dynamic_convolution<S>(Var<S>, const FilterField<S>&);     \
  template Var<S> dynamic_local_filtering<S>(Var<S>, const FilterField<S>&); \
  template Var<S> separable_dynamic_filtering<S>(Var<S>, const FilterField<S>&, \
                                                 const FilterField<S>&);     \
  template Var<S> dynamic_pixel_bias<S>(Var<S>, const BiasField<S>&);

DFN_INSTANTIATE_DYNOPS(float)
DFN_INSTANTIATE_DYNOPS(double)

}  // namespace dfn
