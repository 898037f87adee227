#pragma once

#include <concepts>

// Lowering between image planes and patch-column matrices, shared by the
// static and dynamic convolution paths. Column matrix layout:
// row r = (c*kh + ky)*kw + kx, one column per output position (row-major
// over the output plane). Out-of-image taps read zeros.

namespace dfn::detail {

template <std::floating_point S>
void im2col(const S* im, int channels, int height, int width, int kh, int kw,
            int stride, int pad_h, int pad_w, int out_h, int out_w, S* col) {
  for (int c = 0; c < channels; ++c) {
    const S* plane = im + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        S* row = col + (static_cast<std::size_t>(c) * kh * kw + ky * kw + kx) *
                           out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
          int iy = oy * stride + ky - pad_h;
          S* dst = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= height) {
            for (int ox = 0; ox < out_w; ++ox) dst[ox] = S(0);
            continue;
          }
          const S* src = plane + static_cast<std::size_t>(iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            int ix = ox * stride + kx - pad_w;
            dst[ox] = (ix >= 0 && ix < width) ? src[ix] : S(0);
          }
        }
      }
    }
  }
}

/// Scatter-add of a column matrix back onto image planes; inverse map of
/// im2col under accumulation.
template <std::floating_point S>
void col2im(const S* col, int channels, int height, int width, int kh, int kw,
            int stride, int pad_h, int pad_w, int out_h, int out_w, S* im) {
  for (int c = 0; c < channels; ++c) {
    S* plane = im + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const S* row = col + (static_cast<std::size_t>(c) * kh * kw + ky * kw +
                              kx) *
                                 out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
          int iy = oy * stride + ky - pad_h;
          if (iy < 0 || iy >= height) continue;
          const S* src = row + static_cast<std::size_t>(oy) * out_w;
          S* dst = plane + static_cast<std::size_t>(iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            int ix = ox * stride + kx - pad_w;
            if (ix >= 0 && ix < width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace dfn::detail
