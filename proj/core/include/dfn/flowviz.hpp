#pragma once

#include <string>
#include <vector>

#include "dfn/dynops.hpp"
#include "dfn/tensor.hpp"

namespace dfn {

/// Expected x/y shift per position, in pixels. x grows rightward, y downward.
/// With softmax-normalized taps, |u| <= s_w/2 and |v| <= s_h/2.
struct FlowMap {
  Tensor<float> u;  ///< [N,1,H,W]
  Tensor<float> v;  ///< [N,1,H,W]
};

/// Expected-offset map of a local filter field with n = c_b = 1:
/// u(i,j) = sum_k w_k(i,j) dx_k, v likewise with dy_k.
FlowMap filters_to_flow(const FilterSpec& spec, const Tensor<float>& taps);

/// 8-bit raster image, 1 (gray) or 3 (RGB) interleaved channels.
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<unsigned char> samples;

  std::size_t expected_samples() const {
    return static_cast<std::size_t>(width) * height * channels;
  }
};

/// Color-wheel rendering of one batch item: hue = atan2(v,u), saturation
/// proportional to magnitude / max_mag (map max when max_mag <= 0), value 1.
/// Zero flow renders white.
RasterImage flow_to_color(const FlowMap& flow, int batch_index = 0,
                          float max_mag = 0.0f);

/// Clamps a [0,1] tensor plane to 8-bit gray.
RasterImage to_gray(const Tensor<float>& t, int b = 0, int c = 0);

/// Binary PGM (P5, channels=1) / PPM (P6, channels=3) writers: magic line,
/// "W H", "255", then raw samples. I/O failures throw with the path.
void write_pgm(const RasterImage& image, const std::string& path);
void write_ppm(const RasterImage& image, const std::string& path);

/// Reads back a binary PGM/PPM written by the functions above.
RasterImage read_pnm(const std::string& path);

/// Row-major grid of uniform-size frames with 2-px black separators. Gray
/// frames are promoted to RGB if any frame is RGB. Empty list is rejected.
RasterImage montage(const std::vector<RasterImage>& frames, int cols);

}  // namespace dfn
