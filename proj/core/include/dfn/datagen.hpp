#pragma once

#include <string>
#include <vector>

#include "dfn/rng.hpp"
#include "dfn/tensor.hpp"

namespace dfn {

/// A pool of 28x28 grayscale digit images with values in [0,1].
struct DigitSet {
  static constexpr int kSide = 28;
  std::vector<std::vector<float>> images;  ///< each kSide*kSide, row-major
  std::vector<int> labels;                 ///< optional; empty if unknown
  std::size_t size() const { return images.size(); }
};

/// Parses an IDX image file (big-endian, magic 0x00000803, 28x28 payload).
/// Throws std::runtime_error carrying the offending byte offset on bad magic
/// or truncation. Pixel bytes are scaled by 1/255.
DigitSet load_mnist_idx(const std::string& path);

/// Procedurally rasterized digit glyphs (one per class 0-9), used when no IDX
/// file is supplied. Same contract as load_mnist_idx's result.
DigitSet builtin_digit_set();

/// A batch of frame sequences: frames[t] is [N,1,H,W], t < t_in + t_out.
struct SequenceBatch {
  std::vector<Tensor<float>> frames;
  int t_in = 0;
  int t_out = 0;
  int length() const { return t_in + t_out; }
};

struct MovingMnistConfig {
  int num_digits = 2;
  int frame_h = 64;
  int frame_w = 64;
  int t_in = 10;
  int t_out = 10;
  float speed_min = 3.0f;  ///< px/frame
  float speed_max = 5.0f;
  int batch = 16;
};

/// Bouncing-digit sequences: uniform random start fully inside the frame,
/// direction uniform in [0,2pi), speed uniform in [speed_min,speed_max];
/// walls reflect the corresponding velocity component; overlaps combine by
/// per-pixel max. Deterministic given the rng state.
SequenceBatch gen_moving_mnist(const DigitSet& digits,
                               const MovingMnistConfig& cfg, Rng& rng);

/// First x/y derivatives of a Gaussian (sigma=1.5, 9x9 support), scaled to
/// unit L2 norm. Returned as [1,1,9,9].
Tensor<float> steerable_basis_gx();
Tensor<float> steerable_basis_gy();

/// cos(theta)*Gx + sin(theta)*Gy as a [1,1,9,9] filter.
Tensor<float> analytic_steerable_filter(float theta);

/// One supervision pair for the filter-steering task.
struct SteerablePair {
  Tensor<float> image;   ///< [1,1,S,S], smooth noise in [0,1]
  float angle = 0.0f;    ///< radians
  Tensor<float> target;  ///< image cross-correlated with the analytic filter
};

/// Draws a random smooth-noise image and a random angle (unless `theta` is
/// given) and computes the analytic target with zero-padded borders.
SteerablePair gen_steerable_pair(Rng& rng, int image_size);
SteerablePair gen_steerable_pair(Rng& rng, int image_size, float theta);

/// Batched variant: image/target stacked to [N,1,S,S] plus per-sample angles.
struct SteerableBatch {
  Tensor<float> images;
  Tensor<float> targets;
  std::vector<float> angles;
};
SteerableBatch gen_steerable_batch(Rng& rng, int batch, int image_size);

/// A stereo pair with per-pixel ground-truth disparity (rightward shift of
/// left content): right(i,j) == left(i,j+d(i,j)) on non-occluded pixels.
struct StereoSample {
  Tensor<float> left;       ///< [1,1,H,W]
  Tensor<float> right;      ///< [1,1,H,W]
  Tensor<float> disparity;  ///< [1,1,H,W], pixels >= 0
};

struct StereoConfig {
  int frame_h = 64;
  int frame_w = 128;
  /// Back-to-front layer disparities; the first entry is the full-frame
  /// background. Each must stay within the 13-tap reach (<= 6 px).
  std::vector<int> layer_disparities = {0, 2, 4};
};

/// Layered scene: textured background plus floating rectangles, each layer
/// brightness-coded by its disparity so the left view alone determines the
/// shift. Right view shifts each layer by its disparity, nearer layers
/// occlude farther ones.
StereoSample gen_synthetic_stereo(Rng& rng, const StereoConfig& cfg);

struct DrivingConfig {
  int frame_h = 64;
  int frame_w = 64;
  int t_in = 3;
  int t_out = 3;
  int batch = 16;
  bool illumination_ramp = true;
  /// Multiplicative end-of-sequence illumination factor range (dimming or
  /// brightening is chosen per sequence when ramping is on).
  float ramp_min = 0.6f;
  float ramp_max = 0.95f;
  int max_speed = 3;  ///< |px/frame| per layer, horizontal
};

/// Driving-like sequences: textured horizontal layers translating at constant
/// per-layer velocities, optionally under a global multiplicative
/// illumination ramp across the sequence.
SequenceBatch gen_synthetic_driving(Rng& rng, const DrivingConfig& cfg);

}  // namespace dfn
