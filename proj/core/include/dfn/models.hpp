#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dfn/dynops.hpp"
#include "dfn/tape.hpp"
#include "dfn/tensor.hpp"

namespace dfn {

/// Plain-text architecture descriptor persisted with checkpoints. Round-trips
/// bit-exactly: text() -> parse() -> text() is the identity.
struct ArchDescriptor {
  std::string kind;  ///< steerable | video | video_bias | stereo
  std::vector<std::pair<std::string, std::string>> fields;  ///< ordered

  std::string text() const;
  static ArchDescriptor parse(const std::string& text);

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;  ///< throws if missing
  int get_int(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, int value);
};

/// A named parameter set plus its architecture descriptor. Parameters are
/// stored in a fixed build order; that order defines checkpoint layout and
/// optimizer-state alignment.
struct Model {
  ArchDescriptor arch;
  std::vector<std::pair<std::string, Tensor<float>>> params;

  Tensor<float>& param(const std::string& name);
  const Tensor<float>& param(const std::string& name) const;
  bool has_param(const std::string& name) const;
};

/// Total element count over all parameter tensors.
long long count_parameters(const Model& model);

/// A model's parameters registered as trainable leaves on one tape, aligned
/// with Model::params order.
struct BoundModel {
  const Model* model = nullptr;
  Tape<float>* tape = nullptr;
  std::vector<Var<float>> vars;

  Var<float> at(const std::string& name) const;  ///< throws if missing
};

BoundModel bind_model(Tape<float>& tape, const Model& model);

// ---------------------------------------------------------------------------
// Steerable-filter network: fully-connected layers mapping an angle (encoded
// as cos/sin) to one signed 9x9 filter, applied by dynamic convolution.
// ---------------------------------------------------------------------------

/// hidden_sizes are the widths between the 2-wide input and the filter_size^2
/// output layer. Even filter_size is rejected.
Model build_steerable_net(const std::vector<int>& hidden_sizes,
                          int filter_size, unsigned long long seed);

struct SteerableOut {
  Var<float> prediction;  ///< [N,1,H,W]
  Var<float> taps;        ///< [N,filter_size^2,1,1], signed (no softmax)
};

/// angles are radians, one per batch item of `image` [N,1,H,W].
SteerableOut steerable_forward(const BoundModel& bm, const Tensor<float>& image,
                               const std::vector<float>& angles);

// ---------------------------------------------------------------------------
// Video-prediction network: convolutional encoder-decoder with a recurrent
// bottleneck; the decoder emits softmax-constrained filter taps (plus an
// optional per-pixel bias channel) consumed by dynamic local filtering.
// ---------------------------------------------------------------------------

struct VideoNetConfig {
  int c1 = 32;          ///< encoder stage-1 / decoder channels
  int c2 = 64;          ///< bottleneck channels
  int filter_size = 9;  ///< odd; taps per position = filter_size^2
  bool with_bias = false;
};

Model build_video_net(const VideoNetConfig& cfg, unsigned long long seed);
VideoNetConfig video_config_of(const Model& model);

struct VideoStep {
  Var<float> prediction;  ///< [N,1,H,W]
  Var<float> taps;        ///< [N,filter_size^2,H,W], post-softmax
  Var<float> bias;        ///< [N,1,H,W] when with_bias, else unset
  Var<float> state;       ///< [N,c2,H/4,W/4]
  bool has_bias = false;
};

/// One recurrent step: consumes a frame and the previous hidden state,
/// produces the next-frame prediction (when `decode`) and the new state.
VideoStep video_step(const BoundModel& bm, Var<float> frame, Var<float> state,
                     bool decode = true);

/// Zero hidden state for batch n on the bound model's tape.
Var<float> video_initial_state(const BoundModel& bm, int n, int h, int w);

struct VideoRollout {
  std::vector<Var<float>> predictions;  ///< horizon frames [N,1,H,W]
  std::vector<Var<float>> taps;         ///< tap field per predicted frame
  std::vector<Var<float>> biases;       ///< per frame when with_bias
};

/// Runs the inputs through the recurrence, then emits `horizon` predictions.
/// The first prediction follows the last input; afterwards the model's own
/// prediction is fed back, unless `teacher_frames` supplies ground truth
/// (teacher forcing). H and W must be divisible by 4; horizon >= 1.
VideoRollout video_rollout(
    const BoundModel& bm, const std::vector<Tensor<float>>& input_frames,
    int horizon, const std::vector<Tensor<float>>* teacher_frames = nullptr);

/// Inference wrapper: builds a throwaway tape and returns predicted frames.
std::vector<Tensor<float>> video_predict(
    const Model& model, const std::vector<Tensor<float>>& input_frames,
    int horizon);

// ---------------------------------------------------------------------------
// Stereo network: the video net's encoder-decoder without recurrence; emits
// horizontal 1 x s_w filters that map the left view to the right.
// ---------------------------------------------------------------------------

struct StereoNetConfig {
  int c1 = 32;
  int c2 = 64;
  int s_w = 13;  ///< horizontal filter width (odd)
};

Model build_stereo_net(const StereoNetConfig& cfg, unsigned long long seed);
StereoNetConfig stereo_config_of(const Model& model);

struct StereoOut {
  Var<float> prediction;  ///< [N,1,H,W] predicted right view
  Var<float> taps;        ///< [N,s_w,H,W], post-softmax
};

StereoOut stereo_forward(const BoundModel& bm, Var<float> left);

/// Inference wrapper for a left view [N,1,H,W].
Tensor<float> stereo_predict(const Model& model, const Tensor<float>& left);

}  // namespace dfn
