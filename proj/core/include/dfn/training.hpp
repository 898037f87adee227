#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dfn/datagen.hpp"
#include "dfn/dynops.hpp"
#include "dfn/models.hpp"
#include "dfn/rng.hpp"
#include "dfn/tape.hpp"
#include "dfn/tensor.hpp"

namespace dfn {

// ---------------------------------------------------------------------------
// Losses (recorded on the tape; gradients flow through `pred` only).
// ---------------------------------------------------------------------------

/// Binary cross-entropy for one frame: per sample, the sum over pixels of
/// -[t ln q + (1-t) ln(1-q)] with q clamped to [1e-7, 1-1e-7]; the result is
/// the mean over the batch. Sequence losses average these per-frame values.
template <std::floating_point S>
Var<S> bce_frame_loss(Var<S> pred, const Tensor<S>& target);

/// Euclidean loss for one frame: per sample 1/2 * sum of squared differences,
/// mean over the batch.
template <std::floating_point S>
Var<S> euclidean_frame_loss(Var<S> pred, const Tensor<S>& target);

/// Total variation of the expected-offset maps (u,v) of a local filter field
/// with n = c_b = 1: sum of |u(i,j)-u(i+1,j)| + |u(i,j)-u(i,j+1)| (and the
/// same for v), mean over the batch. Zero for convolutional fields.
template <std::floating_point S>
Var<S> smoothness_penalty(const FilterField<S>& filters);

// ---------------------------------------------------------------------------
// Optimizer and initialization.
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <std::floating_point S>
struct AdamState {
  long long t = 0;
  std::vector<Tensor<S>> m;
  std::vector<Tensor<S>> v;
};

/// One Adam update over aligned parameter/gradient lists. Moments are
/// allocated on first use; a missing gradient or misaligned shape is
/// rejected.
template <std::floating_point S>
void adam_step(const std::vector<Tensor<S>*>& params,
               const std::vector<const Tensor<S>*>& grads,
               AdamState<S>& state, const AdamConfig& cfg);

/// Zero-mean normal with std sqrt(2/fan_in).
template <std::floating_point S>
Tensor<S> he_init(int n, int c, int h, int w, int fan_in, Rng& rng);

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr = 0.001;
  int iterations = 2000;
  int batch = 16;
  std::string loss = "bce";  ///< bce | euclidean
  double smoothness = 0.0;   ///< weight of the filter smoothness penalty
  unsigned long long seed = 1;
  int eval_every = 200;       ///< 0 disables cadence evals
  int eval_sequences = 64;    ///< eval-set size used at cadence points
  bool teacher_forcing = false;
};

/// Builds one iteration's scalar loss on the tape (batch drawn from `rng`).
using StepFn = std::function<Var<float>(Tape<float>&, BoundModel&, Rng&)>;
/// Evaluates the current model on `sequences` held-out items.
using EvalFn = std::function<double(const Model&, int sequences)>;

struct TrainOutcome {
  std::vector<std::string> log_lines;  ///< "step<TAB>loss<TAB>eval" per step
  double final_loss = 0.0;
  double final_eval = 0.0;
};

/// Runs cfg.iterations Adam steps. Batch randomness per step i comes from
/// Rng(cfg.seed, i), making logs bit-identical across runs at fixed seed.
/// Aborts with the step index and batch seed if the loss becomes NaN.
TrainOutcome train_loop(Model& model, const TrainConfig& cfg,
                        const StepFn& step, const EvalFn& eval = {});

// ---------------------------------------------------------------------------
// Checkpoints ("DFN1" container) and metrics logs.
// ---------------------------------------------------------------------------

void save_checkpoint(const Model& model, const std::string& path,
                     const AdamState<float>* adam = nullptr);
Model load_checkpoint(const std::string& path,
                      AdamState<float>* adam_out = nullptr);

void write_metrics_log(const std::vector<std::string>& lines,
                       const std::string& path);

// ---------------------------------------------------------------------------
// Task drivers shared by the CLI and the acceptance suite. Evaluation sets
// are pinned: item i is generated from Rng(seed, i), independent of batching.
// ---------------------------------------------------------------------------

inline constexpr unsigned long long kEvalSeed = 97531;

TrainOutcome train_steerable(Model& model, const TrainConfig& cfg,
                             int image_size = 32);
/// Mean squared error divided by target variance over `batches` pinned
/// batches of 16.
double eval_steerable(const Model& model, int batches = 8,
                      int image_size = 32,
                      unsigned long long seed = kEvalSeed);

TrainOutcome train_video(Model& model, const TrainConfig& cfg,
                         const DigitSet& digits, const MovingMnistConfig& gen);
/// Mean over sequences of (mean over predicted frames of per-frame bce).
double eval_video(const Model& model, const DigitSet& digits,
                  const MovingMnistConfig& gen, int sequences,
                  unsigned long long seed = kEvalSeed);
/// Same metric for the copy-last-input-frame predictor.
double video_copy_baseline(const DigitSet& digits,
                           const MovingMnistConfig& gen, int sequences,
                           unsigned long long seed = kEvalSeed);

TrainOutcome train_stereo(Model& model, const TrainConfig& cfg,
                          const StereoConfig& gen);
double eval_stereo(const Model& model, const StereoConfig& gen, int samples,
                   unsigned long long seed = kEvalSeed);
double stereo_copy_baseline(const StereoConfig& gen, int samples,
                            unsigned long long seed = kEvalSeed);

TrainOutcome train_driving(Model& model, const TrainConfig& cfg,
                           const DrivingConfig& gen);
double eval_driving(const Model& model, const DrivingConfig& gen,
                    int sequences, unsigned long long seed = kEvalSeed);
double driving_copy_baseline(const DrivingConfig& gen, int sequences,
                             unsigned long long seed = kEvalSeed);

}  // namespace dfn
