#pragma once

#include "dfn/tape.hpp"
#include "dfn/tensor.hpp"

namespace dfn {

/// Whether one generated filter is shared across all positions (convolutional)
/// or each output position has its own filter (local).
enum class FilterMode { convolutional, local };

/// Static description of a generated filter bank.
struct FilterSpec {
  int s_h = 1;    ///< filter height (odd)
  int s_w = 1;    ///< filter width (odd)
  int n = 1;      ///< number of generated filters (output channels)
  int c_b = 1;    ///< channels of the filtered input
  FilterMode mode = FilterMode::local;

  /// Taps per filter: s_h * s_w * c_b. This is the softmax group size that
  /// makes each filter's taps a convex combination.
  int taps_per_filter() const { return s_h * s_w * c_b; }
  /// Total tap channels: n * c_b * s_h * s_w.
  int tap_channels() const { return n * taps_per_filter(); }
  /// Validates invariants; throws std::invalid_argument on violation.
  void validate() const;
};

/// A bank of sample-specific generated filters living on a tape.
///
/// Channel ordering of `taps` is f-major, then input channel, then tap:
/// channel = (f * c_b + c) * (s_h * s_w) + k, where tap k maps to spatial
/// offset (dy, dx) = (k / s_w - s_h/2, k % s_w - s_w/2).
/// Local mode: taps is [N, tap_channels, H, W]; convolutional mode:
/// [N, tap_channels, 1, 1].
template <std::floating_point S>
struct FilterField {
  FilterSpec spec;
  Var<S> taps;
};

/// A per-pixel additive bias [N, n, H, W] generated by a network.
template <std::floating_point S>
struct BiasField {
  Var<S> values;
};

/// Applies sample b's single generated filter at every position of sample b
/// of `input_b` (Eq. 1 style). Zero padding keeps spatial extents. Output is
/// [N, n, H, W]; differentiable w.r.t. both input and taps.
template <std::floating_point S>
Var<S> dynamic_convolution(Var<S> input_b, const FilterField<S>& filters);

/// Applies a distinct generated filter at every output position (Eq. 2
/// style): G(b,f,i,j) = sum_{c,k} taps(b,(f*c_b+c)*K+k,i,j) *
/// input(b,c,i+dy_k,j+dx_k), out-of-image reads are zero. Output is
/// [N, n, H, W]; differentiable w.r.t. both input and taps.
template <std::floating_point S>
Var<S> dynamic_local_filtering(Var<S> input_b, const FilterField<S>& filters);

/// Applies horizontal filters (1 x s_w) then vertical filters (s_h x 1)
/// consecutively. Both fields must share the same mode.
template <std::floating_point S>
Var<S> separable_dynamic_filtering(Var<S> input_b,
                                   const FilterField<S>& h_filters,
                                   const FilterField<S>& v_filters);

/// Adds a generated per-pixel bias to the filtered output.
template <std::floating_point S>
Var<S> dynamic_pixel_bias(Var<S> input, const BiasField<S>& bias);

}  // namespace dfn
