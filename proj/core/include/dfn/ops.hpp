#pragma once

#include "dfn/tape.hpp"

namespace dfn {

enum class Activation { relu, sigmoid, tanh };

/// Cross-correlation (the usual deep-learning "convolution", no kernel flip)
/// with zero padding. input [N,Cin,H,W], weight [Cout,Cin,kh,kw] with odd
/// kh,kw, bias [1,Cout,1,1]. Output spatial extents follow
/// floor((H + 2*pad - kh)/stride) + 1.
template <std::floating_point S>
Var<S> conv2d(Var<S> input, Var<S> weight, Var<S> bias, int stride = 1,
              int zero_pad = 0);

/// Affine map per batch item. input [N,C,1,1], weight [Cout,C,1,1],
/// bias [1,Cout,1,1] -> [N,Cout,1,1]. Flatten spatial input with reshape()
/// first.
template <std::floating_point S>
Var<S> fully_connected(Var<S> input, Var<S> weight, Var<S> bias);

template <std::floating_point S>
Var<S> activation(Var<S> x, Activation kind);

/// Softmax over consecutive channel groups of size `group_size`, applied
/// independently at every (sample, position). Stabilized by per-group max
/// subtraction; each group's outputs are positive and sum to 1.
template <std::floating_point S>
Var<S> softmax_over_taps(Var<S> x, int group_size);

/// Each pixel replicated into a factor x factor block; the backward pass
/// sums gradients over each block.
template <std::floating_point S>
Var<S> upsample_nearest(Var<S> x, int factor);

template <std::floating_point S>
Var<S> add(Var<S> a, Var<S> b);

/// Elementwise product.
template <std::floating_point S>
Var<S> mul(Var<S> a, Var<S> b);

template <std::floating_point S>
Var<S> scale(Var<S> x, S factor);

/// Row-major reinterpretation to a new shape with the same element count.
template <std::floating_point S>
Var<S> reshape(Var<S> x, int n, int c, int h, int w);

/// Channels [first, first+count) of x.
template <std::floating_point S>
Var<S> slice_channels(Var<S> x, int first, int count);

/// Scalar sum of all elements.
template <std::floating_point S>
Var<S> sum_all(Var<S> x);

}  // namespace dfn
