#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dfn/tape.hpp"
#include "dfn/tensor.hpp"

namespace dfn {

/// Per-leaf outcome of a finite-difference comparison.
struct LeafReport {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

/// Aggregate finite-difference report over all checked leaves.
struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<LeafReport> per_leaf;
};

/// Builds a scalar loss on `tape` from the trainable leaf variables handed in
/// (one per input tensor, in order).
using LossBuilder = std::function<Var<double>(
    Tape<double>&, const std::vector<Var<double>>&)>;

/// Central-difference gradient check in double precision.
///
/// Registers every tensor in `leaves` as a trainable leaf, obtains reverse-mode
/// gradients of builder's scalar loss, then perturbs each element by +/-eps and
/// compares (f(x+eps) - f(x-eps)) / (2 eps) against the stored gradient.
/// Relative error per element is |a-b| / max(1e-8, |a|+|b|).
GradCheckReport gradient_check(const LossBuilder& builder,
                               const std::vector<Tensor<double>>& leaves,
                               double eps = 1e-5,
                               const std::vector<std::string>& names = {});

/// Runs the library-wide finite-difference suite: conv2d, fully_connected,
/// every activation, softmax_over_taps, upsample, dynamic_convolution,
/// dynamic_local_filtering, the separable variant, pixel bias, and both
/// losses, `seeds` random instances each. Prints one line per case when
/// `verbose`. Returns the max relative error across the whole suite.
double run_gradcheck_suite(int seeds = 20, bool verbose = true);

}  // namespace dfn
