#pragma once

#include <string>
#include <vector>

namespace dfn::cli {

/// Fully resolved run settings: config-file values overridden by CLI flags.
struct RunConfig {
  std::string command;
  std::string task = "mnist";  ///< steerable | mnist | driving | stereo
  std::string out_dir = "out";
  std::string checkpoint;
  std::string data_path;  ///< optional IDX digit file for the mnist task
  double lr = 0.001;
  int iterations = 2000;
  int batch = 16;
  std::string loss;  ///< empty = task default (bce for mnist, else euclidean)
  double smoothness = 0.0;
  unsigned long long seed = 1;
  int eval_every = 200;
  int sequences = 200;  ///< eval-set size
  bool teacher_forcing = false;
  bool with_bias = false;  ///< driving task: per-pixel bias variant
  int c1 = 32;
  int c2 = 64;
  int gradcheck_seeds = 20;
  int count = 4;  ///< gen-data: batches to export

  /// Serialized key=value form, echoed into the output directory.
  std::string text() const;
};

/// Applies `key = value` lines (with # comments) onto `cfg`. Unknown keys are
/// rejected. Used for --config files; returns an error message or empty.
std::string apply_config_line(RunConfig& cfg, const std::string& line,
                              int line_no);

/// Entry point behind main(). Exit codes: 0 success, 1 usage/config error,
/// 2 runtime failure.
int run(int argc, const char* const* argv);

}  // namespace dfn::cli
