#include "dfn/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dfn/datagen.hpp"
#include "dfn/flowviz.hpp"
#include "dfn/gradcheck.hpp"
#include "dfn/models.hpp"
#include "dfn/training.hpp"

namespace dfn::cli {
namespace {

constexpr int kSteerableImage = 32;
const std::vector<int> kSteerableHidden = {32};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_ll(const std::string& v, long long& out) {
  try {
    std::size_t pos = 0;
    out = std::stoll(v, &pos);
    return pos == v.size();
  } catch (...) {
    return false;
  }
}

bool parse_double(const std::string& v, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(v, &pos);
    return pos == v.size();
  } catch (...) {
    return false;
  }
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1") return out = true, true;
  if (v == "false" || v == "0") return out = false, true;
  return false;
}

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string RunConfig::text() const {
  std::string out;
  auto kv = [&out](const std::string& k, const std::string& v) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  };
  kv("task", task);
  kv("out_dir", out_dir);
  kv("checkpoint", checkpoint);
  kv("data_path", data_path);
  kv("lr", fmt_double(lr));
  kv("iterations", std::to_string(iterations));
  kv("batch", std::to_string(batch));
  kv("loss", loss);
  kv("smoothness", fmt_double(smoothness));
  kv("seed", std::to_string(seed));
  kv("eval_every", std::to_string(eval_every));
  kv("sequences", std::to_string(sequences));
  kv("teacher_forcing", teacher_forcing ? "true" : "false");
  kv("with_bias", with_bias ? "true" : "false");
  kv("c1", std::to_string(c1));
  kv("c2", std::to_string(c2));
  kv("gradcheck_seeds", std::to_string(gradcheck_seeds));
  kv("count", std::to_string(count));
  return out;
}

std::string apply_config_line(RunConfig& cfg, const std::string& raw,
                              int line_no) {
  std::string line = raw;
  const auto hash = line.find('#');
  if (hash != std::string::npos) line.erase(hash);
  line = trim(line);
  if (line.empty()) return "";
  const auto eq = line.find('=');
  if (eq == std::string::npos)
    return "config line " + std::to_string(line_no) + ": expected key=value, got '" +
           trim(raw) + "'";
  const std::string key = trim(line.substr(0, eq));
  const std::string val = trim(line.substr(eq + 1));
  auto bad = [&] {
    return "config line " + std::to_string(line_no) + ": invalid value '" + val +
           "' for '" + key + "'";
  };
  long long ll = 0;
  double d = 0;
  bool b = false;
  if (key == "task") cfg.task = val;
  else if (key == "out_dir") cfg.out_dir = val;
  else if (key == "checkpoint") cfg.checkpoint = val;
  else if (key == "data_path") cfg.data_path = val;
  else if (key == "loss") cfg.loss = val;
  else if (key == "lr") { if (!parse_double(val, d)) return bad(); cfg.lr = d; }
  else if (key == "smoothness") { if (!parse_double(val, d)) return bad(); cfg.smoothness = d; }
  else if (key == "iterations") { if (!parse_ll(val, ll)) return bad(); cfg.iterations = int(ll); }
  else if (key == "batch") { if (!parse_ll(val, ll)) return bad(); cfg.batch = int(ll); }
  else if (key == "seed") { if (!parse_ll(val, ll) || ll < 0) return bad(); cfg.seed = (unsigned long long)ll; }
  else if (key == "eval_every") { if (!parse_ll(val, ll)) return bad(); cfg.eval_every = int(ll); }
  else if (key == "sequences") { if (!parse_ll(val, ll)) return bad(); cfg.sequences = int(ll); }
  else if (key == "c1") { if (!parse_ll(val, ll)) return bad(); cfg.c1 = int(ll); }
  else if (key == "c2") { if (!parse_ll(val, ll)) return bad(); cfg.c2 = int(ll); }
  else if (key == "gradcheck_seeds") { if (!parse_ll(val, ll)) return bad(); cfg.gradcheck_seeds = int(ll); }
  else if (key == "count") { if (!parse_ll(val, ll)) return bad(); cfg.count = int(ll); }
  else if (key == "teacher_forcing") { if (!parse_bool(val, b)) return bad(); cfg.teacher_forcing = b; }
  else if (key == "with_bias") { if (!parse_bool(val, b)) return bad(); cfg.with_bias = b; }
  else
    return "config line " + std::to_string(line_no) + ": unknown key '" + key + "'";
  return "";
}

namespace {

[[noreturn]] void config_error(const std::string& msg) {
  throw std::invalid_argument(msg);
}

bool load_config_file(RunConfig& cfg, const std::string& path,
                      std::string& err) {
  std::ifstream f(path);
  if (!f) {
    err = "cannot open config file '" + path + "'";
    return false;
  }
  std::string line;
  int n = 0;
  while (std::getline(f, line)) {
    err = apply_config_line(cfg, line, ++n);
    if (!err.empty()) return false;
  }
  return true;
}

void check_task(const std::string& task) {
  if (task != "steerable" && task != "mnist" && task != "driving" &&
      task != "stereo")
    config_error("unknown task '" + task +
                 "' (expected steerable | mnist | driving | stereo)");
}

std::string resolved_loss(const RunConfig& cfg) {
  if (!cfg.loss.empty()) {
    if (cfg.loss != "bce" && cfg.loss != "euclidean")
      config_error("unknown loss '" + cfg.loss + "' (expected bce | euclidean)");
    return cfg.loss;
  }
  return cfg.task == "mnist" ? "bce" : "euclidean";
}

DigitSet resolve_digits(const RunConfig& cfg) {
  if (!cfg.data_path.empty()) return load_mnist_idx(cfg.data_path);
  return builtin_digit_set();
}

Model build_for_task(const RunConfig& cfg) {
  check_task(cfg.task);
  if (cfg.task == "steerable")
    return build_steerable_net(kSteerableHidden, 9, cfg.seed);
  if (cfg.task == "stereo")
    return build_stereo_net(StereoNetConfig{cfg.c1, cfg.c2, 13}, cfg.seed);
  VideoNetConfig vc;
  vc.c1 = cfg.c1;
  vc.c2 = cfg.c2;
  vc.with_bias = cfg.task == "driving" && cfg.with_bias;
  return build_video_net(vc, cfg.seed);
}

Model obtain_model(const RunConfig& cfg) {
  if (!cfg.checkpoint.empty()) return load_checkpoint(cfg.checkpoint);
  return build_for_task(cfg);
}

void check_model_matches_task(const Model& model, const std::string& task) {
  const std::string& kind = model.arch.kind;
  const bool video_kind = kind == "video" || kind == "video_bias";
  const bool ok = (task == "steerable" && kind == "steerable") ||
                  (task == "stereo" && kind == "stereo") ||
                  ((task == "mnist" || task == "driving") && video_kind);
  if (!ok)
    config_error("checkpoint holds a '" + kind +
                 "' network, which does not fit task '" + task + "'");
}

TrainConfig to_train_config(const RunConfig& cfg) {
  TrainConfig tc;
  tc.lr = cfg.lr;
  tc.iterations = cfg.iterations;
  tc.batch = cfg.batch;
  tc.loss = resolved_loss(cfg);
  tc.smoothness = cfg.smoothness;
  tc.seed = cfg.seed;
  tc.eval_every = cfg.eval_every;
  tc.teacher_forcing = cfg.teacher_forcing;
  return tc;
}

void echo_config(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const std::string text = cfg.text();
  std::printf("resolved configuration:\n%s", text.c_str());
  std::ofstream f(cfg.out_dir + "/config.txt", std::ios::trunc);
  if (!f)
    throw std::runtime_error("cannot write '" + cfg.out_dir + "/config.txt'");
  f << text;
}

int cmd_train(RunConfig cfg) {
  check_task(cfg.task);
  cfg.loss = resolved_loss(cfg);
  echo_config(cfg);
  Model model = obtain_model(cfg);
  check_model_matches_task(model, cfg.task);
  const TrainConfig tc = to_train_config(cfg);
  TrainOutcome out;
  if (cfg.task == "steerable") {
    out = train_steerable(model, tc, kSteerableImage);
  } else if (cfg.task == "mnist") {
    DigitSet digits = resolve_digits(cfg);
    out = train_video(model, tc, digits, MovingMnistConfig{});
  } else if (cfg.task == "driving") {
    out = train_driving(model, tc, DrivingConfig{});
  } else {
    out = train_stereo(model, tc, StereoConfig{});
  }
  const std::string ck = cfg.out_dir + "/model.dfn";
  save_checkpoint(model, ck);
  write_metrics_log(out.log_lines, cfg.out_dir + "/metrics.tsv");
  for (const std::string& line : out.log_lines)
    if (line.back() != '\t') std::printf("%s\n", line.c_str());
  std::printf("final loss %.6f, eval %.6f\n", out.final_loss, out.final_eval);
  std::printf("saved checkpoint to %s\n", ck.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  check_task(cfg.task);
  if (cfg.checkpoint.empty()) config_error("eval requires --checkpoint");
  Model model = load_checkpoint(cfg.checkpoint);
  check_model_matches_task(model, cfg.task);
  const int n = cfg.sequences;
  if (cfg.task == "steerable") {
    const double m = eval_steerable(model, std::max(1, n / 16), kSteerableImage);
    std::printf("normalized mse over %d batches: %.6f\n", std::max(1, n / 16), m);
    return 0;
  }
  double metric = 0, baseline = 0;
  const char* name = "";
  if (cfg.task == "mnist") {
    DigitSet digits = resolve_digits(cfg);
    MovingMnistConfig mc;
    metric = eval_video(model, digits, mc, n);
    baseline = video_copy_baseline(digits, mc, n);
    name = "bce";
  } else if (cfg.task == "driving") {
    DrivingConfig dc;
    metric = eval_driving(model, dc, n);
    baseline = driving_copy_baseline(dc, n);
    name = "euclidean";
  } else {
    StereoConfig sc;
    metric = eval_stereo(model, sc, n);
    baseline = stereo_copy_baseline(sc, n);
    name = "euclidean";
  }
  std::printf("model %s over %d pinned items: %.6f\n", name, n, metric);
  std::printf("copy-last baseline: %.6f\n", baseline);
  std::printf("ratio: %.4f\n", metric / baseline);
  return 0;
}

RasterImage black_frame(int w, int h) {
  RasterImage r;
  r.width = w;
  r.height = h;
  r.channels = 1;
  r.samples.assign(r.expected_samples(), 0);
  return r;
}

int cmd_predict(const RunConfig& cfg) {
  check_task(cfg.task);
  if (cfg.checkpoint.empty()) config_error("predict requires --checkpoint");
  Model model = load_checkpoint(cfg.checkpoint);
  check_model_matches_task(model, cfg.task);
  std::filesystem::create_directories(cfg.out_dir);
  Rng rng(cfg.seed, 0);
  std::vector<RasterImage> frames;
  int cols = 0;
  if (cfg.task == "steerable") {
    SteerablePair pair = gen_steerable_pair(rng, kSteerableImage);
    Tape<float> tape;
    BoundModel bm = bind_model(tape, model);
    SteerableOut out =
        steerable_forward(bm, pair.image, std::vector<float>{pair.angle});
    frames = {to_gray(pair.image), to_gray(pair.target),
              to_gray(tape.value(out.prediction))};
    cols = 3;
  } else if (cfg.task == "stereo") {
    StereoSample s = gen_synthetic_stereo(rng, StereoConfig{});
    Tensor<float> pred = stereo_predict(model, s.left);
    frames = {to_gray(s.left), to_gray(s.right), to_gray(pred)};
    cols = 3;
  } else {
    SequenceBatch seq;
    int t_in, t_out;
    if (cfg.task == "mnist") {
      DigitSet digits = resolve_digits(cfg);
      MovingMnistConfig mc;
      mc.batch = 1;
      seq = gen_moving_mnist(digits, mc, rng);
      t_in = mc.t_in;
      t_out = mc.t_out;
    } else {
      DrivingConfig dc;
      dc.batch = 1;
      seq = gen_synthetic_driving(rng, dc);
      t_in = dc.t_in;
      t_out = dc.t_out;
    }
    std::vector<Tensor<float>> inputs(seq.frames.begin(),
                                      seq.frames.begin() + t_in);
    std::vector<Tensor<float>> preds = video_predict(model, inputs, t_out);
    for (const Tensor<float>& f : seq.frames) frames.push_back(to_gray(f));
    for (int j = 0; j < t_in; ++j)
      frames.push_back(black_frame(seq.frames[0].w(), seq.frames[0].h()));
    for (const Tensor<float>& p : preds) frames.push_back(to_gray(p));
    cols = t_in + t_out;
  }
  const std::string path = cfg.out_dir + "/predict_" + cfg.task + ".pgm";
  write_pgm(montage(frames, cols), path);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int cmd_viz_flow(const RunConfig& cfg) {
  check_task(cfg.task);
  if (cfg.task == "steerable")
    config_error("viz-flow needs a local filter field; the steerable task "
                 "generates one shared convolutional filter");
  if (cfg.checkpoint.empty()) config_error("viz-flow requires --checkpoint");
  Model model = load_checkpoint(cfg.checkpoint);
  check_model_matches_task(model, cfg.task);
  std::filesystem::create_directories(cfg.out_dir);
  Rng rng(cfg.seed, 0);
  std::vector<RasterImage> frames;
  int cols = 0;
  if (cfg.task == "stereo") {
    const StereoNetConfig net = stereo_config_of(model);
    StereoSample s = gen_synthetic_stereo(rng, StereoConfig{});
    Tape<float> tape;
    BoundModel bm = bind_model(tape, model);
    Tensor<float> left = s.left;
    StereoOut out = stereo_forward(bm, tape.constant(std::move(left)));
    FilterSpec spec{1, net.s_w, 1, 1, FilterMode::local};
    FlowMap flow = filters_to_flow(spec, tape.value(out.taps));
    frames = {to_gray(s.left), to_gray(tape.value(out.prediction)),
              flow_to_color(flow, 0, float(net.s_w / 2))};
    cols = 3;
  } else {
    const VideoNetConfig net = video_config_of(model);
    SequenceBatch seq;
    int t_in, t_out;
    if (cfg.task == "mnist") {
      DigitSet digits = resolve_digits(cfg);
      MovingMnistConfig mc;
      mc.batch = 1;
      seq = gen_moving_mnist(digits, mc, rng);
      t_in = mc.t_in;
      t_out = mc.t_out;
    } else {
      DrivingConfig dc;
      dc.batch = 1;
      seq = gen_synthetic_driving(rng, dc);
      t_in = dc.t_in;
      t_out = dc.t_out;
    }
    std::vector<Tensor<float>> inputs(seq.frames.begin(),
                                      seq.frames.begin() + t_in);
    Tape<float> tape;
    BoundModel bm = bind_model(tape, model);
    VideoRollout roll = video_rollout(bm, inputs, t_out);
    FilterSpec spec{net.filter_size, net.filter_size, 1, 1, FilterMode::local};
    const float half = float(net.filter_size / 2);
    for (int j = 0; j < t_out; ++j)
      frames.push_back(to_gray(tape.value(roll.predictions[std::size_t(j)])));
    for (int j = 0; j < t_out; ++j) {
      FlowMap flow =
          filters_to_flow(spec, tape.value(roll.taps[std::size_t(j)]));
      frames.push_back(flow_to_color(flow, 0, half));
    }
    cols = t_out;
  }
  const std::string path = cfg.out_dir + "/flow_" + cfg.task + ".ppm";
  write_ppm(montage(frames, cols), path);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int cmd_gen_data(const RunConfig& cfg) {
  check_task(cfg.task);
  if (cfg.count < 1) config_error("gen-data: count must be >= 1");
  std::filesystem::create_directories(cfg.out_dir);
  for (int i = 0; i < cfg.count; ++i) {
    Rng rng(cfg.seed, (unsigned long long)i);
    std::vector<RasterImage> frames;
    int cols = 0;
    if (cfg.task == "steerable") {
      SteerablePair pair = gen_steerable_pair(rng, kSteerableImage);
      // Filtered responses are signed; recenter for display.
      Tensor<float> shown = pair.target;
      for (std::size_t e = 0; e < shown.size(); ++e)
        shown.data()[e] = 0.5f + 0.5f * shown.data()[e];
      frames = {to_gray(pair.image), to_gray(shown)};
      cols = 2;
    } else if (cfg.task == "stereo") {
      StereoSample s = gen_synthetic_stereo(rng, StereoConfig{});
      Tensor<float> disp = s.disparity;
      float dmax = 1.0f;
      for (std::size_t e = 0; e < disp.size(); ++e)
        dmax = std::max(dmax, disp.data()[e]);
      for (std::size_t e = 0; e < disp.size(); ++e) disp.data()[e] /= dmax;
      frames = {to_gray(s.left), to_gray(s.right), to_gray(disp)};
      cols = 3;
    } else {
      SequenceBatch seq;
      if (cfg.task == "mnist") {
        DigitSet digits = resolve_digits(cfg);
        MovingMnistConfig mc;
        mc.batch = 1;
        seq = gen_moving_mnist(digits, mc, rng);
      } else {
        DrivingConfig dc;
        dc.batch = 1;
        seq = gen_synthetic_driving(rng, dc);
      }
      for (const Tensor<float>& f : seq.frames) frames.push_back(to_gray(f));
      cols = seq.length();
    }
    char name[64];
    std::snprintf(name, sizeof name, "/%s_%03d.pgm", cfg.task.c_str(), i);
    write_pgm(montage(frames, cols), cfg.out_dir + name);
  }
  std::printf("wrote %d %s montages to %s\n", cfg.count, cfg.task.c_str(),
              cfg.out_dir.c_str());
  return 0;
}

int cmd_count_params(const RunConfig& cfg) {
  Model model = obtain_model(cfg);
  std::printf("%s: %lld parameters\n", model.arch.kind.c_str(),
              count_parameters(model));
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
  const double max_rel = run_gradcheck_suite(cfg.gradcheck_seeds, true);
  std::printf("gradcheck max relative error over %d seeds: %.3e\n",
              cfg.gradcheck_seeds, max_rel);
  if (max_rel >= 1e-4) {
    std::fprintf(stderr, "gradcheck FAILED (threshold 1e-4)\n");
    return 2;
  }
  return 0;
}

void add_common_options(CLI::App* sub, RunConfig& cfg, std::string& config_path) {
  sub->add_option("--config", config_path, "key=value config file");
  sub->add_option("--task", cfg.task, "steerable | mnist | driving | stereo");
  sub->add_option("--out-dir", cfg.out_dir, "output directory");
  sub->add_option("--checkpoint", cfg.checkpoint, "checkpoint to load");
  sub->add_option("--data", cfg.data_path, "IDX digit file (mnist task)");
  sub->add_option("--lr", cfg.lr, "Adam learning rate");
  sub->add_option("--iterations", cfg.iterations, "training iterations");
  sub->add_option("--batch", cfg.batch, "batch size");
  sub->add_option("--loss", cfg.loss, "bce | euclidean");
  sub->add_option("--smoothness", cfg.smoothness, "filter smoothness weight");
  sub->add_option("--seed", cfg.seed, "RNG seed");
  sub->add_option("--eval-every", cfg.eval_every, "eval cadence in steps");
  sub->add_option("--sequences", cfg.sequences, "eval-set size");
  sub->add_flag("--teacher-forcing", cfg.teacher_forcing,
                "condition the rollout on ground truth");
  sub->add_flag("--with-bias", cfg.with_bias, "driving: add per-pixel bias");
  sub->add_option("--c1", cfg.c1, "encoder width");
  sub->add_option("--c2", cfg.c2, "bottleneck width");
  sub->add_option("--gradcheck-seeds", cfg.gradcheck_seeds, "gradcheck seeds");
  sub->add_option("--count", cfg.count, "gen-data: item count");
}

}  // namespace

int run(int argc, const char* const* argv) {
  RunConfig cfg;
  // The config file is applied first so explicit flags win.
  std::string config_path;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) config_path = argv[i + 1];
    else if (a.rfind("--config=", 0) == 0) config_path = a.substr(9);
  }
  if (!config_path.empty()) {
    std::string err;
    if (!load_config_file(cfg, config_path, err)) {
      std::fprintf(stderr, "error: %s\n", err.c_str());
      return 1;
    }
  }

  CLI::App app{"dynamic filter networks on synthetic video, stereo and "
               "steerable-filter tasks"};
  app.require_subcommand(1);
  std::string sink;
  CLI::App* train = app.add_subcommand("train", "train a network");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the pinned set");
  CLI::App* predict = app.add_subcommand("predict", "write a prediction montage");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit of all ops");
  CLI::App* viz = app.add_subcommand("viz-flow", "render generated filters as color flow");
  CLI::App* gen = app.add_subcommand("gen-data", "export sample batches as images");
  CLI::App* count = app.add_subcommand("count-params", "print the parameter count");
  for (CLI::App* sub : {train, eval, predict, gradcheck, viz, gen, count})
    add_common_options(sub, cfg, sink);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand(train)) return cmd_train(cfg);
    if (app.got_subcommand(eval)) return cmd_eval(cfg);
    if (app.got_subcommand(predict)) return cmd_predict(cfg);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(cfg);
    if (app.got_subcommand(viz)) return cmd_viz_flow(cfg);
    if (app.got_subcommand(gen)) return cmd_gen_data(cfg);
    if (app.got_subcommand(count)) return cmd_count_params(cfg);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}

}  // namespace dfn::cli
