#include "dfn/models.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dfn/ops.hpp"
#include "dfn/rng.hpp"
#include "dfn/training.hpp"

namespace dfn {

// --- ArchDescriptor ----------------------------------------------------------

std::string ArchDescriptor::text() const {
  std::string out = "kind=" + kind + "\n";
  for (const auto& [k, v] : fields) out += k + "=" + v + "\n";
  return out;
}

ArchDescriptor ArchDescriptor::parse(const std::string& text) {
  ArchDescriptor arch;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("ArchDescriptor: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "kind")
      arch.kind = value;
    else
      arch.fields.emplace_back(key, value);
  }
  if (arch.kind.empty())
    throw std::invalid_argument("ArchDescriptor: missing kind");
  return arch;
}

bool ArchDescriptor::has(const std::string& key) const {
  for (const auto& [k, v] : fields)
    if (k == key) return true;
  return false;
}

std::string ArchDescriptor::get(const std::string& key) const {
  for (const auto& [k, v] : fields)
    if (k == key) return v;
  throw std::invalid_argument("ArchDescriptor: missing field '" + key + "'");
}

int ArchDescriptor::get_int(const std::string& key) const {
  return std::stoi(get(key));
}

void ArchDescriptor::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : fields)
    if (k == key) {
      v = value;
      return;
    }
  fields.emplace_back(key, value);
}

void ArchDescriptor::set_int(const std::string& key, int value) {
  set(key, std::to_string(value));
}

// --- Model -------------------------------------------------------------------

Tensor<float>& Model::param(const std::string& name) {
  for (auto& [k, v] : params)
    if (k == name) return v;
  throw std::invalid_argument("Model: no parameter named '" + name + "'");
}

const Tensor<float>& Model::param(const std::string& name) const {
  for (const auto& [k, v] : params)
    if (k == name) return v;
  throw std::invalid_argument("Model: no parameter named '" + name + "'");
}

bool Model::has_param(const std::string& name) const {
  for (const auto& [k, v] : params)
    if (k == name) return true;
  return false;
}

long long count_parameters(const Model& model) {
  long long total = 0;
  for (const auto& [k, v] : model.params) total += (long long)v.size();
  return total;
}

BoundModel bind_model(Tape<float>& tape, const Model& model) {
  BoundModel bm;
  bm.model = &model;
  bm.tape = &tape;
  bm.vars.reserve(model.params.size());
  for (const auto& [k, v] : model.params)
    bm.vars.push_back(tape.leaf(v, /*trainable=*/true));
  return bm;
}

Var<float> BoundModel::at(const std::string& name) const {
  for (std::size_t i = 0; i < model->params.size(); ++i)
    if (model->params[i].first == name) return vars[i];
  throw std::invalid_argument("BoundModel: no parameter named '" + name + "'");
}

namespace {

void add_conv_param(Model& m, const std::string& name, int cout, int cin,
                    int k, Rng& rng) {
  m.params.emplace_back(name + ".weight",
                        he_init<float>(cout, cin, k, k, cin * k * k, rng));
  m.params.emplace_back(name + ".bias", Tensor<float>(1, cout, 1, 1));
}

void add_fc_param(Model& m, const std::string& name, int out, int in,
                  Rng& rng) {
  m.params.emplace_back(name + ".weight",
                        he_init<float>(out, in, 1, 1, in, rng));
  m.params.emplace_back(name + ".bias", Tensor<float>(1, out, 1, 1));
}

Var<float> conv_relu(const BoundModel& bm, const std::string& name,
                     Var<float> x, int stride) {
  return activation(
      conv2d(x, bm.at(name + ".weight"), bm.at(name + ".bias"), stride, 1),
      Activation::relu);
}

Var<float> conv_linear(const BoundModel& bm, const std::string& name,
                       Var<float> x, int stride) {
  return conv2d(x, bm.at(name + ".weight"), bm.at(name + ".bias"), stride, 1);
}

// Shared convolutional encoder: two stride-2 stages, relu throughout.
Var<float> encode(const BoundModel& bm, Var<float> x) {
  Var<float> h = conv_relu(bm, "enc0", x, 1);
  h = conv_relu(bm, "enc1", h, 2);
  h = conv_relu(bm, "enc2", h, 1);
  h = conv_relu(bm, "enc3", h, 2);
  return h;
}

// Shared decoder to `out_channels` tap/bias maps at the input resolution.
Var<float> decode(const BoundModel& bm, Var<float> h) {
  Var<float> d = upsample_nearest(h, 2);
  d = conv_relu(bm, "dec0", d, 1);
  d = upsample_nearest(d, 2);
  d = conv_relu(bm, "dec1", d, 1);
  return conv_linear(bm, "dec2", d, 1);
}

}  // namespace

// --- Steerable net -----------------------------------------------------------

Model build_steerable_net(const std::vector<int>& hidden_sizes,
                          int filter_size, unsigned long long seed) {
  if (filter_size < 1 || filter_size % 2 == 0)
    throw std::invalid_argument("build_steerable_net: filter_size must be odd, got " +
                                std::to_string(filter_size));
  for (int hsize : hidden_sizes)
    if (hsize < 1)
      throw std::invalid_argument("build_steerable_net: hidden sizes must be >= 1");
  Model m;
  m.arch.kind = "steerable";
  m.arch.set_int("filter_size", filter_size);
  std::string hidden_text;
  for (std::size_t i = 0; i < hidden_sizes.size(); ++i)
    hidden_text += (i ? "," : "") + std::to_string(hidden_sizes[i]);
  m.arch.set("hidden", hidden_text);
  Rng rng(seed);
  int in = 2;  // (cos theta, sin theta)
  int layer = 0;
  for (int hsize : hidden_sizes) {
    add_fc_param(m, "fc" + std::to_string(layer++), hsize, in, rng);
    in = hsize;
  }
  add_fc_param(m, "fc" + std::to_string(layer), filter_size * filter_size, in,
               rng);
  return m;
}

SteerableOut steerable_forward(const BoundModel& bm, const Tensor<float>& image,
                               const std::vector<float>& angles) {
  Tape<float>& tape = *bm.tape;
  if ((int)angles.size() != image.n())
    throw std::invalid_argument("steerable_forward: need one angle per batch item");
  const int filter_size = bm.model->arch.get_int("filter_size");
  Tensor<float> enc(image.n(), 2, 1, 1);
  for (int b = 0; b < image.n(); ++b) {
    enc.at(b, 0, 0, 0) = std::cos(angles[std::size_t(b)]);
    enc.at(b, 1, 0, 0) = std::sin(angles[std::size_t(b)]);
  }
  Var<float> h = tape.constant(std::move(enc));
  int layer = 0;
  while (bm.model->has_param("fc" + std::to_string(layer + 1) + ".weight")) {
    const std::string name = "fc" + std::to_string(layer);
    h = activation(
        fully_connected(h, bm.at(name + ".weight"), bm.at(name + ".bias")),
        Activation::relu);
    ++layer;
  }
  const std::string last = "fc" + std::to_string(layer);
  SteerableOut out;
  out.taps = fully_connected(h, bm.at(last + ".weight"), bm.at(last + ".bias"));
  FilterField<float> field;
  field.spec = {filter_size, filter_size, 1, 1, FilterMode::convolutional};
  field.taps = out.taps;
  out.prediction = dynamic_convolution(tape.constant(image), field);
  return out;
}

// --- Video net ---------------------------------------------------------------

Model build_video_net(const VideoNetConfig& cfg, unsigned long long seed) {
  if (cfg.filter_size < 1 || cfg.filter_size % 2 == 0)
    throw std::invalid_argument("build_video_net: filter_size must be odd");
  if (cfg.c1 < 1 || cfg.c2 < 1)
    throw std::invalid_argument("build_video_net: channel counts must be >= 1");
  Model m;
  m.arch.kind = cfg.with_bias ? "video_bias" : "video";
  m.arch.set_int("c1", cfg.c1);
  m.arch.set_int("c2", cfg.c2);
  m.arch.set_int("filter_size", cfg.filter_size);
  Rng rng(seed);
  const int taps = cfg.filter_size * cfg.filter_size;
  add_conv_param(m, "enc0", cfg.c1, 1, 3, rng);
  add_conv_param(m, "enc1", cfg.c1, cfg.c1, 3, rng);
  add_conv_param(m, "enc2", cfg.c2, cfg.c1, 3, rng);
  add_conv_param(m, "enc3", cfg.c2, cfg.c2, 3, rng);
  add_conv_param(m, "rec0", cfg.c2, cfg.c2, 3, rng);
  add_conv_param(m, "rec1", cfg.c2, cfg.c2, 3, rng);
  add_conv_param(m, "dec0", cfg.c1, cfg.c2, 3, rng);
  add_conv_param(m, "dec1", cfg.c1, cfg.c1, 3, rng);
  add_conv_param(m, "dec2", taps + (cfg.with_bias ? 1 : 0), cfg.c1, 3, rng);
  return m;
}

VideoNetConfig video_config_of(const Model& model) {
  if (model.arch.kind != "video" && model.arch.kind != "video_bias")
    throw std::invalid_argument("video_config_of: model kind is '" +
                                model.arch.kind + "'");
  VideoNetConfig cfg;
  cfg.c1 = model.arch.get_int("c1");
  cfg.c2 = model.arch.get_int("c2");
  cfg.filter_size = model.arch.get_int("filter_size");
  cfg.with_bias = model.arch.kind == "video_bias";
  return cfg;
}

Var<float> video_initial_state(const BoundModel& bm, int n, int h, int w) {
  if (h % 4 != 0 || w % 4 != 0)
    throw std::invalid_argument(
        "video_initial_state: frame extents must be divisible by 4, got " +
        std::to_string(h) + "x" + std::to_string(w));
  const int c2 = bm.model->arch.get_int("c2");
  return bm.tape->constant(Tensor<float>(n, c2, h / 4, w / 4));
}

VideoStep video_step(const BoundModel& bm, Var<float> frame, Var<float> state,
                     bool decode_frame) {
  Tape<float>& tape = *bm.tape;
  const VideoNetConfig cfg = video_config_of(*bm.model);
  const int taps = cfg.filter_size * cfg.filter_size;

  Var<float> e = encode(bm, frame);
  Var<float> r = conv_relu(bm, "rec0", state, 1);
  r = conv_linear(bm, "rec1", r, 1);
  VideoStep step;
  step.state = activation(add(e, r), Activation::relu);
  if (!decode_frame) return step;

  Var<float> maps = decode(bm, step.state);
  Var<float> raw_taps =
      cfg.with_bias ? slice_channels(maps, 0, taps) : maps;
  step.taps = softmax_over_taps(raw_taps, taps);
  FilterField<float> field;
  field.spec = {cfg.filter_size, cfg.filter_size, 1, 1, FilterMode::local};
  field.taps = step.taps;
  step.prediction = dynamic_local_filtering(frame, field);
  if (cfg.with_bias) {
    step.bias = slice_channels(maps, taps, 1);
    step.prediction = dynamic_pixel_bias(step.prediction,
                                         BiasField<float>{step.bias});
    step.has_bias = true;
  }
  (void)tape;
  return step;
}

VideoRollout video_rollout(const BoundModel& bm,
                           const std::vector<Tensor<float>>& input_frames,
                           int horizon,
                           const std::vector<Tensor<float>>* teacher_frames) {
  if (input_frames.empty())
    throw std::invalid_argument("video_rollout: need at least one input frame");
  if (horizon < 1)
    throw std::invalid_argument("video_rollout: horizon must be >= 1, got " +
                                std::to_string(horizon));
  if (teacher_frames && (int)teacher_frames->size() < horizon - 1)
    throw std::invalid_argument(
        "video_rollout: teacher forcing needs horizon-1 ground-truth frames");
  Tape<float>& tape = *bm.tape;
  const Tensor<float>& first = input_frames.front();
  Var<float> state =
      video_initial_state(bm, first.n(), first.h(), first.w());

  VideoRollout out;
  Var<float> frame;
  VideoStep step;
  for (std::size_t t = 0; t < input_frames.size(); ++t) {
    frame = tape.constant(input_frames[t]);
    const bool last = t + 1 == input_frames.size();
    step = video_step(bm, frame, state, /*decode_frame=*/last);
    state = step.state;
  }
  out.predictions.push_back(step.prediction);
  out.taps.push_back(step.taps);
  if (step.has_bias) out.biases.push_back(step.bias);

  for (int j = 1; j < horizon; ++j) {
    frame = teacher_frames ? tape.constant((*teacher_frames)[std::size_t(j - 1)])
                           : out.predictions.back();
    step = video_step(bm, frame, state, /*decode_frame=*/true);
    state = step.state;
    out.predictions.push_back(step.prediction);
    out.taps.push_back(step.taps);
    if (step.has_bias) out.biases.push_back(step.bias);
  }
  return out;
}

std::vector<Tensor<float>> video_predict(
    const Model& model, const std::vector<Tensor<float>>& input_frames,
    int horizon) {
  Tape<float> tape;
  BoundModel bm = bind_model(tape, model);
  VideoRollout roll = video_rollout(bm, input_frames, horizon);
  std::vector<Tensor<float>> frames;
  frames.reserve(roll.predictions.size());
  for (Var<float> p : roll.predictions) frames.push_back(tape.value(p));
  return frames;
}

// --- Stereo net --------------------------------------------------------------

Model build_stereo_net(const StereoNetConfig& cfg, unsigned long long seed) {
  if (cfg.s_w < 1 || cfg.s_w % 2 == 0)
    throw std::invalid_argument("build_stereo_net: s_w must be odd");
  if (cfg.c1 < 1 || cfg.c2 < 1)
    throw std::invalid_argument("build_stereo_net: channel counts must be >= 1");
  Model m;
  m.arch.kind = "stereo";
  m.arch.set_int("c1", cfg.c1);
  m.arch.set_int("c2", cfg.c2);
  m.arch.set_int("s_w", cfg.s_w);
  Rng rng(seed);
  add_conv_param(m, "enc0", cfg.c1, 1, 3, rng);
  add_conv_param(m, "enc1", cfg.c1, cfg.c1, 3, rng);
  add_conv_param(m, "enc2", cfg.c2, cfg.c1, 3, rng);
  add_conv_param(m, "enc3", cfg.c2, cfg.c2, 3, rng);
  add_conv_param(m, "dec0", cfg.c1, cfg.c2, 3, rng);
  add_conv_param(m, "dec1", cfg.c1, cfg.c1, 3, rng);
  add_conv_param(m, "dec2", cfg.s_w, cfg.c1, 3, rng);
  return m;
}

StereoNetConfig stereo_config_of(const Model& model) {
  if (model.arch.kind != "stereo")
    throw std::invalid_argument("stereo_config_of: model kind is '" +
                                model.arch.kind + "'");
  StereoNetConfig cfg;
  cfg.c1 = model.arch.get_int("c1");
  cfg.c2 = model.arch.get_int("c2");
  cfg.s_w = model.arch.get_int("s_w");
  return cfg;
}

StereoOut stereo_forward(const BoundModel& bm, Var<float> left) {
  const StereoNetConfig cfg = stereo_config_of(*bm.model);
  const Tensor<float>& lv = bm.tape->value(left);
  if (lv.h() % 4 != 0 || lv.w() % 4 != 0)
    throw std::invalid_argument(
        "stereo_forward: frame extents must be divisible by 4, got " +
        lv.shape_str());
  Var<float> maps = decode(bm, encode(bm, left));
  StereoOut out;
  out.taps = softmax_over_taps(maps, cfg.s_w);
  FilterField<float> field;
  field.spec = {1, cfg.s_w, 1, 1, FilterMode::local};
  field.taps = out.taps;
  out.prediction = dynamic_local_filtering(left, field);
  return out;
}

Tensor<float> stereo_predict(const Model& model, const Tensor<float>& left) {
  Tape<float> tape;
  BoundModel bm = bind_model(tape, model);
  StereoOut out = stereo_forward(bm, tape.constant(left));
  return tape.value(out.prediction);
}

}  // namespace dfn
