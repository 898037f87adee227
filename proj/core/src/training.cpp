#include "dfn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dfn/ops.hpp"

namespace dfn {
namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

constexpr double kBceClamp = 1e-7;

template <std::floating_point S>
Tensor<S> bce_value_tensor(const Tensor<S>& q, const Tensor<S>& t) {
  const double lo = kBceClamp, hi = 1.0 - kBceClamp;
  double acc = 0.0;
  const S* qp = q.data();
  const S* tp = t.data();
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double qc = std::clamp(double(qp[i]), lo, hi);
    acc -= double(tp[i]) * std::log(qc) +
           (1.0 - double(tp[i])) * std::log(1.0 - qc);
  }
  return Tensor<S>::scalar(S(acc / q.n()));
}

template <std::floating_point S>
Tensor<S> euclid_value_tensor(const Tensor<S>& p, const Tensor<S>& t) {
  double acc = 0.0;
  const S* pp = p.data();
  const S* tp = t.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = double(pp[i]) - double(tp[i]);
    acc += d * d;
  }
  return Tensor<S>::scalar(S(0.5 * acc / p.n()));
}

}  // namespace

template <std::floating_point S>
Var<S> bce_frame_loss(Var<S> pred, const Tensor<S>& target) {
  Tape<S>& tape = *pred.tape;
  if (!tape.value(pred).same_shape(target))
    fail("bce_frame_loss: prediction " + tape.value(pred).shape_str() +
         " vs target " + target.shape_str());
  Var<S> tgt = tape.constant(target);
  Tensor<S> out = bce_value_tensor(tape.value(pred), target);
  auto bwd = [](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>&,
                std::array<int, 3> in) {
    Tensor<S>* gx = tp.grad_accumulator(in[0]);
    if (!gx) return;
    const Tensor<S>& q = tp.value(in[0]);
    const Tensor<S>& t = tp.value(in[1]);
    const double gs = double(g.data()[0]) / q.n();
    const double lo = kBceClamp, hi = 1.0 - kBceClamp;
    S* o = gx->data();
    const S* qp = q.data();
    const S* tp2 = t.data();
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double qv = double(qp[i]);
      if (qv <= lo || qv >= hi) continue;  // clamped region: flat
      o[i] += S(gs * (-double(tp2[i]) / qv + (1.0 - double(tp2[i])) / (1.0 - qv)));
    }
  };
  auto fwd = [](Tape<S>& tp, std::array<int, 3> in) {
    return bce_value_tensor(tp.value(in[0]), tp.value(in[1]));
  };
  return tape.record("bce_frame_loss", {pred.id, tgt.id, -1}, std::move(out),
                     std::move(bwd), std::move(fwd));
}

template <std::floating_point S>
Var<S> euclidean_frame_loss(Var<S> pred, const Tensor<S>& target) {
  Tape<S>& tape = *pred.tape;
  if (!tape.value(pred).same_shape(target))
    fail("euclidean_frame_loss: prediction " + tape.value(pred).shape_str() +
         " vs target " + target.shape_str());
  Var<S> tgt = tape.constant(target);
  Tensor<S> out = euclid_value_tensor(tape.value(pred), target);
  auto bwd = [](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>&,
                std::array<int, 3> in) {
    Tensor<S>* gx = tp.grad_accumulator(in[0]);
    if (!gx) return;
    const Tensor<S>& p = tp.value(in[0]);
    const Tensor<S>& t = tp.value(in[1]);
    const S gs = S(double(g.data()[0]) / p.n());
    S* o = gx->data();
    for (std::size_t i = 0; i < p.size(); ++i)
      o[i] += gs * (p.data()[i] - t.data()[i]);
  };
  auto fwd = [](Tape<S>& tp, std::array<int, 3> in) {
    return euclid_value_tensor(tp.value(in[0]), tp.value(in[1]));
  };
  return tape.record("euclidean_frame_loss", {pred.id, tgt.id, -1},
                     std::move(out), std::move(bwd), std::move(fwd));
}

namespace {

// Per-channel x/y offsets for a local field with n = c_b = 1.
void tap_offsets(const FilterSpec& spec, std::vector<double>& dx,
                 std::vector<double>& dy) {
  const int k = spec.s_h * spec.s_w;
  dx.resize(std::size_t(k));
  dy.resize(std::size_t(k));
  for (int i = 0; i < k; ++i) {
    dy[std::size_t(i)] = i / spec.s_w - spec.s_h / 2;
    dx[std::size_t(i)] = i % spec.s_w - spec.s_w / 2;
  }
}

template <std::floating_point S>
Tensor<S> smoothness_value(const Tensor<S>& taps, const FilterSpec& spec) {
  std::vector<double> dx, dy;
  tap_offsets(spec, dx, dy);
  const int h = taps.h(), w = taps.w(), k = spec.s_h * spec.s_w;
  std::vector<double> u(std::size_t(h) * w), v(u.size());
  double acc = 0.0;
  for (int b = 0; b < taps.n(); ++b) {
    std::fill(u.begin(), u.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    for (int c = 0; c < k; ++c) {
      const S* p = taps.plane(b, c);
      for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] += dx[std::size_t(c)] * double(p[i]);
        v[i] += dy[std::size_t(c)] * double(p[i]);
      }
    }
    for (int y = 0; y + 1 < h; ++y)
      for (int x = 0; x < w; ++x) {
        acc += std::abs(u[std::size_t(y) * w + x] - u[std::size_t(y + 1) * w + x]);
        acc += std::abs(v[std::size_t(y) * w + x] - v[std::size_t(y + 1) * w + x]);
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x + 1 < w; ++x) {
        acc += std::abs(u[std::size_t(y) * w + x] - u[std::size_t(y) * w + x + 1]);
        acc += std::abs(v[std::size_t(y) * w + x] - v[std::size_t(y) * w + x + 1]);
      }
  }
  return Tensor<S>::scalar(S(acc / taps.n()));
}

double sign_of(double z) { return z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0); }

}  // namespace

template <std::floating_point S>
Var<S> smoothness_penalty(const FilterField<S>& filters) {
  Tape<S>& tape = *filters.taps.tape;
  const FilterSpec spec = filters.spec;
  spec.validate();
  if (spec.mode == FilterMode::convolutional)
    return tape.constant(Tensor<S>::scalar(S(0)));
  if (spec.n != 1 || spec.c_b != 1)
    fail("smoothness_penalty: defined for n = c_b = 1 fields, got n=" +
         std::to_string(spec.n) + " c_b=" + std::to_string(spec.c_b));
  const Tensor<S>& taps = tape.value(filters.taps);
  if (taps.c() != spec.tap_channels())
    fail("smoothness_penalty: taps " + taps.shape_str() + " do not match spec");

  Tensor<S> out = smoothness_value(taps, spec);
  auto bwd = [spec](Tape<S>& tp, const Tensor<S>& g, const Tensor<S>&,
                    std::array<int, 3> in) {
    Tensor<S>* gt = tp.grad_accumulator(in[0]);
    if (!gt) return;
    const Tensor<S>& taps = tp.value(in[0]);
    std::vector<double> dx, dy;
    tap_offsets(spec, dx, dy);
    const int h = taps.h(), w = taps.w(), k = spec.s_h * spec.s_w;
    const double gs = double(g.data()[0]) / taps.n();
    std::vector<double> u(std::size_t(h) * w), v(u.size());
    std::vector<double> du(u.size()), dv(u.size());
    for (int b = 0; b < taps.n(); ++b) {
      std::fill(u.begin(), u.end(), 0.0);
      std::fill(v.begin(), v.end(), 0.0);
      for (int c = 0; c < k; ++c) {
        const S* p = taps.plane(b, c);
        for (std::size_t i = 0; i < u.size(); ++i) {
          u[i] += dx[std::size_t(c)] * double(p[i]);
          v[i] += dy[std::size_t(c)] * double(p[i]);
        }
      }
      std::fill(du.begin(), du.end(), 0.0);
      std::fill(dv.begin(), dv.end(), 0.0);
      for (int y = 0; y + 1 < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::size_t a = std::size_t(y) * w + x, c2 = a + std::size_t(w);
          double s = sign_of(u[a] - u[c2]);
          du[a] += s;
          du[c2] -= s;
          s = sign_of(v[a] - v[c2]);
          dv[a] += s;
          dv[c2] -= s;
        }
      for (int y = 0; y < h; ++y)
        for (int x = 0; x + 1 < w; ++x) {
          const std::size_t a = std::size_t(y) * w + x, c2 = a + 1;
          double s = sign_of(u[a] - u[c2]);
          du[a] += s;
          du[c2] -= s;
          s = sign_of(v[a] - v[c2]);
          dv[a] += s;
          dv[c2] -= s;
        }
      for (int c = 0; c < k; ++c) {
        S* o = gt->plane(b, c);
        for (std::size_t i = 0; i < u.size(); ++i)
          o[i] += S(gs * (du[i] * dx[std::size_t(c)] + dv[i] * dy[std::size_t(c)]));
      }
    }
  };
  auto fwd = [spec](Tape<S>& tp, std::array<int, 3> in) {
    return smoothness_value(tp.value(in[0]), spec);
  };
  return tape.record("smoothness_penalty", {filters.taps.id, -1, -1},
                     std::move(out), std::move(bwd), std::move(fwd));
}

// --- Optimizer & init ---------------------------------------------------------

template <std::floating_point S>
void adam_step(const std::vector<Tensor<S>*>& params,
               const std::vector<const Tensor<S>*>& grads,
               AdamState<S>& state, const AdamConfig& cfg) {
  if (params.size() != grads.size())
    fail("adam_step: " + std::to_string(params.size()) + " params vs " +
         std::to_string(grads.size()) + " grads");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i])
      fail("adam_step: missing gradient for parameter " + std::to_string(i));
    if (!grads[i]->same_shape(*params[i]))
      fail("adam_step: gradient shape " + grads[i]->shape_str() +
           " does not match parameter " + params[i]->shape_str());
  }
  if (state.m.empty()) {
    for (Tensor<S>* p : params) {
      state.m.emplace_back(p->n(), p->c(), p->h(), p->w());
      state.v.emplace_back(p->n(), p->c(), p->h(), p->w());
    }
  } else if (state.m.size() != params.size()) {
    fail("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
         " parameters, got " + std::to_string(params.size()));
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    S* p = params[i]->data();
    const S* g = grads[i]->data();
    S* m = state.m[i].data();
    S* v = state.v[i].data();
    for (std::size_t e = 0; e < params[i]->size(); ++e) {
      const double ge = double(g[e]);
      const double me = cfg.beta1 * double(m[e]) + (1.0 - cfg.beta1) * ge;
      const double ve = cfg.beta2 * double(v[e]) + (1.0 - cfg.beta2) * ge * ge;
      m[e] = S(me);
      v[e] = S(ve);
      p[e] = S(double(p[e]) -
               cfg.lr * (me / bc1) / (std::sqrt(ve / bc2) + cfg.eps));
    }
  }
}

template <std::floating_point S>
Tensor<S> he_init(int n, int c, int h, int w, int fan_in, Rng& rng) {
  if (fan_in < 1) fail("he_init: fan_in must be >= 1");
  Tensor<S> t(n, c, h, w);
  const double stddev = std::sqrt(2.0 / fan_in);
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = S(rng.normal(0.0, stddev));
  return t;
}

// --- Training loop -------------------------------------------------------------

TrainOutcome train_loop(Model& model, const TrainConfig& cfg,
                        const StepFn& step, const EvalFn& eval) {
  if (cfg.iterations < 0) fail("train_loop: negative iteration count");
  if (cfg.batch < 1) fail("train_loop: batch must be >= 1");
  if (cfg.lr < 0) fail("train_loop: negative learning rate");
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  AdamState<float> state;
  TrainOutcome out;
  std::vector<Tensor<float>> grad_store(model.params.size());
  char buf[160];
  for (int it = 1; it <= cfg.iterations; ++it) {
    Rng rng(cfg.seed, (unsigned long long)it);
    Tape<float> tape;
    BoundModel bm = bind_model(tape, model);
    Var<float> loss = step(tape, bm, rng);
    const double lval = double(tape.value(loss).scalar_value());
    if (!std::isfinite(lval))
      throw std::runtime_error(
          "train_loop: non-finite loss at step " + std::to_string(it) +
          " (batch stream seed " + std::to_string(cfg.seed) + "/" +
          std::to_string(it) + ")");
    GradientMap<float> gm = tape.backward(loss);
    std::vector<Tensor<float>*> params;
    std::vector<const Tensor<float>*> grads;
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      grad_store[i] = gm.at(bm.vars[i]);
      params.push_back(&model.params[i].second);
      grads.push_back(&grad_store[i]);
    }
    adam_step(params, grads, state, acfg);

    out.final_loss = lval;
    const bool cadence =
        eval && ((cfg.eval_every > 0 && it % cfg.eval_every == 0) ||
                 it == cfg.iterations);
    if (cadence) {
      out.final_eval = eval(model, cfg.eval_sequences);
      std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.6f", it, lval, out.final_eval);
    } else {
      std::snprintf(buf, sizeof buf, "%d\t%.6f\t", it, lval);
    }
    out.log_lines.emplace_back(buf);
  }
  return out;
}

// --- Checkpoints ----------------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

void put_tensor_raw(std::string& out, const Tensor<float>& t) {
  out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
}

struct Reader {
  const std::string& bytes;
  std::size_t off = 0;

  void need(std::size_t n, const char* what) const {
    if (off + n > bytes.size())
      throw std::runtime_error("load_checkpoint: truncated file at byte " +
                               std::to_string(off) + " while reading " + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + off, 4);
    off += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v;
    std::memcpy(&v, bytes.data() + off, 8);
    off += 8;
    return v;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return std::uint8_t(bytes[off++]);
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes.substr(off, n);
    off += n;
    return s;
  }
  void tensor_raw(Tensor<float>& t, const char* what) {
    const std::size_t n = t.size() * sizeof(float);
    need(n, what);
    std::memcpy(t.data(), bytes.data() + off, n);
    off += n;
  }
};

constexpr char kMagic[4] = {'D', 'F', 'N', '1'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const Model& model, const std::string& path,
                     const AdamState<float>* adam) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  const std::string arch = model.arch.text();
  put_u64(out, arch.size());
  out += arch;
  put_u32(out, std::uint32_t(model.params.size()));
  for (const auto& [name, t] : model.params) {
    put_u32(out, std::uint32_t(name.size()));
    out += name;
    out.push_back(char(t.precision()));
    put_u32(out, std::uint32_t(t.n()));
    put_u32(out, std::uint32_t(t.c()));
    put_u32(out, std::uint32_t(t.h()));
    put_u32(out, std::uint32_t(t.w()));
    put_tensor_raw(out, t);
  }
  if (adam && !adam->m.empty()) {
    if (adam->m.size() != model.params.size())
      fail("save_checkpoint: optimizer state does not match the model");
    out.push_back(1);
    put_u64(out, std::uint64_t(adam->t));
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      put_tensor_raw(out, adam->m[i]);
      put_tensor_raw(out, adam->v[i]);
    }
  } else {
    out.push_back(0);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw std::runtime_error("save_checkpoint: write failed on '" + path + "'");
}

Model load_checkpoint(const std::string& path, AdamState<float>* adam_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  Reader r{bytes};
  const std::string magic = r.str(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in '" + path +
                             "' (not a DFN1 checkpoint)");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));
  const std::uint64_t arch_len = r.u64("arch length");
  Model model;
  model.arch = ArchDescriptor::parse(r.str(arch_len, "arch descriptor"));
  const std::uint32_t count = r.u32("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32("name length");
    std::string name = r.str(name_len, "parameter name");
    const std::uint8_t prec = r.u8("precision tag");
    if (prec != std::uint8_t(Precision::single_prec))
      throw std::runtime_error(
          "load_checkpoint: only single-precision checkpoints are supported");
    const int n = int(r.u32("dim n")), c = int(r.u32("dim c"));
    const int h = int(r.u32("dim h")), w = int(r.u32("dim w"));
    Tensor<float> t(n, c, h, w);
    r.tensor_raw(t, name.c_str());
    model.params.emplace_back(std::move(name), std::move(t));
  }
  const std::uint8_t has_adam = r.u8("optimizer flag");
  if (has_adam) {
    AdamState<float> state;
    state.t = (long long)r.u64("optimizer step");
    for (const auto& [name, t] : model.params) {
      Tensor<float> m(t.n(), t.c(), t.h(), t.w());
      Tensor<float> v(t.n(), t.c(), t.h(), t.w());
      r.tensor_raw(m, "optimizer m");
      r.tensor_raw(v, "optimizer v");
      state.m.push_back(std::move(m));
      state.v.push_back(std::move(v));
    }
    if (adam_out) *adam_out = std::move(state);
  } else if (adam_out) {
    *adam_out = AdamState<float>{};
  }
  return model;
}

void write_metrics_log(const std::vector<std::string>& lines,
                       const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_metrics_log: cannot open '" + path + "'");
  for (const std::string& line : lines) f << line << '\n';
  if (!f) throw std::runtime_error("write_metrics_log: write failed on '" + path + "'");
}

// --- Metric helpers -------------------------------------------------------------

namespace {

// Table-1 convention for one frame: per-sample pixel sum, mean over batch.
double bce_metric(const Tensor<float>& pred, const Tensor<float>& tgt) {
  return double(bce_value_tensor(pred, tgt).scalar_value());
}

double euclid_metric(const Tensor<float>& pred, const Tensor<float>& tgt) {
  return double(euclid_value_tensor(pred, tgt).scalar_value());
}

std::vector<Tensor<float>> take_frames(const SequenceBatch& batch, int first,
                                       int count) {
  std::vector<Tensor<float>> out;
  out.reserve(std::size_t(count));
  for (int t = first; t < first + count; ++t)
    out.push_back(batch.frames[std::size_t(t)]);
  return out;
}

// Stacks `group` single-sequence batches drawn from pinned per-item streams
// (seed, first_item + g) into one multi-sample SequenceBatch.
template <typename GenOne>
SequenceBatch stack_pinned(int group, const GenOne& gen_one) {
  SequenceBatch first = gen_one(0);
  const int t_total = first.length();
  const int h = first.frames[0].h(), w = first.frames[0].w();
  SequenceBatch out;
  out.t_in = first.t_in;
  out.t_out = first.t_out;
  for (int t = 0; t < t_total; ++t) out.frames.emplace_back(group, 1, h, w);
  const std::size_t plane = std::size_t(h) * w;
  for (int g = 0; g < group; ++g) {
    SequenceBatch one = g == 0 ? std::move(first) : gen_one(g);
    for (int t = 0; t < t_total; ++t)
      std::copy(one.frames[std::size_t(t)].plane(0, 0),
                one.frames[std::size_t(t)].plane(0, 0) + plane,
                out.frames[std::size_t(t)].plane(g, 0));
  }
  return out;
}

double mean_frame_metric(const std::vector<Tensor<float>>& preds,
                         const std::vector<Tensor<float>>& targets,
                         bool use_bce) {
  double acc = 0.0;
  for (std::size_t j = 0; j < preds.size(); ++j)
    acc += use_bce ? bce_metric(preds[j], targets[j])
                   : euclid_metric(preds[j], targets[j]);
  return acc / double(preds.size());
}

}  // namespace

// --- Steerable task --------------------------------------------------------------

TrainOutcome train_steerable(Model& model, const TrainConfig& cfg,
                             int image_size) {
  const TrainConfig local = cfg;
  StepFn step = [local, image_size](Tape<float>& tape, BoundModel& bm,
                                    Rng& rng) -> Var<float> {
    (void)tape;
    SteerableBatch batch = gen_steerable_batch(rng, local.batch, image_size);
    SteerableOut out = steerable_forward(bm, batch.images, batch.angles);
    return euclidean_frame_loss(out.prediction, batch.targets);
  };
  EvalFn eval = [image_size](const Model& m, int sequences) {
    return eval_steerable(m, std::max(1, sequences / 16), image_size);
  };
  return train_loop(model, cfg, step, eval);
}

double eval_steerable(const Model& model, int batches, int image_size,
                      unsigned long long seed) {
  double se = 0.0, t_sum = 0.0, t_sq = 0.0;
  std::size_t count = 0;
  for (int i = 0; i < batches; ++i) {
    Rng rng(seed, (unsigned long long)i);
    SteerableBatch batch = gen_steerable_batch(rng, 16, image_size);
    Tape<float> tape;
    BoundModel bm = bind_model(tape, model);
    SteerableOut out = steerable_forward(bm, batch.images, batch.angles);
    const Tensor<float>& pred = tape.value(out.prediction);
    for (std::size_t e = 0; e < pred.size(); ++e) {
      const double p = pred.data()[e], t = batch.targets.data()[e];
      se += (p - t) * (p - t);
      t_sum += t;
      t_sq += t * t;
    }
    count += pred.size();
  }
  const double mse = se / double(count);
  const double mean = t_sum / double(count);
  const double var = t_sq / double(count) - mean * mean;
  return mse / var;
}

// --- Video task --------------------------------------------------------------------

TrainOutcome train_video(Model& model, const TrainConfig& cfg,
                         const DigitSet& digits, const MovingMnistConfig& gen) {
  const VideoNetConfig net = video_config_of(model);
  MovingMnistConfig g = gen;
  g.batch = cfg.batch;
  const TrainConfig local = cfg;
  StepFn step = [local, g, net, &digits](Tape<float>& tape, BoundModel& bm,
                                         Rng& rng) -> Var<float> {
    SequenceBatch batch = gen_moving_mnist(digits, g, rng);
    std::vector<Tensor<float>> inputs = take_frames(batch, 0, g.t_in);
    std::vector<Tensor<float>> targets = take_frames(batch, g.t_in, g.t_out);
    VideoRollout roll = video_rollout(
        bm, inputs, g.t_out, local.teacher_forcing ? &targets : nullptr);
    const bool use_bce = local.loss != "euclidean";
    Var<float> total;
    for (int j = 0; j < g.t_out; ++j) {
      Var<float> lj = use_bce
                          ? bce_frame_loss(roll.predictions[std::size_t(j)],
                                           targets[std::size_t(j)])
                          : euclidean_frame_loss(roll.predictions[std::size_t(j)],
                                                 targets[std::size_t(j)]);
      total = j == 0 ? lj : add(total, lj);
    }
    total = scale(total, 1.0f / float(g.t_out));
    if (local.smoothness > 0.0) {
      FilterSpec spec{net.filter_size, net.filter_size, 1, 1, FilterMode::local};
      Var<float> pen;
      for (int j = 0; j < g.t_out; ++j) {
        Var<float> pj = smoothness_penalty(
            FilterField<float>{spec, roll.taps[std::size_t(j)]});
        pen = j == 0 ? pj : add(pen, pj);
      }
      total = add(total, scale(pen, float(local.smoothness / g.t_out)));
    }
    (void)tape;
    return total;
  };
  EvalFn eval = [&digits, gen](const Model& m, int sequences) {
    return eval_video(m, digits, gen, sequences);
  };
  return train_loop(model, cfg, step, eval);
}

double eval_video(const Model& model, const DigitSet& digits,
                  const MovingMnistConfig& gen, int sequences,
                  unsigned long long seed) {
  MovingMnistConfig one = gen;
  one.batch = 1;
  double acc = 0.0;
  int done = 0;
  while (done < sequences) {
    const int group = std::min(10, sequences - done);
    const int first = done;
    SequenceBatch batch = stack_pinned(group, [&](int g) {
      Rng rng(seed, (unsigned long long)(first + g));
      return gen_moving_mnist(digits, one, rng);
    });
    std::vector<Tensor<float>> inputs = take_frames(batch, 0, gen.t_in);
    std::vector<Tensor<float>> targets = take_frames(batch, gen.t_in, gen.t_out);
    std::vector<Tensor<float>> preds = video_predict(model, inputs, gen.t_out);
    acc += mean_frame_metric(preds, targets, /*use_bce=*/true) * group;
    done += group;
  }
  return acc / double(sequences);
}

double video_copy_baseline(const DigitSet& digits, const MovingMnistConfig& gen,
                           int sequences, unsigned long long seed) {
  MovingMnistConfig one = gen;
  one.batch = 1;
  double acc = 0.0;
  for (int i = 0; i < sequences; ++i) {
    Rng rng(seed, (unsigned long long)i);
    SequenceBatch batch = gen_moving_mnist(digits, one, rng);
    const Tensor<float>& last_input = batch.frames[std::size_t(gen.t_in - 1)];
    double seq = 0.0;
    for (int j = 0; j < gen.t_out; ++j)
      seq += bce_metric(last_input, batch.frames[std::size_t(gen.t_in + j)]);
    acc += seq / double(gen.t_out);
  }
  return acc / double(sequences);
}

// --- Stereo task --------------------------------------------------------------------

namespace {

void fill_stereo_batch(const StereoConfig& cfg, int batch, Tensor<float>& left,
                       Tensor<float>& right, Tensor<float>* disparity,
                       const std::function<Rng(int)>& rng_for) {
  left = Tensor<float>(batch, 1, cfg.frame_h, cfg.frame_w);
  right = Tensor<float>(batch, 1, cfg.frame_h, cfg.frame_w);
  if (disparity)
    *disparity = Tensor<float>(batch, 1, cfg.frame_h, cfg.frame_w);
  const std::size_t plane = std::size_t(cfg.frame_h) * cfg.frame_w;
  for (int b = 0; b < batch; ++b) {
    Rng rng = rng_for(b);
    StereoSample s = gen_synthetic_stereo(rng, cfg);
    std::copy(s.left.data(), s.left.data() + plane, left.plane(b, 0));
    std::copy(s.right.data(), s.right.data() + plane, right.plane(b, 0));
    if (disparity)
      std::copy(s.disparity.data(), s.disparity.data() + plane,
                disparity->plane(b, 0));
  }
}

}  // namespace

TrainOutcome train_stereo(Model& model, const TrainConfig& cfg,
                          const StereoConfig& gen) {
  const StereoNetConfig net = stereo_config_of(model);
  const TrainConfig local = cfg;
  StepFn step = [local, gen, net](Tape<float>& tape, BoundModel& bm,
                                  Rng& rng) -> Var<float> {
    Tensor<float> left, right;
    fill_stereo_batch(gen, local.batch, left, right, nullptr,
                      [&rng](int) { return Rng(rng.next_u64()); });
    StereoOut out = stereo_forward(bm, tape.constant(std::move(left)));
    Var<float> loss = euclidean_frame_loss(out.prediction, right);
    if (local.smoothness > 0.0) {
      FilterSpec spec{1, net.s_w, 1, 1, FilterMode::local};
      loss = add(loss, scale(smoothness_penalty(
                                 FilterField<float>{spec, out.taps}),
                             float(local.smoothness)));
    }
    return loss;
  };
  EvalFn eval = [gen](const Model& m, int sequences) {
    return eval_stereo(m, gen, sequences);
  };
  return train_loop(model, cfg, step, eval);
}

double eval_stereo(const Model& model, const StereoConfig& gen, int samples,
                   unsigned long long seed) {
  double acc = 0.0;
  int done = 0;
  while (done < samples) {
    const int group = std::min(10, samples - done);
    const int first = done;
    Tensor<float> left, right;
    fill_stereo_batch(gen, group, left, right, nullptr, [&](int b) {
      return Rng(seed, (unsigned long long)(first + b));
    });
    acc += euclid_metric(stereo_predict(model, left), right) * group;
    done += group;
  }
  return acc / double(samples);
}

double stereo_copy_baseline(const StereoConfig& gen, int samples,
                            unsigned long long seed) {
  double acc = 0.0;
  for (int i = 0; i < samples; ++i) {
    Rng rng(seed, (unsigned long long)i);
    StereoSample s = gen_synthetic_stereo(rng, gen);
    acc += euclid_metric(s.left, s.right);
  }
  return acc / double(samples);
}

// --- Driving task -------------------------------------------------------------------

TrainOutcome train_driving(Model& model, const TrainConfig& cfg,
                           const DrivingConfig& gen) {
  DrivingConfig g = gen;
  g.batch = cfg.batch;
  const TrainConfig local = cfg;
  StepFn step = [local, g](Tape<float>& tape, BoundModel& bm,
                           Rng& rng) -> Var<float> {
    (void)tape;
    SequenceBatch batch = gen_synthetic_driving(rng, g);
    std::vector<Tensor<float>> inputs = take_frames(batch, 0, g.t_in);
    std::vector<Tensor<float>> targets = take_frames(batch, g.t_in, g.t_out);
    VideoRollout roll = video_rollout(
        bm, inputs, g.t_out, local.teacher_forcing ? &targets : nullptr);
    Var<float> total;
    for (int j = 0; j < g.t_out; ++j) {
      Var<float> lj = euclidean_frame_loss(roll.predictions[std::size_t(j)],
                                           targets[std::size_t(j)]);
      total = j == 0 ? lj : add(total, lj);
    }
    return scale(total, 1.0f / float(g.t_out));
  };
  EvalFn eval = [gen](const Model& m, int sequences) {
    return eval_driving(m, gen, sequences);
  };
  return train_loop(model, cfg, step, eval);
}

double eval_driving(const Model& model, const DrivingConfig& gen, int sequences,
                    unsigned long long seed) {
  DrivingConfig one = gen;
  one.batch = 1;
  double acc = 0.0;
  int done = 0;
  while (done < sequences) {
    const int group = std::min(10, sequences - done);
    const int first = done;
    SequenceBatch batch = stack_pinned(group, [&](int g) {
      Rng rng(seed, (unsigned long long)(first + g));
      return gen_synthetic_driving(rng, one);
    });
    std::vector<Tensor<float>> inputs = take_frames(batch, 0, gen.t_in);
    std::vector<Tensor<float>> targets = take_frames(batch, gen.t_in, gen.t_out);
    std::vector<Tensor<float>> preds = video_predict(model, inputs, gen.t_out);
    acc += mean_frame_metric(preds, targets, /*use_bce=*/false) * group;
    done += group;
  }
  return acc / double(sequences);
}

double driving_copy_baseline(const DrivingConfig& gen, int sequences,
                             unsigned long long seed) {
  DrivingConfig one = gen;
  one.batch = 1;
  double acc = 0.0;
  for (int i = 0; i < sequences; ++i) {
    Rng rng(seed, (unsigned long long)i);
    SequenceBatch batch = gen_synthetic_driving(rng, one);
    const Tensor<float>& last_input = batch.frames[std::size_t(gen.t_in - 1)];
    double seq = 0.0;
    for (int j = 0; j < gen.t_out; ++j)
      seq += euclid_metric(last_input, batch.frames[std::size_t(gen.t_in + j)]);
    acc += seq / double(gen.t_out);
  }
  return acc / double(sequences);
}

// --- Explicit instantiations ----------------------------------------------------

#define DFN_INSTANTIATE_TRAINING(S)                                       \
  template Var<S> bce_frame_loss<S>(Var<S>, const Tensor<S>&);            \
  template Var<S> euclidean_frame_loss<S>(Var<S>, const Tensor<S>&);      \
  template Var<S> smoothness_penalty<S>(const FilterField<S>&);           \
  template void adam_step<S>(const std::vector<Tensor<S>*>&,              \
                             const std::vector<const Tensor<S>*>&,        \
                             AdamState<S>&, const AdamConfig&);           \
  template Tensor<S> he_init<S>(int, int, int, int, int, Rng&);

DFN_INSTANTIATE_TRAINING(float)
DFN_INSTANTIATE_TRAINING(double)

}  // namespace dfn
