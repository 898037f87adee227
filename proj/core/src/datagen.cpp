#include "dfn/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfn {
namespace {

std::uint32_t read_be32(const std::vector<unsigned char>& bytes,
                        std::size_t offset) {
  return (std::uint32_t(bytes[offset]) << 24) |
         (std::uint32_t(bytes[offset + 1]) << 16) |
         (std::uint32_t(bytes[offset + 2]) << 8) |
         std::uint32_t(bytes[offset + 3]);
}

[[noreturn]] void idx_fail(const std::string& what, std::size_t byte_offset) {
  throw std::runtime_error("load_mnist_idx: " + what + " at byte " +
                           std::to_string(byte_offset));
}

// --- procedural digit glyphs -------------------------------------------------

struct Pt {
  float x, y;
};
using Stroke = std::vector<Pt>;

std::vector<Stroke> digit_strokes(int digit) {
  auto circle = [](float cx, float cy, float rx, float ry) {
    Stroke s;
    for (int i = 0; i <= 16; ++i) {
      float a = 2.0f * std::numbers::pi_v<float> * i / 16.0f;
      s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
    return s;
  };
  switch (digit) {
    case 0:
      return {circle(0.5f, 0.5f, 0.28f, 0.40f)};
    case 1:
      return {{{0.32f, 0.28f}, {0.54f, 0.10f}, {0.54f, 0.90f}},
              {{0.34f, 0.90f}, {0.74f, 0.90f}}};
    case 2:
      return {{{0.26f, 0.28f},
               {0.32f, 0.14f},
               {0.50f, 0.10f},
               {0.68f, 0.16f},
               {0.72f, 0.32f},
               {0.62f, 0.50f},
               {0.26f, 0.88f}},
              {{0.26f, 0.88f}, {0.76f, 0.88f}}};
    case 3:
      return {{{0.28f, 0.16f},
               {0.50f, 0.10f},
               {0.70f, 0.20f},
               {0.70f, 0.36f},
               {0.48f, 0.48f}},
              {{0.48f, 0.48f},
               {0.72f, 0.58f},
               {0.74f, 0.78f},
               {0.52f, 0.90f},
               {0.28f, 0.84f}}};
    case 4:
      return {{{0.62f, 0.10f}, {0.24f, 0.62f}, {0.80f, 0.62f}},
              {{0.64f, 0.36f}, {0.64f, 0.90f}}};
    case 5:
      return {{{0.72f, 0.10f},
               {0.32f, 0.10f},
               {0.28f, 0.46f},
               {0.54f, 0.40f},
               {0.74f, 0.54f},
               {0.72f, 0.78f},
               {0.50f, 0.90f},
               {0.27f, 0.82f}}};
    case 6:
      return {{{0.64f, 0.10f},
               {0.42f, 0.30f},
               {0.30f, 0.56f},
               {0.32f, 0.80f},
               {0.54f, 0.90f},
               {0.72f, 0.78f},
               {0.68f, 0.58f},
               {0.48f, 0.52f},
               {0.32f, 0.64f}}};
    case 7:
      return {{{0.26f, 0.10f}, {0.76f, 0.10f}, {0.46f, 0.90f}}};
    case 8:
      return {circle(0.5f, 0.30f, 0.19f, 0.19f), circle(0.5f, 0.67f, 0.23f, 0.22f)};
    case 9:
      return {circle(0.52f, 0.32f, 0.20f, 0.21f),
              {{0.72f, 0.34f}, {0.66f, 0.64f}, {0.46f, 0.90f}}};
    default:
      throw std::invalid_argument("digit_strokes: digit out of range");
  }
}

float dist_to_segment(float px, float py, Pt a, Pt b) {
  float dx = b.x - a.x, dy = b.y - a.y;
  float len2 = dx * dx + dy * dy;
  float t = len2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0f;
  t = std::clamp(t, 0.0f, 1.0f);
  float qx = a.x + t * dx - px, qy = a.y + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

std::vector<float> rasterize_digit(int digit) {
  const int side = DigitSet::kSide;
  const float origin = 2.0f, scale = 24.0f;
  auto strokes = digit_strokes(digit);
  std::vector<float> img(side * side, 0.0f);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      float px = x + 0.5f, py = y + 0.5f;
      float d = 1e9f;
      for (const Stroke& s : strokes)
        for (std::size_t i = 0; i + 1 < s.size(); ++i) {
          Pt a{origin + scale * s[i].x, origin + scale * s[i].y};
          Pt b{origin + scale * s[i + 1].x, origin + scale * s[i + 1].y};
          d = std::min(d, dist_to_segment(px, py, a, b));
        }
      img[y * side + x] = std::clamp(1.7f - d, 0.0f, 1.0f);
    }
  return img;
}

// --- smooth-noise helpers ----------------------------------------------------

// Clamp-to-edge separable Gaussian blur; preserves [0,1] range and total mass.
void gauss_blur_inplace(std::vector<float>& img, int h, int w, float sigma) {
  const int r = std::max(1, int(std::ceil(2.0f * sigma)));
  std::vector<float> k(2 * r + 1);
  float sum = 0.0f;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5f * i * i / (sigma * sigma));
    sum += k[i + r];
  }
  for (float& v : k) v /= sum;
  std::vector<float> tmp(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -r; i <= r; ++i)
        acc += k[i + r] * img[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = -r; i <= r; ++i)
        acc += k[i + r] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
      img[y * w + x] = acc;
    }
}

// Zero-padded cross-correlation of a [1,1,H,W] image with a [1,1,kh,kw]
// filter, "same" output size. Matches the dynamic-filtering convention.
Tensor<float> xcorr_same(const Tensor<float>& img, const Tensor<float>& f) {
  const int h = img.h(), w = img.w(), kh = f.h(), kw = f.w();
  const int ry = kh / 2, rx = kw / 2;
  Tensor<float> out(1, 1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int dy = -ry; dy <= ry; ++dy) {
        int iy = y + dy;
        if (iy < 0 || iy >= h) continue;
        for (int dx = -rx; dx <= rx; ++dx) {
          int ix = x + dx;
          if (ix < 0 || ix >= w) continue;
          acc += f.at(0, 0, dy + ry, dx + rx) * img.at(0, 0, iy, ix);
        }
      }
      out.at(0, 0, y, x) = acc;
    }
  return out;
}

Tensor<float> gaussian_derivative(bool x_direction) {
  const int k = 9, r = 4;
  const float sigma = 1.5f;
  Tensor<float> f(1, 1, k, k);
  double norm2 = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      float g = std::exp(-0.5f * (x * x + y * y) / (sigma * sigma));
      float v = (x_direction ? -x : -y) / (sigma * sigma) * g;
      f.at(0, 0, y + r, x + r) = v;
      norm2 += double(v) * v;
    }
  const float inv = 1.0f / float(std::sqrt(norm2));
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) f.at(0, 0, y, x) *= inv;
  return f;
}

}  // namespace

DigitSet load_mnist_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("load_mnist_idx: cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 4)
    idx_fail("truncated header: need 4 magic bytes, file has " +
                 std::to_string(bytes.size()),
             0);
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != 0x00000803u) {
    char hex[16];
    std::snprintf(hex, sizeof hex, "0x%08x", magic);
    idx_fail("bad magic " + std::string(hex) +
                 " (expected image magic 0x00000803)",
             0);
  }
  if (bytes.size() < 16)
    idx_fail("truncated header: need count and dims, file has " +
                 std::to_string(bytes.size()) + " bytes",
             4);
  const std::uint32_t count = read_be32(bytes, 4);
  const std::uint32_t rows = read_be32(bytes, 8);
  const std::uint32_t cols = read_be32(bytes, 12);
  if (rows != DigitSet::kSide || cols != DigitSet::kSide)
    idx_fail("unsupported image size " + std::to_string(rows) + "x" +
                 std::to_string(cols) + " (expected 28x28)",
             8);
  const std::size_t need = 16 + std::size_t(count) * rows * cols;
  if (bytes.size() < need)
    idx_fail("truncated payload: expected " + std::to_string(need) +
                 " total bytes, file has " + std::to_string(bytes.size()),
             bytes.size());
  DigitSet set;
  set.images.reserve(count);
  const float inv = 1.0f / 255.0f;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::vector<float> img(rows * cols);
    const unsigned char* src = bytes.data() + 16 + std::size_t(i) * rows * cols;
    for (std::size_t p = 0; p < img.size(); ++p) img[p] = src[p] * inv;
    set.images.push_back(std::move(img));
  }
  return set;
}

DigitSet builtin_digit_set() {
  DigitSet set;
  for (int d = 0; d < 10; ++d) {
    set.images.push_back(rasterize_digit(d));
    set.labels.push_back(d);
  }
  return set;
}

SequenceBatch gen_moving_mnist(const DigitSet& digits,
                               const MovingMnistConfig& cfg, Rng& rng) {
  const int side = DigitSet::kSide;
  if (cfg.frame_h < side || cfg.frame_w < side)
    throw std::invalid_argument("gen_moving_mnist: digit larger than frame " +
                                std::to_string(cfg.frame_h) + "x" +
                                std::to_string(cfg.frame_w));
  if (cfg.num_digits < 1)
    throw std::invalid_argument("gen_moving_mnist: num_digits must be >= 1");
  if (digits.size() == 0)
    throw std::invalid_argument("gen_moving_mnist: empty digit set");
  const int t_total = cfg.t_in + cfg.t_out;
  SequenceBatch batch;
  batch.t_in = cfg.t_in;
  batch.t_out = cfg.t_out;
  for (int t = 0; t < t_total; ++t)
    batch.frames.emplace_back(cfg.batch, 1, cfg.frame_h, cfg.frame_w);
  const float max_y = float(cfg.frame_h - side);
  const float max_x = float(cfg.frame_w - side);
  for (int b = 0; b < cfg.batch; ++b) {
    struct Sprite {
      const std::vector<float>* img;
      float x, y, vx, vy;
    };
    std::vector<Sprite> sprites;
    for (int d = 0; d < cfg.num_digits; ++d) {
      Sprite s;
      s.img = &digits.images[std::size_t(
          rng.uniform_int(0, int(digits.size()) - 1))];
      s.x = float(rng.uniform(0.0, max_x));
      s.y = float(rng.uniform(0.0, max_y));
      const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
      s.vx = float(speed * std::cos(phi));
      s.vy = float(speed * std::sin(phi));
      sprites.push_back(s);
    }
    for (int t = 0; t < t_total; ++t) {
      float* plane = batch.frames[std::size_t(t)].plane(b, 0);
      for (const Sprite& s : sprites) {
        const int ix = int(std::lround(s.x));
        const int iy = int(std::lround(s.y));
        for (int dy = 0; dy < side; ++dy) {
          float* row = plane + std::size_t(iy + dy) * cfg.frame_w + ix;
          const float* src = s.img->data() + std::size_t(dy) * side;
          for (int dx = 0; dx < side; ++dx)
            row[dx] = std::max(row[dx], src[dx]);
        }
      }
      for (Sprite& s : sprites) {
        s.x += s.vx;
        s.y += s.vy;
        if (s.x < 0.0f) {
          s.x = -s.x;
          s.vx = -s.vx;
        } else if (s.x > max_x) {
          s.x = 2.0f * max_x - s.x;
          s.vx = -s.vx;
        }
        if (s.y < 0.0f) {
          s.y = -s.y;
          s.vy = -s.vy;
        } else if (s.y > max_y) {
          s.y = 2.0f * max_y - s.y;
          s.vy = -s.vy;
        }
      }
    }
  }
  return batch;
}

Tensor<float> steerable_basis_gx() { return gaussian_derivative(true); }
Tensor<float> steerable_basis_gy() { return gaussian_derivative(false); }

Tensor<float> analytic_steerable_filter(float theta) {
  Tensor<float> gx = steerable_basis_gx();
  Tensor<float> gy = steerable_basis_gy();
  Tensor<float> f(1, 1, gx.h(), gx.w());
  const float c = std::cos(theta), s = std::sin(theta);
  for (std::size_t i = 0; i < f.size(); ++i)
    f.data()[i] = c * gx.data()[i] + s * gy.data()[i];
  return f;
}

SteerablePair gen_steerable_pair(Rng& rng, int image_size, float theta) {
  SteerablePair pair;
  pair.angle = theta;
  std::vector<float> noise(std::size_t(image_size) * image_size);
  for (float& v : noise) v = float(rng.uniform(0.0, 1.0));
  gauss_blur_inplace(noise, image_size, image_size, 1.0f);
  pair.image = Tensor<float>(1, 1, image_size, image_size);
  std::copy(noise.begin(), noise.end(), pair.image.data());
  pair.target = xcorr_same(pair.image, analytic_steerable_filter(theta));
  return pair;
}

SteerablePair gen_steerable_pair(Rng& rng, int image_size) {
  const float theta = float(rng.uniform(0.0, 2.0 * std::numbers::pi));
  return gen_steerable_pair(rng, image_size, theta);
}

SteerableBatch gen_steerable_batch(Rng& rng, int batch, int image_size) {
  SteerableBatch out;
  out.images = Tensor<float>(batch, 1, image_size, image_size);
  out.targets = Tensor<float>(batch, 1, image_size, image_size);
  const std::size_t plane = std::size_t(image_size) * image_size;
  for (int b = 0; b < batch; ++b) {
    SteerablePair p = gen_steerable_pair(rng, image_size);
    std::copy(p.image.data(), p.image.data() + plane, out.images.plane(b, 0));
    std::copy(p.target.data(), p.target.data() + plane, out.targets.plane(b, 0));
    out.angles.push_back(p.angle);
  }
  return out;
}

StereoSample gen_synthetic_stereo(Rng& rng, const StereoConfig& cfg) {
  if (cfg.layer_disparities.empty())
    throw std::invalid_argument("gen_synthetic_stereo: no layers configured");
  for (int d : cfg.layer_disparities)
    if (d < 0 || d > 6)
      throw std::invalid_argument(
          "gen_synthetic_stereo: disparity " + std::to_string(d) +
          " exceeds the 13-tap reach (max 6 px)");
  const int h = cfg.frame_h, w = cfg.frame_w;
  auto brightness = [](int d) { return std::min(0.95f, 0.25f + 0.15f * d); };
  auto make_texture = [&](int th, int tw, float base) {
    std::vector<float> tex(std::size_t(th) * tw);
    for (float& v : tex) v = base + float(rng.uniform(-0.12, 0.12));
    gauss_blur_inplace(tex, th, tw, 0.8f);
    for (float& v : tex) v = std::clamp(v, 0.0f, 1.0f);
    return tex;
  };

  StereoSample s;
  s.left = Tensor<float>(1, 1, h, w);
  s.right = Tensor<float>(1, 1, h, w);
  s.disparity = Tensor<float>(1, 1, h, w);

  // Background layer: texture wide enough that the right view can sample
  // right(i,j) = left(i,j+d_bg) without running off the strip.
  const int d_bg = cfg.layer_disparities.front();
  const int bg_w = w + d_bg;
  std::vector<float> bg = make_texture(h, bg_w, brightness(d_bg));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      s.left.at(0, 0, y, x) = bg[std::size_t(y) * bg_w + x];
      s.right.at(0, 0, y, x) = bg[std::size_t(y) * bg_w + x + d_bg];
      s.disparity.at(0, 0, y, x) = float(d_bg);
    }

  // Floating rectangles, painted back to front; each one's content shifts
  // left by its disparity in the right view.
  for (std::size_t li = 1; li < cfg.layer_disparities.size(); ++li) {
    const int d = cfg.layer_disparities[li];
    const int rects = 2;
    for (int r = 0; r < rects; ++r) {
      const int rw = rng.uniform_int(18, 40);
      const int rh = rng.uniform_int(14, 32);
      const int rx = rng.uniform_int(d, std::max(d, w - rw));
      const int ry = rng.uniform_int(0, std::max(0, h - rh));
      std::vector<float> tex = make_texture(rh, rw, brightness(d));
      for (int y = 0; y < rh; ++y)
        for (int x = 0; x < rw; ++x) {
          const float v = tex[std::size_t(y) * rw + x];
          s.left.at(0, 0, ry + y, rx + x) = v;
          s.disparity.at(0, 0, ry + y, rx + x) = float(d);
          const int xr = rx + x - d;
          if (xr >= 0 && xr < w) s.right.at(0, 0, ry + y, xr) = v;
        }
    }
  }
  return s;
}

SequenceBatch gen_synthetic_driving(Rng& rng, const DrivingConfig& cfg) {
  const int h = cfg.frame_h, w = cfg.frame_w;
  const int t_total = cfg.t_in + cfg.t_out;
  SequenceBatch batch;
  batch.t_in = cfg.t_in;
  batch.t_out = cfg.t_out;
  for (int t = 0; t < t_total; ++t)
    batch.frames.emplace_back(cfg.batch, 1, h, w);

  const int layers = 3;
  const int reach = (t_total - 1) * cfg.max_speed;
  const int tex_w = w + 2 * reach;
  for (int b = 0; b < cfg.batch; ++b) {
    bool dimming = true;
    float ramp_end = 1.0f;
    if (cfg.illumination_ramp) {
      dimming = rng.uniform_int(0, 1) == 0;
      ramp_end = float(rng.uniform(cfg.ramp_min, cfg.ramp_max));
    }
    struct Layer {
      int y0, y1, vx;
      std::vector<float> tex;
    };
    std::vector<Layer> strips;
    for (int l = 0; l < layers; ++l) {
      Layer layer;
      layer.y0 = l * h / layers;
      layer.y1 = (l + 1) * h / layers;
      layer.vx = rng.uniform_int(-cfg.max_speed, cfg.max_speed);
      const int th = layer.y1 - layer.y0;
      layer.tex.resize(std::size_t(th) * tex_w);
      const float base = 0.3f + 0.2f * l;
      for (float& v : layer.tex) v = base + float(rng.uniform(-0.25, 0.25));
      gauss_blur_inplace(layer.tex, th, tex_w, 0.8f);
      for (float& v : layer.tex) v = std::clamp(v, 0.0f, 1.0f);
      strips.push_back(std::move(layer));
    }
    for (int t = 0; t < t_total; ++t) {
      float factor = 1.0f;
      if (cfg.illumination_ramp && t_total > 1) {
        const float frac = float(t) / float(t_total - 1);
        factor = dimming ? 1.0f - (1.0f - ramp_end) * frac
                         : ramp_end + (1.0f - ramp_end) * frac;
      }
      float* plane = batch.frames[std::size_t(t)].plane(b, 0);
      for (const auto& layer : strips) {
        const int th = layer.y1 - layer.y0;
        const int off = reach + t * layer.vx;
        for (int y = 0; y < th; ++y) {
          float* row = plane + std::size_t(layer.y0 + y) * w;
          const float* src = layer.tex.data() + std::size_t(y) * tex_w + off;
          for (int x = 0; x < w; ++x) row[x] = factor * src[x];
        }
      }
    }
  }
  return batch;
}

}  // namespace dfn
