#include "dfn/flowviz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace dfn {
namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

unsigned char to_byte(float x) {
  return (unsigned char)std::lround(std::clamp(x, 0.0f, 1.0f) * 255.0f);
}

}  // namespace

FlowMap filters_to_flow(const FilterSpec& spec, const Tensor<float>& taps) {
  spec.validate();
  if (spec.mode != FilterMode::local)
    fail("filters_to_flow: expected-offset maps are defined for local fields");
  if (spec.n != 1 || spec.c_b != 1)
    fail("filters_to_flow: defined for n = c_b = 1 fields, got n=" +
         std::to_string(spec.n) + " c_b=" + std::to_string(spec.c_b));
  if (taps.c() != spec.tap_channels())
    fail("filters_to_flow: taps " + taps.shape_str() + " do not match spec (" +
         std::to_string(spec.tap_channels()) + " channels expected)");
  const int k = spec.s_h * spec.s_w;
  const int n = taps.n(), h = taps.h(), w = taps.w();
  FlowMap out{Tensor<float>(n, 1, h, w), Tensor<float>(n, 1, h, w)};
  const std::size_t plane = std::size_t(h) * w;
  for (int b = 0; b < n; ++b) {
    float* u = out.u.plane(b, 0);
    float* v = out.v.plane(b, 0);
    for (int c = 0; c < k; ++c) {
      const float dx = float(c % spec.s_w - spec.s_w / 2);
      const float dy = float(c / spec.s_w - spec.s_h / 2);
      const float* p = taps.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        u[i] += dx * p[i];
        v[i] += dy * p[i];
      }
    }
  }
  return out;
}

RasterImage flow_to_color(const FlowMap& flow, int batch_index, float max_mag) {
  if (!flow.u.same_shape(flow.v))
    fail("flow_to_color: u " + flow.u.shape_str() + " vs v " +
         flow.v.shape_str());
  if (batch_index < 0 || batch_index >= flow.u.n())
    fail("flow_to_color: batch index " + std::to_string(batch_index) +
         " out of range");
  const int h = flow.u.h(), w = flow.u.w();
  const std::size_t plane = std::size_t(h) * w;
  const float* u = flow.u.plane(batch_index, 0);
  const float* v = flow.v.plane(batch_index, 0);
  float mm = max_mag;
  if (mm <= 0.0f) {
    for (std::size_t i = 0; i < plane; ++i)
      mm = std::max(mm, std::hypot(u[i], v[i]));
    if (mm <= 0.0f) mm = 1.0f;  // all-zero flow renders white anyway
  }
  RasterImage img;
  img.width = w;
  img.height = h;
  img.channels = 3;
  img.samples.resize(img.expected_samples());
  for (std::size_t i = 0; i < plane; ++i) {
    const float mag = std::hypot(u[i], v[i]);
    const float sat = std::min(1.0f, mag / mm);
    // HSV -> RGB with V = 1: white at zero magnitude, hue from direction.
    float hue = std::atan2(v[i], u[i]);  // [-pi, pi]
    if (hue < 0.0f) hue += 2.0f * float(M_PI);
    const float sector = hue * 3.0f / float(M_PI);  // [0, 6)
    const int si = std::min(5, int(sector));
    const float f = sector - float(si);
    const float p = 1.0f - sat;
    const float q = 1.0f - sat * f;
    const float t = 1.0f - sat * (1.0f - f);
    float r, g, b;
    switch (si) {
      case 0: r = 1; g = t; b = p; break;
      case 1: r = q; g = 1; b = p; break;
      case 2: r = p; g = 1; b = t; break;
      case 3: r = p; g = q; b = 1; break;
      case 4: r = t; g = p; b = 1; break;
      default: r = 1; g = p; b = q; break;
    }
    img.samples[i * 3 + 0] = to_byte(r);
    img.samples[i * 3 + 1] = to_byte(g);
    img.samples[i * 3 + 2] = to_byte(b);
  }
  return img;
}

RasterImage to_gray(const Tensor<float>& t, int b, int c) {
  if (b < 0 || b >= t.n() || c < 0 || c >= t.c())
    fail("to_gray: plane (" + std::to_string(b) + "," + std::to_string(c) +
         ") out of range for " + t.shape_str());
  RasterImage img;
  img.width = t.w();
  img.height = t.h();
  img.channels = 1;
  img.samples.resize(img.expected_samples());
  const float* p = t.plane(b, c);
  for (std::size_t i = 0; i < img.samples.size(); ++i)
    img.samples[i] = to_byte(p[i]);
  return img;
}

namespace {

void write_pnm(const RasterImage& image, const std::string& path,
               int channels, const char* magic) {
  if (image.channels != channels)
    fail(std::string(magic) + " writer needs " + std::to_string(channels) +
         "-channel images, got " + std::to_string(image.channels));
  if (image.width < 1 || image.height < 1)
    fail(std::string(magic) + " writer: empty image");
  if (image.samples.size() != image.expected_samples())
    fail(std::string(magic) + " writer: sample buffer has " +
         std::to_string(image.samples.size()) + " bytes, expected " +
         std::to_string(image.expected_samples()));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error(std::string("cannot open '") + path + "'");
  char header[64];
  const int n = std::snprintf(header, sizeof header, "%s\n%d %d\n255\n", magic,
                              image.width, image.height);
  f.write(header, n);
  f.write(reinterpret_cast<const char*>(image.samples.data()),
          std::streamsize(image.samples.size()));
  if (!f) throw std::runtime_error(std::string("write failed on '") + path + "'");
}

}  // namespace

void write_pgm(const RasterImage& image, const std::string& path) {
  write_pnm(image, path, 1, "P5");
}

void write_ppm(const RasterImage& image, const std::string& path) {
  write_pnm(image, path, 3, "P6");
}

RasterImage read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pnm: cannot open '" + path + "'");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (!f || (magic != "P5" && magic != "P6"))
    throw std::runtime_error("read_pnm: '" + path + "' is not a binary PGM/PPM");
  if (w < 1 || h < 1 || maxval != 255)
    throw std::runtime_error("read_pnm: unsupported header in '" + path + "'");
  f.get();  // single whitespace byte after maxval
  RasterImage img;
  img.width = w;
  img.height = h;
  img.channels = magic == "P5" ? 1 : 3;
  img.samples.resize(img.expected_samples());
  f.read(reinterpret_cast<char*>(img.samples.data()),
         std::streamsize(img.samples.size()));
  if (std::size_t(f.gcount()) != img.samples.size())
    throw std::runtime_error("read_pnm: '" + path + "' truncated after " +
                             std::to_string(f.gcount()) + " raster bytes");
  return img;
}

RasterImage montage(const std::vector<RasterImage>& frames, int cols) {
  if (frames.empty()) fail("montage: no frames");
  if (cols < 1) fail("montage: cols must be >= 1");
  const int fw = frames[0].width, fh = frames[0].height;
  int channels = 1;
  for (const RasterImage& fr : frames) {
    if (fr.width != fw || fr.height != fh)
      fail("montage: frames must share one size, got " +
           std::to_string(fr.width) + "x" + std::to_string(fr.height) +
           " after " + std::to_string(fw) + "x" + std::to_string(fh));
    if (fr.samples.size() != fr.expected_samples())
      fail("montage: frame sample buffer size mismatch");
    channels = std::max(channels, fr.channels);
  }
  const int gap = 2;
  const int rows = (int(frames.size()) + cols - 1) / cols;
  RasterImage out;
  out.channels = channels;
  out.width = cols * fw + (cols - 1) * gap;
  out.height = rows * fh + (rows - 1) * gap;
  out.samples.assign(out.expected_samples(), 0);  // separators stay black
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const RasterImage& fr = frames[i];
    const int r = int(i) / cols, c = int(i) % cols;
    const int ox = c * (fw + gap), oy = r * (fh + gap);
    for (int y = 0; y < fh; ++y)
      for (int x = 0; x < fw; ++x) {
        unsigned char* dst =
            &out.samples[(std::size_t(oy + y) * out.width + (ox + x)) *
                         channels];
        if (fr.channels == channels) {
          const unsigned char* src =
              &fr.samples[(std::size_t(y) * fw + x) * channels];
          for (int ch = 0; ch < channels; ++ch) dst[ch] = src[ch];
        } else {  // gray frame in an RGB montage
          const unsigned char g = fr.samples[std::size_t(y) * fw + x];
          for (int ch = 0; ch < channels; ++ch) dst[ch] = g;
        }
      }
  }
  return out;
}

}  // namespace dfn
