#include "cia/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "cia/errors.hpp"
#include "cia/prng.hpp"

namespace cia {

namespace {

constexpr int kSize = 32;

// Classes are thin outline glyphs over a shared gray background. Every class
// draws from the SAME stroke-color family (per-sample jittered hue and a
// random light/dark sign), so coarse color statistics carry no class
// information at all; identity lives purely in fine-scale edge geometry.
// That keeps the classes cleanly separable at high stroke contrast while
// denying attacks (and classifiers) any low-frequency shortcut.
constexpr float kStrokeBase[3] = {0.09f, 0.075f, 0.10f};

// global contrast multiplier on the stroke color; sets where class margins
// sit relative to pixel-space attack budgets
constexpr float kContrast = 4.8f;

Tensor render_sample(int cls, SplitMix64& rng) {
  float fg[3], bg[3];
  // common-mode background tint; the fg evidence is the offset, so the tint
  // itself carries no class information
  for (int c = 0; c < 3; ++c)
    bg[c] = std::clamp(0.46f + static_cast<float>((rng.next_unit() - 0.5) * 0.10), 0.0f, 1.0f);
  // light/dark sign and per-channel jitter are per-sample draws with the same
  // distribution for every class, so mean color stays class-neutral
  const double sign = rng.below(2) ? 1.0 : -1.0;
  const double amp = 0.85 + 0.3 * rng.next_unit();  // per-sample contrast scale
  for (int c = 0; c < 3; ++c) {
    const double chan = kContrast * amp * (0.8 + 0.4 * rng.next_unit());
    fg[c] = std::clamp(bg[c] + static_cast<float>(sign * kStrokeBase[c] * chan), 0.0f, 1.0f);
  }

  // Class-independent nuisance fields with dense per-channel coverage of
  // every scale coarser than roughly four pixels: lighting ramps and a broad
  // shading wave (gray), band-limited random fields built by bilinearly
  // upsampling coarse grids of independent draws for each color channel
  // (4 px and 2 px sample spacing), and a per-channel 8-pixel mosaic that
  // randomizes blockwise color averages. Amplitudes exceed typical attack
  // budgets, so no coarse band in any channel can carry class evidence and
  // classifiers must key on fine stroke structure instead.
  float rampx, rampy, shade;
  rampx = static_cast<float>((rng.next_unit() - 0.5) * 0.24);
  rampy = static_cast<float>((rng.next_unit() - 0.5) * 0.24);
  shade = static_cast<float>((rng.next_unit() - 0.5) * 0.24);
  const double phx = rng.next_unit() * 6.283185307179586;
  const double phy = rng.next_unit() * 6.283185307179586;
  float grid4[3][9][9];  // per-channel field sampled every 4 px
  for (int c = 0; c < 3; ++c)
    for (int gy = 0; gy < 9; ++gy)
      for (int gx = 0; gx < 9; ++gx)
        grid4[c][gy][gx] = static_cast<float>((rng.next_unit() - 0.5) * 0.22);
  float grid2[3][17][17];  // per-channel field sampled every 2 px
  for (int c = 0; c < 3; ++c)
    for (int gy = 0; gy < 17; ++gy)
      for (int gx = 0; gx < 17; ++gx)
        grid2[c][gy][gx] = static_cast<float>((rng.next_unit() - 0.5) * 0.14);
  float mosaic[4][4][3];  // one flat tint per 8x8 cell and channel
  for (int by = 0; by < 4; ++by)
    for (int bx = 0; bx < 4; ++bx)
      for (int c = 0; c < 3; ++c)
        mosaic[by][bx][c] = static_cast<float>((rng.next_unit() - 0.5) * 0.24);
  auto bilinear = [](const float* grid, int stride, double step, int x, int y) -> double {
    const double fx = x / step, fy = y / step;
    const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
    const double tx = fx - ix, ty = fy - iy;
    const float* row = grid + iy * stride + ix;
    return (1 - ty) * ((1 - tx) * row[0] + tx * row[1]) +
           ty * ((1 - tx) * row[stride] + tx * row[stride + 1]);
  };
  auto nuisance = [&](int x, int y, int c) -> double {
    const double u = x / 31.0 - 0.5, v = y / 31.0 - 0.5;
    return rampx * u + rampy * v +
           shade * std::sin(4.5 * u + phx) * std::sin(4.5 * v + phy) +
           bilinear(&grid4[c][0][0], 9, 4.0, x, y) +
           bilinear(&grid2[c][0][0], 17, 2.0, x, y) +
           mosaic[y >> 3][x >> 3][c];
  };

  const double cx = kSize / 2.0 + (rng.next_unit() - 0.5) * 8.0;
  const double cy = kSize / 2.0 + (rng.next_unit() - 0.5) * 8.0;
  const double radius = 8.0 * (0.8 + 0.4 * rng.next_unit());
  const double t = 1.5 + 0.5 * rng.next_unit();  // stroke thickness

  // All glyphs are thin strokes with a similar bounding envelope; what
  // differs between classes is edge orientation and topology at the
  // stroke scale, not coarse blob statistics.
  auto inside = [&](int x, int y) -> bool {
    const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
    const double ax = std::fabs(dx), ay = std::fabs(dy);
    switch (cls) {
      case 0: {  // ring
        const double d = std::sqrt(dx * dx + dy * dy);
        return d <= radius && d >= radius - t;
      }
      case 1: {  // square outline
        const double m = std::max(ax, ay);
        return m <= radius * 0.9 && m >= radius * 0.9 - t;
      }
      case 2: {  // diamond outline
        const double d = ax + ay;
        return d <= radius * 1.2 && d >= radius * 1.2 - 1.4 * t;
      }
      case 3: {  // triangle outline
        const double e1 = dy + radius * 0.6;                  // bottom edge
        const double e2 = radius * 0.6 - dy - 1.2 * ax;       // slanted pair
        return e1 >= 0 && e2 >= 0 && std::min(e1, e2) <= t;
      }
      case 4:  // X
        return std::fabs(ax - ay) <= t * 0.7 && std::max(ax, ay) <= radius;
      case 5:  // plus
        return (ax <= t * 0.7 && ay <= radius) || (ay <= t * 0.7 && ax <= radius);
      case 6:  // asterisk: X overlaid on plus, slightly shrunk
        return std::max(ax, ay) <= radius * 0.85 &&
               (ax <= t * 0.55 || ay <= t * 0.55 || std::fabs(ax - ay) <= t * 0.55);
      case 7:  // H: two uprights plus a crossbar
        return (std::fabs(ax - radius * 0.7) <= t * 0.6 && ay <= radius) ||
               (ay <= t * 0.6 && ax <= radius * 0.7);
      case 8: {  // 3x3 dot lattice
        const double s = radius * 0.75;
        const double mx = std::min(ax, std::fabs(ax - s));
        const double my = std::min(ay, std::fabs(ay - s));
        return ax <= s + t && ay <= s + t && mx * mx + my * my <= t * t;
      }
      case 9:  // Z: two horizontal bars joined by the anti-diagonal
        return (ax <= radius * 0.8 &&
                (std::fabs(dy + radius * 0.8) <= t * 0.6 ||
                 std::fabs(dy - radius * 0.8) <= t * 0.6)) ||
               (std::fabs(dx + dy) <= t * 0.7 && ax <= radius * 0.8 && ay <= radius * 0.8);
      default: return false;
    }
  };

  Tensor img(std::vector<int>{kSize, kSize, 3});
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      const float* color = inside(x, y) ? fg : bg;
      for (int c = 0; c < 3; ++c) {
        const double noisy = color[c] + nuisance(x, y, c) + 0.05 * rng.next_gaussian();
        const double clamped = std::clamp(noisy, 0.0, 1.0);
        img.at(y, x, c) = static_cast<float>(std::lround(clamped * 255.0) / 255.0);
      }
    }
  }
  return img;
}

DataSplit generate_split(uint64_t split_seed, int n) {
  DataSplit split;
  split.images.reserve(static_cast<size_t>(n));
  split.labels.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int cls = i % 10;
    SplitMix64 rng(substream_seed(split_seed, static_cast<uint64_t>(i)));
    split.images.push_back(render_sample(cls, rng));
    split.labels.push_back(static_cast<uint8_t>(cls));
  }
  return split;
}

void put_u32(std::FILE* f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  if (std::fwrite(b, 1, 4, f) != 4) throw FormatError(FormatError::Kind::Io, "write failed");
}

uint32_t get_u32(std::FILE* f) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw FormatError(FormatError::Kind::Truncated, "unexpected end of file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};

void put_split(std::FILE* f, const DataSplit& split) {
  if (!split.labels.empty() &&
      std::fwrite(split.labels.data(), 1, split.labels.size(), f) != split.labels.size()) {
    throw FormatError(FormatError::Kind::Io, "write failed");
  }
  for (const Tensor& img : split.images) {
    const std::vector<uint8_t> bytes = quantize_to_bytes(img);
    if (std::fwrite(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
      throw FormatError(FormatError::Kind::Io, "write failed");
    }
  }
}

DataSplit get_split(std::FILE* f, int n, int h, int w, int c) {
  DataSplit split;
  split.labels.resize(static_cast<size_t>(n));
  if (n > 0 && std::fread(split.labels.data(), 1, split.labels.size(), f) != split.labels.size()) {
    throw FormatError(FormatError::Kind::Truncated, "unexpected end of file");
  }
  for (uint8_t l : split.labels) {
    if (l >= 10) throw FormatError(FormatError::Kind::BadValue, "label out of range");
  }
  const size_t px = static_cast<size_t>(h) * w * c;
  std::vector<uint8_t> bytes(px);
  split.images.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (std::fread(bytes.data(), 1, px, f) != px) {
      throw FormatError(FormatError::Kind::Truncated, "unexpected end of file");
    }
    split.images.push_back(bytes_to_image(bytes, h, w, c));
  }
  return split;
}

}  // namespace

Dataset generate_dataset(uint64_t seed, int n_train, int n_test) {
  if (n_train < 0 || n_test < 0) throw std::invalid_argument("generate_dataset: negative split size");
  Dataset ds;
  ds.seed = seed;
  ds.train = generate_split(substream_seed(seed, 0xA11CE), n_train);
  ds.test = generate_split(substream_seed(seed, 0xB0B), n_test);
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
  if (!f) throw FormatError(FormatError::Kind::Io, "cannot open " + path + " for writing");
  if (std::fwrite("CIAD", 1, 4, f.get()) != 4) throw FormatError(FormatError::Kind::Io, "write failed");
  put_u32(f.get(), 1);
  put_u32(f.get(), static_cast<uint32_t>(ds.height));
  put_u32(f.get(), static_cast<uint32_t>(ds.width));
  put_u32(f.get(), static_cast<uint32_t>(ds.channels));
  put_u32(f.get(), static_cast<uint32_t>(ds.train.images.size()));
  put_u32(f.get(), static_cast<uint32_t>(ds.test.images.size()));
  put_u32(f.get(), static_cast<uint32_t>(ds.seed & 0xffffffffu));
  put_u32(f.get(), static_cast<uint32_t>(ds.seed >> 32));
  put_split(f.get(), ds.train);
  put_split(f.get(), ds.test);
  if (std::fflush(f.get()) != 0) throw FormatError(FormatError::Kind::Io, "flush failed");
}

Dataset load_dataset(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
  if (!f) throw FormatError(FormatError::Kind::Io, "cannot open " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4) throw FormatError(FormatError::Kind::Truncated, "file too short");
  if (std::memcmp(magic, "CIAD", 4) != 0) throw FormatError(FormatError::Kind::BadMagic, "not a dataset file");
  if (get_u32(f.get()) != 1) throw FormatError(FormatError::Kind::BadVersion, "unsupported dataset version");
  Dataset ds;
  ds.height = static_cast<int>(get_u32(f.get()));
  ds.width = static_cast<int>(get_u32(f.get()));
  ds.channels = static_cast<int>(get_u32(f.get()));
  const uint32_t n_train = get_u32(f.get());
  const uint32_t n_test = get_u32(f.get());
  const uint32_t seed_lo = get_u32(f.get());
  const uint32_t seed_hi = get_u32(f.get());
  ds.seed = (static_cast<uint64_t>(seed_hi) << 32) | seed_lo;
  if (ds.height <= 0 || ds.height > 1 << 12 || ds.width <= 0 || ds.width > 1 << 12 ||
      ds.channels <= 0 || ds.channels > 16 || n_train > 1u << 24 || n_test > 1u << 24) {
    throw FormatError(FormatError::Kind::BadValue, "implausible dataset header");
  }
  ds.train = get_split(f.get(), static_cast<int>(n_train), ds.height, ds.width, ds.channels);
  ds.test = get_split(f.get(), static_cast<int>(n_test), ds.height, ds.width, ds.channels);
  return ds;
}

Tensor quantize_roundtrip(const Tensor& image) {
  Tensor out = image;
  // forgive a single float32 rounding step beyond [0,1]; reject real range errors
  constexpr float slack = 1.1920929e-7f;  // 2^-23
  for (int i = 0; i < out.size(); ++i) {
    const float v = out[i];
    if (v < -slack || v > 1.0f + slack) {
      throw std::invalid_argument("quantize_roundtrip: value outside [0,1]");
    }
    const long code = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0);
    out[i] = static_cast<float>(static_cast<double>(code) / 255.0);
  }
  return out;
}

std::vector<uint8_t> quantize_to_bytes(const Tensor& image) {
  std::vector<uint8_t> bytes(static_cast<size_t>(image.size()));
  constexpr float slack = 1.1920929e-7f;
  for (int i = 0; i < image.size(); ++i) {
    const float v = image[i];
    if (v < -slack || v > 1.0f + slack) {
      throw std::invalid_argument("quantize_to_bytes: value outside [0,1]");
    }
    bytes[static_cast<size_t>(i)] =
        static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0));
  }
  return bytes;
}

Tensor bytes_to_image(const std::vector<uint8_t>& bytes, int h, int w, int c) {
  if (bytes.size() != static_cast<size_t>(h) * w * c) {
    throw std::invalid_argument("bytes_to_image: length mismatch");
  }
  Tensor img(std::vector<int>{h, w, c});
  for (int i = 0; i < img.size(); ++i) {
    img[i] = static_cast<float>(bytes[static_cast<size_t>(i)] / 255.0);
  }
  return img;
}

int max_byte_deviation(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_byte_deviation: shape mismatch");
  const std::vector<uint8_t> ba = quantize_to_bytes(a);
  const std::vector<uint8_t> bb = quantize_to_bytes(b);
  int worst = 0;
  for (size_t i = 0; i < ba.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<int>(ba[i]) - static_cast<int>(bb[i])));
  }
  return worst;
}

}  // namespace cia
