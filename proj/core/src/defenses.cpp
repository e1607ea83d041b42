#include "cia/defenses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace cia {

namespace detail {

// RGB -> YCbCr (JFIF full-range): ycc = A*rgb + (0, 0.5, 0.5)
const double (*ycbcr_forward_matrix())[3] {
  static const double m[3][3] = {
      {0.299, 0.587, 0.114},
      {-0.168736, -0.331264, 0.5},
      {0.5, -0.418688, -0.081312},
  };
  return m;
}

// exact rational inverse of the forward matrix, so the round trip is tight
// to float noise
const double (*ycbcr_inverse_matrix())[3] {
  static const double m[3][3] = {
      {1.0, -1.218894188681752e-06, 1.4019995886573404},
      {1.0, -0.34413567816533669, -0.71413615558181254},
      {1.0, 1.7720000660738162, 4.0629806289391732e-07},
  };
  return m;
}

}  // namespace detail

namespace {

void check_rgb(const Tensor& image, const char* what) {
  if (image.rank() != 3 || image.shape()[2] != 3) {
    throw std::invalid_argument(std::string(what) + ": expects an HWC image with 3 channels");
  }
}

/// Mean-filter one or more channels in place on a copy. Window offsets are
/// [-k/2, k-1-k/2], which centers odd kernels and anchors even ones the same
/// way the convolution op does. Accumulation order matches conv2d so the
/// layer form of a defense reproduces this bit for bit.
Tensor filter_channels(const Tensor& image, int k, Padding padding,
                       const std::vector<int>& channels) {
  const auto& s = image.shape();
  const int h = s[0], w = s[1];
  if (k <= 0 || k > h || k > w) {
    throw std::invalid_argument("mean filter kernel larger than image");
  }
  const int lo = -(k / 2), hi = k - 1 - (k / 2);
  const float wgt = static_cast<float>(1.0 / (static_cast<double>(k) * k));
  Tensor out = image;
  for (int ch : channels) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int dy = lo; dy <= hi; ++dy) {
          int sy = y + dy;
          if (padding == Padding::Replicate) sy = std::clamp(sy, 0, h - 1);
          else if (sy < 0 || sy >= h) continue;
          for (int dx = lo; dx <= hi; ++dx) {
            int sx = x + dx;
            if (padding == Padding::Replicate) sx = std::clamp(sx, 0, w - 1);
            else if (sx < 0 || sx >= w) continue;
            acc += static_cast<double>(image.at(sy, sx, ch)) * static_cast<double>(wgt);
          }
        }
        out.at(y, x, ch) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

Tensor clamp01(const Tensor& t) {
  Tensor out = t;
  float* p = out.data();
  for (int i = 0; i < out.size(); ++i) p[i] = std::clamp(p[i], 0.0f, 1.0f);
  return out;
}

constexpr int kBaseLuma[64] = {
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
};

constexpr int kBaseChroma[64] = {
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
};

// orthonormal 8-point DCT-II basis: row k, column n
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    const double pi = 3.14159265358979323846;
    for (int k = 0; k < 8; ++k) {
      const double s = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n) {
        b[k][n] = s * std::cos(pi * (2 * n + 1) * k / 16.0);
      }
    }
    return b;
  }();
  return basis;
}

}  // namespace

Tensor mean_filter(const Tensor& image, const SmoothingSpec& spec) {
  if (image.rank() != 3) throw std::invalid_argument("mean_filter: expects an HWC image");
  if (spec.kernel % 2 == 0) throw std::invalid_argument("mean_filter: kernel size must be odd");
  std::vector<int> all(static_cast<size_t>(image.shape()[2]));
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return filter_channels(image, spec.kernel, spec.padding, all);
}

Tensor rgb_to_ycbcr(const Tensor& image) {
  check_rgb(image, "rgb_to_ycbcr");
  const double(*m)[3] = detail::ycbcr_forward_matrix();
  Tensor out(image.shape());
  const float* in = image.data();
  float* op = out.data();
  const int pixels = image.size() / 3;
  for (int p = 0; p < pixels; ++p) {
    const double r = in[p * 3 + 0], g = in[p * 3 + 1], b = in[p * 3 + 2];
    op[p * 3 + 0] = static_cast<float>(m[0][0] * r + m[0][1] * g + m[0][2] * b);
    op[p * 3 + 1] = static_cast<float>(m[1][0] * r + m[1][1] * g + m[1][2] * b + 0.5);
    op[p * 3 + 2] = static_cast<float>(m[2][0] * r + m[2][1] * g + m[2][2] * b + 0.5);
  }
  return out;
}

Tensor ycbcr_to_rgb(const Tensor& image) {
  check_rgb(image, "ycbcr_to_rgb");
  const double(*m)[3] = detail::ycbcr_inverse_matrix();
  Tensor out(image.shape());
  const float* in = image.data();
  float* op = out.data();
  const int pixels = image.size() / 3;
  for (int p = 0; p < pixels; ++p) {
    const double y = in[p * 3 + 0];
    const double cb = in[p * 3 + 1] - 0.5;
    const double cr = in[p * 3 + 2] - 0.5;
    for (int i = 0; i < 3; ++i) {
      op[p * 3 + i] = static_cast<float>(m[i][0] * y + m[i][1] * cb + m[i][2] * cr);
    }
  }
  return out;
}

Tensor jpeg_approx(const Tensor& image, const JpegApproxSpec& spec) {
  check_rgb(image, "jpeg_approx");
  if (spec.luma_kernel % 2 == 0) {
    throw std::invalid_argument("jpeg_approx: luma kernel size must be odd");
  }
  Tensor ycc = rgb_to_ycbcr(image);
  ycc = filter_channels(ycc, spec.luma_kernel, spec.padding, {0});
  ycc = filter_channels(ycc, spec.chroma_kernel, spec.padding, {1, 2});
  return clamp01(ycbcr_to_rgb(ycc));
}

std::vector<int> jpeg_quant_table(int quality, bool chroma) {
  if (quality < 1 || quality > 100) {
    throw std::invalid_argument("jpeg quality must be in 1..100");
  }
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  const int* base = chroma ? kBaseChroma : kBaseLuma;
  std::vector<int> out(64);
  for (int i = 0; i < 64; ++i) {
    out[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  }
  return out;
}

Tensor jpeg_encode_decode(const Tensor& image, const JpegCodecSpec& spec) {
  check_rgb(image, "jpeg_encode_decode");
  const std::vector<int> qluma = jpeg_quant_table(spec.quality, false);
  const std::vector<int> qchroma = jpeg_quant_table(spec.quality, true);

  const auto& s = image.shape();
  const int h = s[0], w = s[1];
  const int ph = (h + 7) / 8 * 8, pw = (w + 7) / 8 * 8;

  // pad by edge replication so every block is full
  Tensor padded(std::vector<int>{ph, pw, 3});
  for (int y = 0; y < ph; ++y) {
    const int sy = std::min(y, h - 1);
    for (int x = 0; x < pw; ++x) {
      const int sx = std::min(x, w - 1);
      for (int c = 0; c < 3; ++c) padded.at(y, x, c) = image.at(sy, sx, c);
    }
  }

  Tensor ycc = rgb_to_ycbcr(padded);
  const auto& basis = dct_basis();

  for (int c = 0; c < 3; ++c) {
    const std::vector<int>& qt = c == 0 ? qluma : qchroma;
    for (int by = 0; by < ph; by += 8) {
      for (int bx = 0; bx < pw; bx += 8) {
        double blk[8][8];
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            blk[y][x] = static_cast<double>(ycc.at(by + y, bx + x, c)) * 255.0 - 128.0;

        // coeffs = C * blk * C^T
        double tmp[8][8], coef[8][8];
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int n = 0; n < 8; ++n) acc += blk[y][n] * basis[x][n];
            tmp[y][x] = acc;
          }
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int n = 0; n < 8; ++n) acc += basis[y][n] * tmp[n][x];
            coef[y][x] = acc;
          }

        // quantize (round half away from zero), dequantize
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            const double q = static_cast<double>(qt[y * 8 + x]);
            coef[y][x] = std::round(coef[y][x] / q) * q;
          }

        // blk = C^T * coef * C
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int n = 0; n < 8; ++n) acc += coef[y][n] * basis[n][x];
            tmp[y][x] = acc;
          }
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int n = 0; n < 8; ++n) acc += basis[n][y] * tmp[n][x];
            ycc.at(by + y, bx + x, c) = static_cast<float>((acc + 128.0) / 255.0);
          }
      }
    }
  }

  Tensor rgb = clamp01(ycbcr_to_rgb(ycc));
  if (ph == h && pw == w) return rgb;
  Tensor out(std::vector<int>{h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = rgb.at(y, x, c);
  return out;
}

std::vector<LayerSpec> defense_as_layers(const SmoothingSpec& spec) {
  if (spec.kernel % 2 == 0) throw std::invalid_argument("smoothing kernel size must be odd");
  LayerSpec conv = LayerSpec::conv(spec.kernel, 3, 3, spec.padding);
  const float wgt = static_cast<float>(1.0 / (static_cast<double>(spec.kernel) * spec.kernel));
  for (int dy = 0; dy < spec.kernel; ++dy)
    for (int dx = 0; dx < spec.kernel; ++dx)
      for (int c = 0; c < 3; ++c)
        conv.weights[((dy * spec.kernel + dx) * 3 + c) * 3 + c] = wgt;
  return {std::move(conv)};
}

std::vector<LayerSpec> defense_as_layers(const JpegApproxSpec& spec) {
  if (spec.luma_kernel % 2 == 0) {
    throw std::invalid_argument("jpeg_approx luma kernel size must be odd");
  }
  const int k = std::max(spec.luma_kernel, spec.chroma_kernel);
  LayerSpec conv = LayerSpec::conv(k, 3, 3, spec.padding);
  // embed each channel's uniform kernel in the k x k window so that its taps
  // land on the same offsets the standalone filter uses
  auto embed = [&](int sub, int channel) {
    const int lo_layer = -(k / 2);
    const int lo_sub = -(sub / 2);
    const float wgt = static_cast<float>(1.0 / (static_cast<double>(sub) * sub));
    for (int dy = lo_sub; dy <= sub - 1 - (sub / 2); ++dy)
      for (int dx = lo_sub; dx <= sub - 1 - (sub / 2); ++dx) {
        const int iy = dy - lo_layer, ix = dx - lo_layer;
        conv.weights[((iy * k + ix) * 3 + channel) * 3 + channel] = wgt;
      }
  };
  embed(spec.luma_kernel, 0);
  embed(spec.chroma_kernel, 1);
  embed(spec.chroma_kernel, 2);
  return {
      LayerSpec::fixed_transform(TransformId::RgbToYcbcr),
      std::move(conv),
      LayerSpec::fixed_transform(TransformId::YcbcrToRgb),
      LayerSpec::fixed_transform(TransformId::Clamp01),
  };
}

std::vector<LayerSpec> defense_as_layers(const JpegCodecSpec&) {
  throw std::invalid_argument("non-differentiable defense: the JPEG codec has no layer form");
}

}  // namespace cia
