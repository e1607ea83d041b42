#pragma once

#include <vector>

#include "cia/network.hpp"
#include "cia/tensor.hpp"

namespace cia {

/// Uniform k x k mean filter applied to every channel independently.
/// k must be odd; replicate padding is the default used everywhere.
struct SmoothingSpec {
  int kernel = 3;
  Padding padding = Padding::Replicate;
};

/// Differentiable stand-in for JPEG: convert to YCbCr, mean-filter the luma
/// and chroma planes with separate kernel sizes, convert back, clamp to
/// [0,1]. The chroma kernel may be even (6 mimics 4:2:0 subsampling loss);
/// even windows anchor over offsets [-k/2, k-1-k/2].
struct JpegApproxSpec {
  int luma_kernel = 3;
  int chroma_kernel = 6;
  Padding padding = Padding::Replicate;
};

/// Real JPEG round trip (8x8 block DCT + quantization, no entropy coding).
/// Not differentiable; has no layer form.
struct JpegCodecSpec {
  int quality = 50;  // 1..100
};

Tensor mean_filter(const Tensor& image, const SmoothingSpec& spec);

Tensor rgb_to_ycbcr(const Tensor& image);
Tensor ycbcr_to_rgb(const Tensor& image);

Tensor jpeg_approx(const Tensor& image, const JpegApproxSpec& spec);

/// Encode-decode through the lossy JPEG pipeline: YCbCr, per-channel 8x8
/// orthonormal DCT-II, quantization by the quality-scaled standard tables
/// (luma table on Y, chroma table on Cb/Cr), inverse, clamp. Spatial dims
/// are padded to multiples of 8 by edge replication and cropped back.
Tensor jpeg_encode_decode(const Tensor& image, const JpegCodecSpec& spec);

/// Quality-scaled quantization table entries: scale = Q<50 ? 5000/Q : 200-2Q,
/// q' = clamp(floor((q*scale + 50)/100), 1, 255). Q=50 reproduces the base
/// tables. `chroma` selects which standard table to scale.
std::vector<int> jpeg_quant_table(int quality, bool chroma);

/// Differentiable defenses expressed as network layers, for building the
/// defense-fronted classifier F' = F(defense(x)).
std::vector<LayerSpec> defense_as_layers(const SmoothingSpec& spec);
std::vector<LayerSpec> defense_as_layers(const JpegApproxSpec& spec);
/// Always throws: the codec is non-differentiable.
std::vector<LayerSpec> defense_as_layers(const JpegCodecSpec& spec);

namespace detail {
// Shared by the standalone transforms and the network layer implementations
// so both compute identical values. Row-major 3x3.
const double (*ycbcr_forward_matrix())[3];
const double (*ycbcr_inverse_matrix())[3];
}  // namespace detail

}  // namespace cia
