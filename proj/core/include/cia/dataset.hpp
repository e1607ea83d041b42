#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cia/tensor.hpp"

namespace cia {

struct DataSplit {
  std::vector<Tensor> images;   // HWC float in [0,1], already on the 8-bit grid
  std::vector<uint8_t> labels;
};

struct Dataset {
  int height = 32, width = 32, channels = 3;
  int num_classes = 10;
  uint64_t seed = 0;
  DataSplit train, test;
};

/// Synthetic 10-class corpus: thin outline glyphs (ring, square, diamond,
/// triangle, X, plus, asterisk, H, dot lattice, Z) drawn from one shared
/// stroke-color family over a gray background, with jittered placement, size,
/// hue, light/dark sign, smooth lighting fields, and Gaussian pixel noise.
/// Labels are class-balanced (sample i has class i%10). Every pixel is
/// quantized to the 8-bit grid at generation time, so saved images round-trip
/// losslessly. Deterministic per seed.
Dataset generate_dataset(uint64_t seed, int n_train, int n_test);

/// Binary dataset file ("CIAD" v1, little-endian, 8-bit pixels).
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// Snap every value to the 8-bit grid: v -> round(v*255)/255, rounding half
/// away from zero. Input must be in [0,1] (a one-ulp excursion is forgiven,
/// anything more is rejected).
Tensor quantize_roundtrip(const Tensor& image);

/// 8-bit codes for an image already in [0,1]; same rounding as above.
std::vector<uint8_t> quantize_to_bytes(const Tensor& image);
Tensor bytes_to_image(const std::vector<uint8_t>& bytes, int h, int w, int c);

/// Largest absolute difference between two images measured in 8-bit counts.
int max_byte_deviation(const Tensor& a, const Tensor& b);

}  // namespace cia
