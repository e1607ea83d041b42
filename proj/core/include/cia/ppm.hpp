#pragma once

#include <string>

#include "cia/tensor.hpp"

namespace cia {

/// Binary PPM (P6, maxval 255). Values are quantized to the 8-bit grid on
/// write; an image already on the grid round-trips losslessly.
void write_ppm(const std::string& path, const Tensor& image);

/// Strict P6 reader: '#' comments allowed in the header, maxval must be 255.
Tensor read_ppm(const std::string& path);

}  // namespace cia
