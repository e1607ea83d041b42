#include "cia/ppm.hpp"

#include <cctype>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>

#include "cia/dataset.hpp"
#include "cia/errors.hpp"

namespace cia {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};

// skip whitespace and '#' comment lines, then parse a decimal integer
int read_header_int(std::FILE* f) {
  int ch = std::fgetc(f);
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = std::fgetc(f);
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = std::fgetc(f);
  }
  if (ch == EOF) throw FormatError(FormatError::Kind::Truncated, "ppm: header ended early");
  if (!std::isdigit(ch)) throw FormatError(FormatError::Kind::BadValue, "ppm: expected a number");
  long v = 0;
  while (ch != EOF && std::isdigit(ch)) {
    v = v * 10 + (ch - '0');
    if (v > 1 << 20) throw FormatError(FormatError::Kind::BadValue, "ppm: header number too large");
    ch = std::fgetc(f);
  }
  if (ch != EOF) std::ungetc(ch, f);
  return static_cast<int>(v);
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.shape()[2] != 3) {
    throw std::invalid_argument("write_ppm: expects an HWC image with 3 channels");
  }
  const std::vector<uint8_t> bytes = quantize_to_bytes(image);
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
  if (!f) throw FormatError(FormatError::Kind::Io, "cannot open " + path + " for writing");
  const std::string header =
      "P6\n" + std::to_string(image.shape()[1]) + " " + std::to_string(image.shape()[0]) + "\n255\n";
  if (std::fwrite(header.data(), 1, header.size(), f.get()) != header.size() ||
      std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size()) {
    throw FormatError(FormatError::Kind::Io, "ppm: write failed");
  }
  if (std::fflush(f.get()) != 0) throw FormatError(FormatError::Kind::Io, "ppm: flush failed");
}

Tensor read_ppm(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
  if (!f) throw FormatError(FormatError::Kind::Io, "cannot open " + path);
  char magic[2];
  if (std::fread(magic, 1, 2, f.get()) != 2) throw FormatError(FormatError::Kind::Truncated, "ppm: file too short");
  if (magic[0] != 'P' || magic[1] != '6') throw FormatError(FormatError::Kind::BadMagic, "ppm: not a P6 file");
  const int w = read_header_int(f.get());
  const int h = read_header_int(f.get());
  const int maxval = read_header_int(f.get());
  if (w <= 0 || h <= 0) throw FormatError(FormatError::Kind::BadValue, "ppm: bad dimensions");
  if (maxval != 255) throw FormatError(FormatError::Kind::BadValue, "ppm: maxval must be 255");
  const int sep = std::fgetc(f.get());
  if (sep == EOF || !std::isspace(sep)) {
    throw FormatError(FormatError::Kind::BadValue, "ppm: missing separator after header");
  }
  std::vector<uint8_t> bytes(static_cast<size_t>(w) * h * 3);
  if (std::fread(bytes.data(), 1, bytes.size(), f.get()) != bytes.size()) {
    throw FormatError(FormatError::Kind::Truncated, "ppm: pixel data ended early");
  }
  return bytes_to_image(bytes, h, w, 3);
}

}  // namespace cia
