#ifndef DCEC_IMAGE_HPP
#define DCEC_IMAGE_HPP
// Raw image decoding (PNG/JPEG), PNG writing, and preprocessing into the
// normalized [S,S,3] float tensors the models consume.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcec/tensor.hpp"

namespace dcec {

enum class DatasetErrorKind {
  kMissingFile,          // input file absent or unreadable
  kMalformedRow,         // manifest row does not parse
  kNonContiguousLabels,  // labels present but not a contiguous 0..m-1 range
  kDecode,               // image bytes not decodable as PNG or JPEG
  kIo,                   // write failure
};

class DatasetError : public std::runtime_error {
 public:
  DatasetError(DatasetErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  DatasetErrorKind kind() const { return kind_; }

 private:
  DatasetErrorKind kind_;
};

// 8-bit interleaved pixels, row-major [height, width, channels].
struct RawImage {
  Index height = 0;
  Index width = 0;
  Index channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(Index y, Index x, Index c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t& at(Index y, Index x, Index c) {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
};

// Decodes a PNG or JPEG file, dispatching on magic bytes. Produces 1, 3, or
// 4 channels (gray, RGB, RGBA); 16-bit and palette PNGs are expanded to 8-bit.
RawImage decode_image(const std::string& path);

// Writes an RGB image as PNG.
void write_png(const std::string& path, const RawImage& image);

// Bilinear resize to S x S (half-pixel centers, stretched to square), channel
// handling (grayscale replicated, alpha dropped), and division by 255.
TensorF preprocess(const RawImage& raw, Index target_size);

}  // namespace dcec

#endif  // DCEC_IMAGE_HPP
