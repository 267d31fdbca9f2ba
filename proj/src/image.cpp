#include "dcec/image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

namespace dcec {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode, DatasetErrorKind kind) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DatasetError(kind, "cannot open " + path);
  return f;
}

RawImage decode_png(std::FILE* f, const std::string& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DatasetError(DatasetErrorKind::kDecode, "libpng initialization failed for " + path);
  }
  RawImage out;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DatasetError(DatasetErrorKind::kDecode, path + " is not a valid PNG");
  }

  png_init_io(png, f);
  png_read_info(png, info);

  // Normalize to 8-bit gray/RGB/RGBA.
  png_set_expand(png);  // palettes, low bit depths, tRNS alpha
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  out.height = static_cast<Index>(png_get_image_height(png, info));
  out.width = static_cast<Index>(png_get_image_width(png, info));
  out.channels = static_cast<Index>(png_get_channels(png, info));
  out.pixels.resize(static_cast<std::size_t>(out.height * out.width * out.channels));
  row_ptrs.resize(static_cast<std::size_t>(out.height));
  const std::size_t stride = static_cast<std::size_t>(out.width * out.channels);
  for (Index y = 0; y < out.height; ++y)
    row_ptrs[static_cast<std::size_t>(y)] = out.pixels.data() + static_cast<std::size_t>(y) * stride;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

struct JpegErrorTrap {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* trap = reinterpret_cast<JpegErrorTrap*>(cinfo->err);
  std::longjmp(trap->jump, 1);
}

RawImage decode_jpeg(std::FILE* f, const std::string& path) {
  jpeg_decompress_struct cinfo;
  JpegErrorTrap trap;
  cinfo.err = jpeg_std_error(&trap.mgr);
  trap.mgr.error_exit = jpeg_error_exit;
  if (setjmp(trap.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DatasetError(DatasetErrorKind::kDecode, path + " is not a valid JPEG");
  }

  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  jpeg_start_decompress(&cinfo);

  RawImage out;
  out.height = static_cast<Index>(cinfo.output_height);
  out.width = static_cast<Index>(cinfo.output_width);
  out.channels = static_cast<Index>(cinfo.output_components);
  out.pixels.resize(static_cast<std::size_t>(out.height * out.width * out.channels));
  const std::size_t stride = static_cast<std::size_t>(out.width * out.channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * stride;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace

RawImage decode_image(const std::string& path) {
  FilePtr f = open_file(path, "rb", DatasetErrorKind::kMissingFile);
  unsigned char magic[3] = {0, 0, 0};
  const std::size_t got = std::fread(magic, 1, sizeof magic, f.get());
  std::rewind(f.get());
  if (got >= 3 && magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N')
    return decode_png(f.get(), path);
  if (got >= 3 && magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF)
    return decode_jpeg(f.get(), path);
  throw DatasetError(DatasetErrorKind::kDecode, path + " is neither PNG nor JPEG");
}

void write_png(const std::string& path, const RawImage& image) {
  if (image.channels != 3 || image.height < 1 || image.width < 1)
    throw ShapeError("write_png expects a non-empty RGB image");
  if (image.pixels.size() != static_cast<std::size_t>(image.height * image.width * 3))
    throw ShapeError("write_png: pixel buffer does not match dimensions");

  FilePtr f = open_file(path, "wb", DatasetErrorKind::kIo);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DatasetError(DatasetErrorKind::kIo, "libpng initialization failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DatasetError(DatasetErrorKind::kIo, "PNG write failed for " + path);
  }

  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(image.width * 3);
  for (Index y = 0; y < image.height; ++y)
    png_write_row(png, const_cast<png_bytep>(image.pixels.data()) +
                           static_cast<std::size_t>(y) * stride);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

TensorF preprocess(const RawImage& raw, Index target_size) {
  if (raw.height < 1 || raw.width < 1)
    throw ShapeError("preprocess: image has a zero dimension");
  if (raw.channels != 1 && raw.channels != 3 && raw.channels != 4)
    throw ShapeError("preprocess: unsupported channel count " + std::to_string(raw.channels));
  if (raw.pixels.size() != static_cast<std::size_t>(raw.height * raw.width * raw.channels))
    throw ShapeError("preprocess: pixel buffer does not match dimensions");
  if (target_size < 1) throw ShapeError("preprocess: target size must be >= 1");

  const Index s = target_size;
  TensorF out({s, s, 3});
  const double scale_y = static_cast<double>(raw.height) / static_cast<double>(s);
  const double scale_x = static_cast<double>(raw.width) / static_cast<double>(s);

  for (Index oy = 0; oy < s; ++oy) {
    // Half-pixel-center sampling; clamped to the source grid.
    const double sy = std::max(0.0, (static_cast<double>(oy) + 0.5) * scale_y - 0.5);
    const Index y0 = std::min(static_cast<Index>(sy), raw.height - 1);
    const Index y1 = std::min(y0 + 1, raw.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (Index ox = 0; ox < s; ++ox) {
      const double sx = std::max(0.0, (static_cast<double>(ox) + 0.5) * scale_x - 0.5);
      const Index x0 = std::min(static_cast<Index>(sx), raw.width - 1);
      const Index x1 = std::min(x0 + 1, raw.width - 1);
      const double fx = sx - static_cast<double>(x0);
      for (Index c = 0; c < 3; ++c) {
        const Index sc = raw.channels == 1 ? 0 : c;  // replicate grayscale
        const double v00 = raw.at(y0, x0, sc);
        const double v01 = raw.at(y0, x1, sc);
        const double v10 = raw.at(y1, x0, sc);
        const double v11 = raw.at(y1, x1, sc);
        const double top = v00 + (v01 - v00) * fx;
        const double bottom = v10 + (v11 - v10) * fx;
        out.at({oy, ox, c}) = static_cast<float>((top + (bottom - top) * fy) / 255.0);
      }
    }
  }
  return out;
}

}  // namespace dcec
