#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "dcec/experiment.hpp"
#include "dcec/image.hpp"

namespace dcec {

namespace {

struct Rgb {
  double r, g, b;
};

// Standard HSV -> RGB, h in degrees, s and v in [0, 1].
Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

std::uint8_t quantize(double value) {
  const double clamped = std::clamp(value, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

}  // namespace

void make_synthetic_corpus(const std::string& out_dir, int classes, int per_class,
                           Index image_size, std::uint64_t seed) {
  if (classes < 2) throw ShapeError("make_synthetic_corpus: need at least 2 classes");
  if (per_class < 1) throw ShapeError("make_synthetic_corpus: need at least 1 image per class");
  if (image_size < 8) throw ShapeError("make_synthetic_corpus: image_size must be >= 8");

  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  fs::create_directories(root / "images");

  std::mt19937 rng(static_cast<std::uint32_t>(seed ^ (seed >> 32)));
  std::uniform_real_distribution<double> value_jitter(-0.08, 0.08);
  std::uniform_real_distribution<double> pixel_noise(-0.04, 0.04);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  static const char* kMotifNames[3] = {"disc", "stripes", "checker"};
  const double scale = static_cast<double>(image_size) / 32.0;

  std::string manifest = "path,label,group\n";
  RawImage img;
  img.height = image_size;
  img.width = image_size;
  img.channels = 3;
  img.pixels.assign(static_cast<std::size_t>(image_size * image_size * 3), 0);

  int id = 0;
  for (int c = 0; c < classes; ++c) {
    const double hue = 360.0 * c / classes;
    const int motif = c % 3;
    for (int rep = 0; rep < per_class; ++rep, ++id) {
      const double jitter = value_jitter(rng);
      const Rgb base = hsv_to_rgb(hue, 0.65, 0.55 + jitter);
      const Rgb accent = hsv_to_rgb(hue, 0.95, 0.95 + jitter);

      // Per-image motif parameters; every image draws the same number of
      // variates so the stream stays aligned regardless of motif branch.
      const double pa = unit(rng), pb = unit(rng), pc = unit(rng);
      const double cx = (0.38 + 0.24 * pa) * image_size;
      const double cy = (0.38 + 0.24 * pb) * image_size;
      const double radius = (0.18 + 0.12 * pc) * image_size;
      const int period = std::max<int>(2, static_cast<int>(std::lround((3.0 + 2.0 * pa) * scale)));
      const int phase = static_cast<int>(pb * period);
      const int parity = pc < 0.5 ? 0 : 1;

      for (Index y = 0; y < image_size; ++y) {
        for (Index x = 0; x < image_size; ++x) {
          bool on = false;
          switch (motif) {
            case 0: {
              const double dx = (x + 0.5) - cx, dy = (y + 0.5) - cy;
              on = dx * dx + dy * dy <= radius * radius;
              break;
            }
            case 1:
              on = ((y + phase) / period) % 2 == 0;
              break;
            default:
              on = (static_cast<int>(x) / period + static_cast<int>(y) / period) % 2 == parity;
              break;
          }
          const Rgb& color = on ? accent : base;
          const double noise = pixel_noise(rng);
          img.at(y, x, 0) = quantize(color.r + noise);
          img.at(y, x, 1) = quantize(color.g + noise);
          img.at(y, x, 2) = quantize(color.b + noise);
        }
      }

      char name[32];
      std::snprintf(name, sizeof(name), "img_%05d.png", id);
      write_png((root / "images" / name).string(), img);
      manifest += std::string("images/") + name + "," + std::to_string(c) + "," +
                  kMotifNames[motif] + "\n";
    }
  }

  std::ofstream out(root / "manifest.csv", std::ios::binary);
  if (!out) throw DatasetError(DatasetErrorKind::kIo, "cannot write " + (root / "manifest.csv").string());
  out << manifest;
}

}  // namespace dcec
