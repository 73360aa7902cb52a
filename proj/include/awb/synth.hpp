#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "awb/image_io.hpp"
#include "awb/rng.hpp"

namespace awb::data {

/// Parameters of the generated two-class desk dataset: grayscale gratings,
/// horizontal for class "fake" (0) and vertical for class "real" (1), with
/// randomized phase, frequency jitter, amplitude, and pixel noise.
struct SynthConfig {
  int64_t side = 16;
  int64_t count = 2000;  // total, split evenly across the two classes
  uint64_t seed = 42;
  double noise = 0.08;
  std::string format = "png";  // png or pgm
};

/// Writes `<root>/fake` and `<root>/real` image directories and returns the
/// number of files written.
inline int64_t write_synthetic_dataset(const std::filesystem::path& root,
                                       const SynthConfig& config) {
  Rng rng(config.seed);
  std::filesystem::create_directories(root / "fake");
  std::filesystem::create_directories(root / "real");
  const int64_t per_class = config.count / 2;
  const double pi = 3.14159265358979323846;

  int64_t written = 0;
  for (int label = 0; label < 2; ++label) {
    const char* cls = label == 0 ? "fake" : "real";
    for (int64_t i = 0; i < per_class; ++i) {
      double phase = rng.uniform(0.0, 2.0 * pi);
      double freq = rng.uniform(1.5, 2.5);  // cycles across the image
      double amplitude = rng.uniform(0.3, 0.45);
      Raster r;
      r.width = config.side;
      r.height = config.side;
      r.channels = 1;
      r.pixels.resize(config.side * config.side);
      for (int64_t y = 0; y < config.side; ++y)
        for (int64_t x = 0; x < config.side; ++x) {
          int64_t along = label == 0 ? y : x;  // grating orientation
          double t = 2.0 * pi * freq * along / static_cast<double>(config.side);
          double v = 0.5 + amplitude * std::sin(t + phase) +
                     rng.normal(0.0, config.noise);
          v = std::min(1.0, std::max(0.0, v));
          r.pixels[y * config.side + x] =
              static_cast<uint8_t>(std::lround(v * 255.0));
        }
      char name[32];
      std::snprintf(name, sizeof(name), "img_%05lld.%s",
                    static_cast<long long>(i), config.format.c_str());
      write_raster(root / cls / name, r);
      ++written;
    }
  }
  return written;
}

}  // namespace awb::data
