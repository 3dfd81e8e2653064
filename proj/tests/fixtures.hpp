#pragma once

// Synthetic desk-scale datasets: random ellipses ("polyps") on a textured
// background, written as PPM/PGM so no codec is involved.

#include <cmath>
#include <filesystem>
#include <string>

#include "ducknet/image_io.hpp"
#include "ducknet/rng.hpp"

namespace fixtures {

inline void make_ellipse_sample(ducknet::ImageU8& image, ducknet::ImageU8& mask,
                                int size, ducknet::Rng& rng) {
  image.width = image.height = size;
  image.channels = 3;
  image.pixels.assign(std::size_t(size) * size * 3, 0);
  mask.width = mask.height = size;
  mask.channels = 1;
  mask.pixels.assign(std::size_t(size) * size, 0);

  // low-frequency textured background
  const double fx = rng.uniform(0.05, 0.15), fy = rng.uniform(0.05, 0.15);
  const double px = rng.uniform(0, 6.28), py = rng.uniform(0, 6.28);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double t =
          0.45 + 0.12 * std::sin(fx * x + px) * std::cos(fy * y + py) +
          0.05 * rng.uniform(-1.0, 1.0);
      image.at(y, x, 0) = std::uint8_t(std::clamp(t * 255 * 0.9, 0.0, 255.0));
      image.at(y, x, 1) = std::uint8_t(std::clamp(t * 255 * 0.7, 0.0, 255.0));
      image.at(y, x, 2) = std::uint8_t(std::clamp(t * 255 * 0.6, 0.0, 255.0));
    }

  const int n_blobs = 1 + int(rng.below(2));
  for (int b = 0; b < n_blobs; ++b) {
    const double cx = rng.uniform(size * 0.25, size * 0.75);
    const double cy = rng.uniform(size * 0.25, size * 0.75);
    const double ax = rng.uniform(size * 0.10, size * 0.28);
    const double ay = rng.uniform(size * 0.10, size * 0.28);
    const double th = rng.uniform(0, 3.14159);
    const double ct = std::cos(th), st = std::sin(th);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double u = (ct * dx + st * dy) / ax;
        const double v = (-st * dx + ct * dy) / ay;
        if (u * u + v * v <= 1.0) {
          mask.at(y, x, 0) = 255;
          image.at(y, x, 0) =
              std::uint8_t(std::min(255.0, image.at(y, x, 0) + 90.0));
          image.at(y, x, 1) =
              std::uint8_t(std::min(255.0, image.at(y, x, 1) + 40.0));
        }
      }
  }
}

// Writes root/images/sNNN.ppm + root/masks/sNNN.pgm.
inline std::vector<std::string> write_dataset(const std::filesystem::path& root,
                                              int count, int size,
                                              std::uint64_t seed) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "masks");
  ducknet::Rng rng(seed);
  std::vector<std::string> ids;
  for (int i = 0; i < count; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "s%03d", i);
    ducknet::ImageU8 image, mask;
    make_ellipse_sample(image, mask, size, rng);
    ducknet::write_image(root / "images" / (std::string(name) + ".ppm"), image);
    ducknet::write_image(root / "masks" / (std::string(name) + ".pgm"), mask);
    ids.push_back(name);
  }
  return ids;
}

inline std::filesystem::path fresh_dir(const std::string& tag) {
  const auto dir =
      std::filesystem::temp_directory_path() / ("ducknet_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
