#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "geoformal/synth/scene.hpp"
#include "geoformal/tensor/tensor.hpp"

namespace geoformal::synth {

/// Grayscale image in [0, 1], row-major, cut into p x p patches.
struct Diagram {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t patch = 8;
  std::vector<double> pixels;

  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  std::size_t patch_count() const { return (height / patch) * (width / patch); }

  friend bool operator==(const Diagram&, const Diagram&) = default;
};

/// 1-pixel strokes for lines (between a line's extreme points) and circles,
/// 3x3 dots for points. A unit-square coordinate maps to round(x (W - 1)).
/// Throws std::invalid_argument when H or W is below 32.
Diagram rasterize(const SceneSpec& scene, std::size_t height, std::size_t width,
                  std::size_t patch = 8);

/// (N, p^2) patches in row-major patch order. Throws tensor::ShapeMismatch
/// when H or W is not a multiple of p.
tensor::Tensor patchify(const Diagram& d);
Diagram unpatchify(const tensor::Tensor& patches, std::size_t height, std::size_t width,
                   std::size_t patch);

/// Binary portable graymap (P5, maxval 255).
void write_pgm(const Diagram& d, const std::filesystem::path& path);
/// Throws DataError on a malformed file.
Diagram read_pgm(const std::filesystem::path& path, std::size_t patch = 8);

}  // namespace geoformal::synth
