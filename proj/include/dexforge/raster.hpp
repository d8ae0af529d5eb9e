#pragma once

#include "dexforge/scene.hpp"

#include <cstdint>
#include <vector>

namespace dexforge::sim {

/// Grayscale image, row-major, row 0 at the top of the view.
struct Image {
  int width{0};
  int height{0};
  std::vector<float> pixels;

  float at(int row, int col) const { return pixels[static_cast<size_t>(row) * width + col]; }
};

/// 8-bit image as stored in demonstrations.
struct ByteImage {
  int width{0};
  int height{0};
  std::vector<std::uint8_t> pixels;

  bool operator==(const ByteImage&) const = default;
};

inline constexpr float kBackground = 0.0f;
inline constexpr float kStaticBody = 0.4f;
inline constexpr float kDynamicBody = 0.8f;
inline constexpr float kFingerLink = 1.0f;

/// Samples each pixel centre; fingers draw over dynamic over static bodies.
Image render_raster(const Scene& scene, const Camera& camera, int width, int height);

/// Renders through the scene's own camera.
inline Image render_raster(const Scene& scene, int width, int height) {
  return render_raster(scene, scene.camera, width, height);
}

/// Row-parallel version of render_raster; bit-identical output.
Image render_raster_parallel(const Scene& scene, const Camera& camera, int width, int height);

ByteImage quantize(const Image& image);

/// Block-average downsample of an 8-bit image to values in [0, 1].
std::vector<double> downsample(const ByteImage& image, int width, int height);

}  // namespace dexforge::sim
