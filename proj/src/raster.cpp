#include "dexforge/raster.hpp"

#include "dexforge/simulator.hpp"

#include <algorithm>
#include <cmath>

namespace dexforge::sim {

namespace {

struct Capsule {
  Vec2 a, b;
  double radius;
};

struct Prepared {
  std::vector<std::vector<Vec2>> polys;  // world polygons per body (empty for circles)
  std::vector<Capsule> capsules;
};

Prepared prepare(const Scene& scene) {
  Prepared p;
  p.polys.resize(scene.bodies.size());
  for (size_t i = 0; i < scene.bodies.size(); ++i)
    if (std::holds_alternative<Polygon>(scene.bodies[i].shape)) p.polys[i] = world_vertices(scene.bodies[i]);
  for (const auto& f : scene.fingers) {
    const auto joints = hand::joint_positions(f.chain, f.state.q);
    for (size_t l = 0; l + 1 < joints.size(); ++l)
      p.capsules.push_back({joints[l], joints[l + 1], f.chain.link_radius});
  }
  return p;
}

bool inside_body(const Scene& scene, const Prepared& prep, size_t i, const Vec2& point) {
  const Body& b = scene.bodies[i];
  if (const auto* c = std::get_if<Circle>(&b.shape))
    return (point - b.pose.position).squaredNorm() <= c->radius * c->radius;
  const auto& poly = prep.polys[i];
  for (size_t k = 0; k < poly.size(); ++k) {
    const Vec2 e = poly[(k + 1) % poly.size()] - poly[k];
    if (cross(e, point - poly[k]) < 0.0) return false;
  }
  return true;
}

float shade(const Scene& scene, const Prepared& prep, const Vec2& point) {
  for (const auto& c : prep.capsules) {
    const Vec2 e = c.b - c.a;
    const double s = std::clamp((point - c.a).dot(e) / e.squaredNorm(), 0.0, 1.0);
    if ((point - (c.a + s * e)).squaredNorm() <= c.radius * c.radius) return kFingerLink;
  }
  float value = kBackground;
  for (size_t i = 0; i < scene.bodies.size(); ++i) {
    if (!inside_body(scene, prep, i, point)) continue;
    if (!scene.bodies[i].is_static) return kDynamicBody;
    value = kStaticBody;
  }
  return value;
}

void render_row(const Scene& scene, const Prepared& prep, const Camera& cam, Image& img, int row) {
  const double py = cam.y_max - (row + 0.5) * (cam.y_max - cam.y_min) / img.height;
  for (int col = 0; col < img.width; ++col) {
    const double px = cam.x_min + (col + 0.5) * (cam.x_max - cam.x_min) / img.width;
    img.pixels[static_cast<size_t>(row) * img.width + col] = shade(scene, prep, {px, py});
  }
}

Image blank(int width, int height) {
  if (width < 8 || height < 8) throw ContractViolation("render_raster: image must be at least 8x8");
  return Image{width, height, std::vector<float>(static_cast<size_t>(width) * height, kBackground)};
}

}  // namespace

Image render_raster(const Scene& scene, const Camera& camera, int width, int height) {
  Image img = blank(width, height);
  const Prepared prep = prepare(scene);
  for (int row = 0; row < height; ++row) render_row(scene, prep, camera, img, row);
  return img;
}

Image render_raster_parallel(const Scene& scene, const Camera& camera, int width, int height) {
  Image img = blank(width, height);
  const Prepared prep = prepare(scene);
#pragma omp parallel for schedule(static)
  for (int row = 0; row < height; ++row) render_row(scene, prep, camera, img, row);
  return img;
}

ByteImage quantize(const Image& image) {
  ByteImage out{image.width, image.height, std::vector<std::uint8_t>(image.pixels.size())};
  for (size_t i = 0; i < image.pixels.size(); ++i)
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.pixels[i], 0.0f, 1.0f) * 255.0f));
  return out;
}

std::vector<double> downsample(const ByteImage& image, int width, int height) {
  if (width <= 0 || height <= 0 || image.width % width != 0 || image.height % height != 0)
    throw ContractViolation("downsample: target must evenly divide the image");
  const int bx = image.width / width, by = image.height / height;
  std::vector<double> out(static_cast<size_t>(width) * height, 0.0);
  const double norm = 1.0 / (255.0 * bx * by);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      int sum = 0;
      for (int y = 0; y < by; ++y)
        for (int x = 0; x < bx; ++x)
          sum += image.pixels[static_cast<size_t>(r * by + y) * image.width + c * bx + x];
      out[static_cast<size_t>(r) * width + c] = sum * norm;
    }
  return out;
}

}  // namespace dexforge::sim
