// Synthetic inputs shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "layervec/image.hpp"
#include "layervec/masks.hpp"
#include "layervec/raster.hpp"

namespace fixtures {

using layervec::BinaryMask;
using layervec::Image;

inline void paint(Image& img, double r, double g, double b, auto&& inside) {
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!inside(x + 0.5, y + 0.5)) continue;
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  }
}

inline auto ellipse(double cx, double cy, double rx, double ry) {
  return [=](double x, double y) {
    const double u = (x - cx) / rx, v = (y - cy) / ry;
    return u * u + v * v <= 1.0;
  };
}

inline auto rect(double x0, double y0, double x1, double y1) {
  return [=](double x, double y) { return x > x0 && x < x1 && y > y0 && y < y1; };
}

/// 128×128 flat-colour cartoon with five regions: sky background, a green
/// box, an orange body and two dark eyes (≈530 px each) on the body.
inline Image cartoon() {
  Image img(128, 128, 3);
  paint(img, 0.85, 0.92, 1.0, [](double, double) { return true; });
  paint(img, 0.95, 0.6, 0.2, ellipse(64, 80, 40, 32));
  paint(img, 0.3, 0.7, 0.35, rect(20, 12, 60, 44));
  paint(img, 0.1, 0.1, 0.4, ellipse(48, 78, 13, 13));
  paint(img, 0.5, 0.05, 0.1, ellipse(82, 78, 13, 13));
  // Round through 8 bits so PNG round trips are exact.
  for (auto& v : img.data()) v = std::round(v * 255.0) / 255.0;
  return img;
}

/// Mask size that keeps the builtin segmenter from seeing the eyes, so Stage II
/// has real work to do in the end-to-end run.
constexpr std::size_t kCartoonMinArea = 600;

inline BinaryMask mask_of(int w, int h, auto&& inside, int level, std::string id) {
  BinaryMask m(w, h, level, std::move(id));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) m.set(x, y, inside(x + 0.5, y + 0.5));
  }
  return m;
}

/// Three nested masks on a 128×128 canvas: a square, a disc inside it and a
/// small square inside the disc.
inline layervec::MaskSet nested_masks() {
  layervec::MaskSet ms;
  ms.masks.push_back(mask_of(128, 128, rect(16, 16, 112, 112), 0, "outer"));
  ms.masks.push_back(mask_of(128, 128, ellipse(64, 64, 34, 34), 0, "middle"));
  ms.masks.push_back(mask_of(128, 128, rect(52, 52, 76, 76), 0, "inner"));
  return ms;
}

inline layervec::MaskSet single_square() {
  layervec::MaskSet ms;
  ms.masks.push_back(mask_of(128, 128, rect(32, 40, 96, 100), 0, "square"));
  return ms;
}

/// Target image for two abutting squares of different colours on white,
/// and their (disjoint) masks.
inline Image two_squares_image() {
  Image img(64, 64, 3, 1.0);
  paint(img, 0.8, 0.2, 0.2, rect(8, 16, 32, 48));
  paint(img, 0.2, 0.3, 0.8, rect(32, 16, 56, 48));
  for (auto& v : img.data()) v = std::round(v * 255.0) / 255.0;
  return img;
}

inline layervec::MaskSet two_squares_masks() {
  layervec::MaskSet ms;
  ms.masks.push_back(mask_of(64, 64, rect(8, 16, 32, 48), 0, "left"));
  ms.masks.push_back(mask_of(64, 64, rect(32, 16, 56, 48), 0, "right"));
  return ms;
}

/// Masks across two levels: level 0 holds fine parts (a face and an eye),
/// level 2 holds a coarse silhouette that contains both.
inline Image nested_levels_image() {
  Image img(96, 96, 3, 1.0);
  paint(img, 0.2, 0.5, 0.9, rect(10, 10, 86, 86));
  paint(img, 0.9, 0.8, 0.3, ellipse(48, 48, 26, 26));
  paint(img, 0.1, 0.1, 0.1, ellipse(48, 44, 8, 8));
  for (auto& v : img.data()) v = std::round(v * 255.0) / 255.0;
  return img;
}

inline layervec::MaskSet nested_levels_masks() {
  layervec::MaskSet ms;
  ms.masks.push_back(mask_of(96, 96, ellipse(48, 48, 26, 26), 0, "L0_face"));
  ms.masks.push_back(mask_of(96, 96, ellipse(48, 44, 8, 8), 0, "L0_eye"));
  ms.masks.push_back(mask_of(96, 96, rect(10, 10, 86, 86), 2, "L2_body"));
  ms.masks.push_back(mask_of(96, 96, [](double, double) { return true; }, 2, "L2_canvas"));
  return ms;
}

/// Random rectangles and discs on a small canvas, spread over 1–3 levels.
inline layervec::MaskSet random_mask_stack(std::mt19937_64& rng, int w = 32, int h = 32) {
  std::uniform_int_distribution<int> count(2, 9), level(0, 2), shape(0, 1);
  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h), ur(2.0, w / 3.0);
  layervec::MaskSet ms;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    BinaryMask m;
    const double cx = ux(rng), cy = uy(rng), r1 = ur(rng), r2 = ur(rng);
    const std::string id = "m" + std::to_string(i);
    if (shape(rng) == 0) {
      m = mask_of(w, h, rect(cx - r1, cy - r2, cx + r1, cy + r2), level(rng), id);
    } else {
      m = mask_of(w, h, ellipse(cx, cy, r1, r1), level(rng), id);
    }
    if (m.area() == 0) continue;
    ms.masks.push_back(std::move(m));
  }
  return ms;
}

/// Closed polygonal path of a rectangle with straight cubic segments.
inline layervec::BezierPath rect_path(double x0, double y0, double x1, double y1, layervec::Rgba fill,
                                      int layer = 0) {
  layervec::BezierPath p;
  const layervec::Point c[4] = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  for (int k = 0; k < 4; ++k) {
    const auto a = c[k], b = c[(k + 1) % 4];
    p.points.push_back(a);
    p.points.push_back(a + (b - a) * (1.0 / 3.0));
    p.points.push_back(a + (b - a) * (2.0 / 3.0));
  }
  p.fill = fill;
  p.layer = layer;
  return p;
}

/// Approximate circle with four cubic arcs.
inline layervec::BezierPath circle_path(double cx, double cy, double r, layervec::Rgba fill, int layer = 0) {
  constexpr double k = 0.5522847498;
  layervec::BezierPath p;
  p.points = {{cx + r, cy},     {cx + r, cy + k * r}, {cx + k * r, cy + r}, {cx, cy + r},
              {cx - k * r, cy + r}, {cx - r, cy + k * r}, {cx - r, cy},     {cx - r, cy - k * r},
              {cx - k * r, cy - r}, {cx, cy - r},     {cx + k * r, cy - r}, {cx + r, cy - k * r}};
  p.fill = fill;
  p.layer = layer;
  return p;
}

/// Random scene of jittered circles with random translucent fills.
inline layervec::Scene random_scene(std::mt19937_64& rng, int w, int h, int paths) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  layervec::Scene scene;
  scene.width = w;
  scene.height = h;
  scene.background = {u(rng), u(rng), u(rng)};
  for (int i = 0; i < paths; ++i) {
    const double r = 4.0 + u(rng) * w / 4.0;
    auto p = circle_path(r + u(rng) * (w - 2 * r), r + u(rng) * (h - 2 * r), r,
                         {0.05 + 0.9 * u(rng), 0.05 + 0.9 * u(rng), 0.05 + 0.9 * u(rng), 0.3 + 0.65 * u(rng)}, i / 2);
    for (auto& q : p.points) q = q + layervec::Point{(u(rng) - 0.5) * 3.0, (u(rng) - 0.5) * 3.0};
    scene.paths.push_back(p);
  }
  return scene;
}

struct GradCheck {
  std::size_t checked = 0;
  std::size_t agreed = 0;
  double fraction() const { return checked ? double(agreed) / double(checked) : 1.0; }
};

/// Compares render_with_grad against central differences (step h) of the
/// scalar loss Σ adjoint·render over every control-point coordinate and fill
/// channel with |FD| > floor.
inline GradCheck gradient_check(const layervec::Scene& scene, const Image& adjoint, const layervec::RenderConfig& cfg,
                                double h = 1e-3, double rel_tol = 1e-2, double floor = 1e-6) {
  auto loss = [&](const layervec::Scene& s) {
    const Image img = layervec::render(s, cfg);
    double v = 0.0;
    for (std::size_t i = 0; i < img.data().size(); ++i) v += img.data()[i] * adjoint.data()[i];
    return v;
  };
  const auto g = layervec::render_with_grad(scene, cfg, adjoint);
  GradCheck out;
  auto check = [&](double analytic, auto&& poke) {
    layervec::Scene plus = scene, minus = scene;
    poke(plus, h);
    poke(minus, -h);
    const double fd = (loss(plus) - loss(minus)) / (2 * h);
    if (std::abs(fd) <= floor) return;
    ++out.checked;
    if (std::abs(analytic - fd) <= rel_tol * std::abs(fd)) ++out.agreed;
  };
  for (std::size_t i = 0; i < scene.paths.size(); ++i) {
    for (std::size_t k = 0; k < scene.paths[i].points.size(); ++k) {
      check(g.paths[i].points[k].x, [&](layervec::Scene& s, double d) { s.paths[i].points[k].x += d; });
      check(g.paths[i].points[k].y, [&](layervec::Scene& s, double d) { s.paths[i].points[k].y += d; });
    }
    check(g.paths[i].fill.r, [&](layervec::Scene& s, double d) { s.paths[i].fill.r += d; });
    check(g.paths[i].fill.a, [&](layervec::Scene& s, double d) { s.paths[i].fill.a += d; });
  }
  return out;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("layervec_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
