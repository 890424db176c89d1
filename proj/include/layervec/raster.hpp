#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "layervec/geometry.hpp"
#include "layervec/image.hpp"

namespace layervec {

struct Rgb {
  double r = 0.0, g = 0.0, b = 0.0;
  bool operator==(const Rgb&) const = default;
};

struct Rgba {
  double r = 0.0, g = 0.0, b = 0.0, a = 1.0;
  bool operator==(const Rgba&) const = default;
};

enum class PathKind { structure, visual };

const char* to_string(PathKind kind);
PathKind path_kind_from_string(const std::string& s);

/// Closed loop of cubic segments with a flat fill. Control points are stored
/// three per segment (start, c1, c2); segment k ends at the start of k+1 and
/// the last segment ends at points[0], so closure holds by construction.
struct BezierPath {
  std::vector<Point> points;
  Rgba fill;
  int layer = 0;
  bool frozen = false;
  PathKind kind = PathKind::structure;
  std::optional<std::string> source_mask_id;

  int segment_count() const { return static_cast<int>(points.size() / 3); }
  /// Control point j (0..3) of segment k.
  const Point& control(int k, int j) const { return points[(3 * k + j) % points.size()]; }

  bool operator==(const BezierPath&) const = default;
};

BezierPath make_path(const BezierSkeleton& skeleton, Rgba fill, int layer, PathKind kind);

struct Scene {
  int width = 0;
  int height = 0;
  Rgb background{1.0, 1.0, 1.0};
  std::vector<BezierPath> paths;  // back to front

  /// Throws invalid_scene on any structural violation.
  void validate() const;
  bool operator==(const Scene&) const = default;
};

struct RenderConfig {
  double softness = 1.0;            // logistic scale σ in pixels
  double flatten_tolerance = 0.1;   // pixels
  double cutoff = 12.0;             // distance band, in units of σ, with exact soft coverage
  int threads = 1;
};

/// Adaptive flattening of a path. Vertex i equals
/// sum_j weights[i][j] * control(segment[i], j), so derivatives w.r.t. the
/// flattened vertices map back to control points exactly.
struct FlatPath {
  std::vector<Point> vertices;
  std::vector<int> segment;
  std::vector<std::array<double, 4>> weights;
};

FlatPath flatten(const BezierPath& path, double tolerance);

/// Soft coverage of one path over its pixel window. Pixels outside the
/// window have coverage 0. Within the window, pixels farther than
/// cutoff·σ from every edge have coverage exactly 0 or 1 by winding.
struct CoverageField {
  int x0 = 0, y0 = 0, w = 0, h = 0;
  std::vector<double> cov;
  // d cov / d q, where q is the nearest boundary point, and the edge / edge
  // parameter of q. edge < 0 marks pixels without a gradient path.
  std::vector<Point> dcov_dq;
  std::vector<int> edge;
  std::vector<double> t;
  FlatPath flat;

  bool contains(int x, int y) const { return x >= x0 && y >= y0 && x < x0 + w && y < y0 + h; }
  double at(int x, int y) const {
    return contains(x, y) ? cov[static_cast<std::size_t>(y - y0) * w + (x - x0)] : 0.0;
  }
};

CoverageField compute_coverage(const BezierPath& path, int width, int height, const RenderConfig& cfg);

/// Pulls a per-pixel adjoint on coverage (laid out like field.cov) back to
/// the path's control points.
std::vector<Point> coverage_backward(const CoverageField& field, const BezierPath& path,
                                     const std::vector<double>& dcov, const RenderConfig& cfg);

std::vector<CoverageField> compute_coverages(const Scene& scene, const RenderConfig& cfg);

struct PathGradient {
  std::vector<Point> points;
  Rgba fill{0.0, 0.0, 0.0, 0.0};
};

struct ParamGradients {
  std::vector<PathGradient> paths;
};

/// Back-to-front alpha-over of all paths onto the background. RGB output.
Image render(const Scene& scene, const RenderConfig& cfg = {});
/// `enabled`, when given, selects the paths that take part (one flag per path).
Image composite(const Scene& scene, const std::vector<CoverageField>& fields,
                const std::vector<std::uint8_t>* enabled = nullptr);

/// Gradient of a scalar loss given its adjoint dL/dImage (RGB, same canvas).
/// Frozen paths report zero gradients.
ParamGradients render_with_grad(const Scene& scene, const RenderConfig& cfg, const Image& loss_grad);
ParamGradients composite_backward(const Scene& scene, const std::vector<CoverageField>& fields,
                                  const Image& loss_grad, const RenderConfig& cfg,
                                  const std::vector<std::uint8_t>* enabled = nullptr);

/// Pixels with coverage >= 0.5.
BinaryMask path_coverage_mask(const BezierPath& path, int width, int height, const RenderConfig& cfg = {});

/// Runs fn(tile, y_begin, y_end) over fixed 16-row tiles. Tile boundaries do
/// not depend on the thread count.
constexpr int kTileRows = 16;
void for_each_tile(int rows, int threads, const std::function<void(int, int, int)>& fn);

}  // namespace layervec
