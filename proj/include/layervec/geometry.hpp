#pragma once

#include <vector>

#include "layervec/image.hpp"

namespace layervec {

struct Point {
  double x = 0.0;
  double y = 0.0;

  Point operator+(Point o) const { return {x + o.x, y + o.y}; }
  Point operator-(Point o) const { return {x - o.x, y - o.y}; }
  Point operator*(double s) const { return {x * s, y * s}; }
  Point& operator+=(Point o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  bool operator==(const Point&) const = default;
};

inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
double distance(Point a, Point b);
/// Euclidean distance from p to the segment [a,b].
double point_segment_distance(Point p, Point a, Point b);

struct Polyline {
  std::vector<Point> points;
  bool closed = false;
};

/// Shoelace area in image coordinates (y down). Negative for contours that run
/// counter-clockwise on screen.
double signed_area(const Polyline& p);

/// Douglas–Peucker tolerance in pixels.
struct DPTolerance {
  double epsilon = 5.0;
};

/// Closed contour along the pixel edges of the largest 8-connected component.
/// Vertices sit on pixel corners; the loop runs counter-clockwise on screen
/// (interior on the left) starting at the top-left corner of the first pixel
/// in raster order. Holes are ignored.
Polyline trace_boundary(const BinaryMask& m);

/// Vertices are a subsequence of the input; every dropped vertex lies within
/// epsilon of the simplified chain. Closed inputs are split at their two
/// mutually farthest vertices and each chain is simplified independently.
Polyline douglas_peucker(const Polyline& p, DPTolerance tol = {});

/// Control points of a closed cubic Bézier skeleton: three points per
/// segment (start, c1, c2); segment k ends at the start of segment k+1.
struct BezierSkeleton {
  std::vector<Point> points;
  int segment_count() const { return static_cast<int>(points.size() / 3); }
};

/// One straight cubic per polyline edge with interior controls at thirds.
BezierSkeleton polyline_to_bezier(const Polyline& p);

double jaccard(const BinaryMask& a, const BinaryMask& b);

/// |path ∩ mask| / |path|, 0 for an empty path.
double overlap_fraction(const BinaryMask& path_pixels, const BinaryMask& mask);

/// Even-odd fill of a closed polygon sampled at pixel centres.
BinaryMask fill_polygon(const Polyline& p, int width, int height);

}  // namespace layervec
