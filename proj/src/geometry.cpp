#include "layervec/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "layervec/error.hpp"

namespace layervec {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double point_segment_distance(Point p, Point a, Point b) {
  Point ab = b - a;
  double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + ab * t);
}

double signed_area(const Polyline& p) {
  double s = 0.0;
  const auto& v = p.points;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point& a = v[i];
    const Point& b = v[(i + 1) % v.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

// ---------------------------------------------------------------------------
// Contour tracing

namespace {

struct Step {
  int dx;
  int dy;
  bool operator==(const Step&) const = default;
};

Step left_of(Step d) { return {d.dy, -d.dx}; }
Step right_of(Step d) { return {-d.dy, d.dx}; }

}  // namespace

Polyline trace_boundary(const BinaryMask& m) {
  auto regions = connected_components(m);
  if (regions.empty()) throw Error(ErrorKind::empty_mask, "trace_boundary: mask '" + m.id() + "' is empty");
  const DiffRegion& comp = regions.front();
  const int w = m.width();
  const int h = m.height();
  std::vector<std::uint8_t> on(static_cast<std::size_t>(w) * h, 0);
  for (std::size_t p : comp.pixels) on[p] = 1;
  auto filled = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < w && y < h && on[static_cast<std::size_t>(y) * w + x] != 0;
  };

  // Pixel ahead of vertex (vx,vy) on the given side of travel direction d.
  auto ahead = [&](int vx, int vy, Step d, Step side) {
    // centre = v + (d + side)/2; floor of that names the pixel.
    int px = vx + static_cast<int>(std::floor(0.5 * (d.dx + side.dx)));
    int py = vy + static_cast<int>(std::floor(0.5 * (d.dy + side.dy)));
    return filled(px, py);
  };

  const int sx = static_cast<int>(comp.pixels.front() % w);
  const int sy = static_cast<int>(comp.pixels.front() / w);
  const Step start_dir{0, 1};

  Polyline out;
  out.closed = true;
  out.points.push_back({static_cast<double>(sx), static_cast<double>(sy)});
  int vx = sx, vy = sy;
  Step d = start_dir;
  // Bounded by the number of pixel edges; guards against a logic slip.
  const std::size_t max_steps = 4 * comp.area + 8;
  for (std::size_t step = 0; step < max_steps; ++step) {
    vx += d.dx;
    vy += d.dy;
    Step next;
    if (ahead(vx, vy, d, right_of(d))) {
      next = right_of(d);
    } else if (ahead(vx, vy, d, left_of(d))) {
      next = d;
    } else {
      next = left_of(d);
    }
    if (vx == sx && vy == sy && next == start_dir) return out;
    if (!(next == d)) out.points.push_back({static_cast<double>(vx), static_cast<double>(vy)});
    d = next;
  }
  throw Error(ErrorKind::invalid_input, "trace_boundary: contour did not close");
}

// ---------------------------------------------------------------------------
// Douglas–Peucker

namespace {

// Marks kept vertices of the open chain idx[0..n-1] (indices into pts).
void simplify_chain(const std::vector<Point>& pts, const std::vector<std::size_t>& idx, double eps,
                    std::vector<std::uint8_t>& keep) {
  if (idx.size() < 2) return;
  keep[idx.front()] = 1;
  keep[idx.back()] = 1;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, idx.size() - 1}};
  while (!stack.empty()) {
    auto [first, last] = stack.back();
    stack.pop_back();
    if (last <= first + 1) continue;
    double dmax = -1.0;
    std::size_t imax = first;
    for (std::size_t i = first + 1; i < last; ++i) {
      double d = point_segment_distance(pts[idx[i]], pts[idx[first]], pts[idx[last]]);
      if (d > dmax) {
        dmax = d;
        imax = i;
      }
    }
    if (dmax > eps) {
      keep[idx[imax]] = 1;
      stack.emplace_back(first, imax);
      stack.emplace_back(imax, last);
    }
  }
}

}  // namespace

Polyline douglas_peucker(const Polyline& p, DPTolerance tol) {
  if (tol.epsilon < 0.0) throw Error(ErrorKind::invalid_input, "Douglas-Peucker epsilon must be >= 0");
  const auto& pts = p.points;
  const std::size_t n = pts.size();
  if (tol.epsilon == 0.0 || n < 3) return p;

  std::vector<std::uint8_t> keep(n, 0);
  if (!p.closed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    simplify_chain(pts, idx, tol.epsilon, keep);
  } else {
    std::size_t a = 0, b = 1;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double d = distance(pts[i], pts[j]);
        if (d > best) {
          best = d;
          a = i;
          b = j;
        }
      }
    }
    std::vector<std::size_t> forward, backward;
    for (std::size_t i = a; i <= b; ++i) forward.push_back(i);
    for (std::size_t i = b; i != a; i = (i + 1) % n) backward.push_back(i);
    backward.push_back(a);
    simplify_chain(pts, forward, tol.epsilon, keep);
    simplify_chain(pts, backward, tol.epsilon, keep);
  }

  Polyline out;
  out.closed = p.closed;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) out.points.push_back(pts[i]);
  }
  return out;
}

BezierSkeleton polyline_to_bezier(const Polyline& p) {
  const auto& v = p.points;
  if (v.size() < 3) throw Error(ErrorKind::degenerate_shape, "polyline_to_bezier needs at least 3 vertices");
  BezierSkeleton s;
  s.points.reserve(3 * v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    Point a = v[i];
    Point b = v[(i + 1) % v.size()];
    Point step = (b - a) * (1.0 / 3.0);
    s.points.push_back(a);
    s.points.push_back(a + step);
    s.points.push_back(a + (b - a) * (2.0 / 3.0));
  }
  return s;
}

double jaccard(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_dims(b)) throw Error(ErrorKind::shape, "jaccard: mask dimensions differ");
  std::size_t inter = 0, uni = 0;
  const auto& ab = a.bits();
  const auto& bb = b.bits();
  for (std::size_t i = 0; i < ab.size(); ++i) {
    inter += static_cast<std::size_t>(ab[i] & bb[i]);
    uni += static_cast<std::size_t>(ab[i] | bb[i]);
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double overlap_fraction(const BinaryMask& path_pixels, const BinaryMask& mask) {
  if (!path_pixels.same_dims(mask)) throw Error(ErrorKind::shape, "overlap_fraction: mask dimensions differ");
  std::size_t area = path_pixels.area();
  if (area == 0) return 0.0;
  return static_cast<double>(shared_pixels(path_pixels, mask)) / static_cast<double>(area);
}

BinaryMask fill_polygon(const Polyline& p, int width, int height) {
  BinaryMask m(width, height);
  const auto& v = p.points;
  if (v.size() < 3) return m;
  std::vector<double> xs;
  for (int y = 0; y < height; ++y) {
    double cy = y + 0.5;
    xs.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      Point a = v[i];
      Point b = v[(i + 1) % v.size()];
      if ((a.y <= cy) != (b.y <= cy)) xs.push_back(a.x + (cy - a.y) / (b.y - a.y) * (b.x - a.x));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      int x0 = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      int x1 = std::min(width - 1, static_cast<int>(std::floor(xs[k + 1] - 0.5)));
      for (int x = x0; x <= x1; ++x) m.set(x, y);
    }
  }
  return m;
}

}  // namespace layervec
