#include "layervec/raster.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "layervec/error.hpp"

namespace layervec {

const char* to_string(PathKind kind) { return kind == PathKind::structure ? "structure" : "visual"; }

PathKind path_kind_from_string(const std::string& s) {
  if (s == "structure") return PathKind::structure;
  if (s == "visual") return PathKind::visual;
  throw Error(ErrorKind::invalid_input, "unknown path kind '" + s + "'");
}

BezierPath make_path(const BezierSkeleton& skeleton, Rgba fill, int layer, PathKind kind) {
  BezierPath p;
  p.points = skeleton.points;
  p.fill = fill;
  p.layer = layer;
  p.kind = kind;
  return p;
}

namespace {

bool unit_range(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

void Scene::validate() const {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::invalid_scene, "canvas dimensions must be positive");
  if (!unit_range(background.r) || !unit_range(background.g) || !unit_range(background.b))
    throw Error(ErrorKind::invalid_scene, "background colour outside [0,1]");
  const double xlim = 4.0 * width;
  const double ylim = 4.0 * height;
  int prev_layer = 0;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& p = paths[i];
    const std::string where = "path " + std::to_string(i);
    if (p.points.size() % 3 != 0 || p.segment_count() < 3)
      throw Error(ErrorKind::invalid_scene, where + ": needs at least 3 closed cubic segments");
    if (!unit_range(p.fill.r) || !unit_range(p.fill.g) || !unit_range(p.fill.b) || !unit_range(p.fill.a))
      throw Error(ErrorKind::invalid_scene, where + ": fill outside [0,1]");
    if (p.layer < 0) throw Error(ErrorKind::invalid_scene, where + ": negative layer");
    if (i > 0 && p.layer < prev_layer) throw Error(ErrorKind::invalid_scene, where + ": layers out of order");
    prev_layer = p.layer;
    for (const auto& q : p.points) {
      if (!std::isfinite(q.x) || !std::isfinite(q.y) || std::abs(q.x) > xlim || std::abs(q.y) > ylim)
        throw Error(ErrorKind::invalid_scene, where + ": control point out of bounds");
    }
  }
}

// ---------------------------------------------------------------------------

void for_each_tile(int rows, int threads, const std::function<void(int, int, int)>& fn) {
  const int tiles = (rows + kTileRows - 1) / kTileRows;
  auto run = [&](int t) { fn(t, t * kTileRows, std::min(rows, (t + 1) * kTileRows)); };
  if (threads <= 1 || tiles <= 1) {
    for (int t = 0; t < tiles; ++t) run(t);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int n = std::min(threads, tiles);
  pool.reserve(n);
  for (int i = 0; i < n; ++i) {
    pool.emplace_back([&] {
      for (int t = next++; t < tiles; t = next++) run(t);
    });
  }
  for (auto& th : pool) th.join();
}

FlatPath flatten(const BezierPath& path, double tolerance) {
  if (tolerance <= 0.0) throw Error(ErrorKind::invalid_input, "flatten tolerance must be positive");
  FlatPath flat;
  const int segs = path.segment_count();
  for (int k = 0; k < segs; ++k) {
    Point p0 = path.control(k, 0), p1 = path.control(k, 1), p2 = path.control(k, 2), p3 = path.control(k, 3);
    Point d1 = p0 - p1 * 2.0 + p2;
    Point d2 = p1 - p2 * 2.0 + p3;
    double m = std::max(std::hypot(d1.x, d1.y), std::hypot(d2.x, d2.y));
    // Max deviation of the chord approximation is 0.75·m / n².
    int n = static_cast<int>(std::ceil(std::sqrt(0.75 * m / tolerance)));
    n = std::clamp(n, 1, 128);
    for (int i = 0; i < n; ++i) {
      double t = static_cast<double>(i) / n;
      double u = 1.0 - t;
      std::array<double, 4> w{u * u * u, 3.0 * t * u * u, 3.0 * t * t * u, t * t * t};
      flat.vertices.push_back(p0 * w[0] + p1 * w[1] + p2 * w[2] + p3 * w[3]);
      flat.segment.push_back(k);
      flat.weights.push_back(w);
    }
  }
  return flat;
}

CoverageField compute_coverage(const BezierPath& path, int width, int height, const RenderConfig& cfg) {
  if (cfg.softness <= 0.0) throw Error(ErrorKind::invalid_input, "softness must be positive");
  CoverageField f;
  f.flat = flatten(path, cfg.flatten_tolerance);
  const auto& v = f.flat.vertices;
  const std::size_t nv = v.size();
  if (nv < 2) return f;

  const double sigma = cfg.softness;
  const double band = cfg.cutoff * sigma;
  double minx = v[0].x, maxx = v[0].x, miny = v[0].y, maxy = v[0].y;
  for (const auto& p : v) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }
  int x0 = std::max(0, static_cast<int>(std::floor(minx - band)));
  int y0 = std::max(0, static_cast<int>(std::floor(miny - band)));
  int x1 = std::min(width, static_cast<int>(std::ceil(maxx + band)) + 1);
  int y1 = std::min(height, static_cast<int>(std::ceil(maxy + band)) + 1);
  if (x1 <= x0 || y1 <= y0) return f;
  f.x0 = x0;
  f.y0 = y0;
  f.w = x1 - x0;
  f.h = y1 - y0;
  const std::size_t npix = static_cast<std::size_t>(f.w) * f.h;
  f.cov.assign(npix, 0.0);
  f.dcov_dq.assign(npix, Point{});
  f.edge.assign(npix, -1);
  f.t.assign(npix, 0.0);

  for_each_tile(f.h, cfg.threads, [&](int, int r0, int r1) {
    const int ty0 = y0 + r0;
    const int ty1 = y0 + r1;
    const std::size_t base = static_cast<std::size_t>(r0) * f.w;
    const std::size_t count = static_cast<std::size_t>(r1 - r0) * f.w;
    std::vector<double> d2(count, band * band);
    std::vector<int> winding(count, 0);

    // Winding by signed crossings left of each pixel centre.
    std::vector<std::pair<double, int>> xs;
    for (int y = ty0; y < ty1; ++y) {
      const double cy = y + 0.5;
      xs.clear();
      for (std::size_t e = 0; e < nv; ++e) {
        Point a = v[e], b = v[(e + 1) % nv];
        if ((a.y <= cy) != (b.y <= cy)) {
          double x = a.x + (cy - a.y) / (b.y - a.y) * (b.x - a.x);
          xs.emplace_back(x, b.y > a.y ? 1 : -1);
        }
      }
      std::sort(xs.begin(), xs.end());
      std::size_t k = 0;
      int wn = 0;
      int* row = winding.data() + static_cast<std::size_t>(y - ty0) * f.w;
      for (int x = x0; x < x1; ++x) {
        const double cx = x + 0.5;
        while (k < xs.size() && xs[k].first < cx) wn += xs[k++].second;
        row[x - x0] = wn;
      }
    }

    // Nearest edge within the band.
    for (std::size_t e = 0; e < nv; ++e) {
      Point a = v[e], b = v[(e + 1) % nv];
      Point ab = b - a;
      double len2 = dot(ab, ab);
      int ex0 = std::max(x0, static_cast<int>(std::floor(std::min(a.x, b.x) - band - 0.5)));
      int ex1 = std::min(x1, static_cast<int>(std::ceil(std::max(a.x, b.x) + band + 0.5)));
      int ey0 = std::max(ty0, static_cast<int>(std::floor(std::min(a.y, b.y) - band - 0.5)));
      int ey1 = std::min(ty1, static_cast<int>(std::ceil(std::max(a.y, b.y) + band + 0.5)));
      for (int y = ey0; y < ey1; ++y) {
        const double cy = y + 0.5;
        const std::size_t rowoff = static_cast<std::size_t>(y - y0) * f.w;
        for (int x = ex0; x < ex1; ++x) {
          const double cx = x + 0.5;
          double t = len2 > 0.0 ? std::clamp(((cx - a.x) * ab.x + (cy - a.y) * ab.y) / len2, 0.0, 1.0) : 0.0;
          double qx = a.x + ab.x * t - cx;
          double qy = a.y + ab.y * t - cy;
          double dd = qx * qx + qy * qy;
          std::size_t local = rowoff + (x - x0) - base;
          if (dd < d2[local]) {
            d2[local] = dd;
            f.edge[base + local] = static_cast<int>(e);
            f.t[base + local] = t;
          }
        }
      }
    }

    for (std::size_t local = 0; local < count; ++local) {
      const std::size_t i = base + local;
      const bool inside = winding[local] != 0;
      if (f.edge[i] < 0) {
        f.cov[i] = inside ? 1.0 : 0.0;
        continue;
      }
      const double d = std::sqrt(d2[local]);
      const double sd = inside ? d : -d;
      const double c = 1.0 / (1.0 + std::exp(-sd / sigma));
      f.cov[i] = c;
      if (d > 0.0) {
        const int x = x0 + static_cast<int>(i % f.w);
        const int y = y0 + static_cast<int>(i / f.w);
        const int e = f.edge[i];
        Point a = v[e], b = v[(e + 1) % nv];
        Point q = a + (b - a) * f.t[i];
        Point dir{(q.x - (x + 0.5)) / d, (q.y - (y + 0.5)) / d};
        const double s = (inside ? 1.0 : -1.0) * c * (1.0 - c) / sigma;
        f.dcov_dq[i] = dir * s;
      } else {
        f.edge[i] = -1;
      }
    }
  });
  return f;
}

std::vector<Point> coverage_backward(const CoverageField& field, const BezierPath& path,
                                     const std::vector<double>& dcov, const RenderConfig& cfg) {
  std::vector<Point> grads(path.points.size());
  const std::size_t nv = field.flat.vertices.size();
  if (field.w == 0 || nv < 2) return grads;
  if (dcov.size() != field.cov.size()) throw Error(ErrorKind::shape, "coverage adjoint has the wrong size");

  const int tiles = (field.h + kTileRows - 1) / kTileRows;
  std::vector<std::vector<Point>> partial(tiles);
  for_each_tile(field.h, cfg.threads, [&](int tile, int r0, int r1) {
    auto& gv = partial[tile];
    gv.assign(nv, Point{});
    for (std::size_t i = static_cast<std::size_t>(r0) * field.w; i < static_cast<std::size_t>(r1) * field.w; ++i) {
      const int e = field.edge[i];
      if (e < 0 || dcov[i] == 0.0) continue;
      Point gq = field.dcov_dq[i] * dcov[i];
      const double t = field.t[i];
      gv[e] += gq * (1.0 - t);
      gv[(e + 1) % nv] += gq * t;
    }
  });
  std::vector<Point> gv(nv);
  for (const auto& part : partial) {
    for (std::size_t i = 0; i < nv; ++i) gv[i] += part[i];
  }
  const std::size_t np = path.points.size();
  for (std::size_t i = 0; i < nv; ++i) {
    const int k = field.flat.segment[i];
    const auto& w = field.flat.weights[i];
    for (int j = 0; j < 4; ++j) grads[(3 * k + j) % np] += gv[i] * w[j];
  }
  return grads;
}

std::vector<CoverageField> compute_coverages(const Scene& scene, const RenderConfig& cfg) {
  std::vector<CoverageField> fields;
  fields.reserve(scene.paths.size());
  for (const auto& p : scene.paths) fields.push_back(compute_coverage(p, scene.width, scene.height, cfg));
  return fields;
}

Image composite(const Scene& scene, const std::vector<CoverageField>& fields,
                const std::vector<std::uint8_t>* enabled) {
  Image out(scene.width, scene.height, 3);
  auto& d = out.data();
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      double r = scene.background.r, g = scene.background.g, b = scene.background.b;
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (enabled && !(*enabled)[i]) continue;
        const double c = fields[i].at(x, y);
        if (c == 0.0) continue;
        const Rgba& fill = scene.paths[i].fill;
        const double a = fill.a * c;
        r = fill.r * a + r * (1.0 - a);
        g = fill.g * a + g * (1.0 - a);
        b = fill.b * a + b * (1.0 - a);
      }
      const std::size_t o = (static_cast<std::size_t>(y) * scene.width + x) * 3;
      d[o] = std::clamp(r, 0.0, 1.0);
      d[o + 1] = std::clamp(g, 0.0, 1.0);
      d[o + 2] = std::clamp(b, 0.0, 1.0);
    }
  }
  return out;
}

Image render(const Scene& scene, const RenderConfig& cfg) {
  scene.validate();
  return composite(scene, compute_coverages(scene, cfg));
}

ParamGradients composite_backward(const Scene& scene, const std::vector<CoverageField>& fields,
                                  const Image& loss_grad, const RenderConfig& cfg,
                                  const std::vector<std::uint8_t>* enabled) {
  if (loss_grad.width() != scene.width || loss_grad.height() != scene.height || loss_grad.channels() != 3)
    throw Error(ErrorKind::shape, "loss adjoint must match the canvas with 3 channels");
  const std::size_t np = scene.paths.size();
  ParamGradients out;
  out.paths.resize(np);
  for (std::size_t i = 0; i < np; ++i) out.paths[i].points.assign(scene.paths[i].points.size(), Point{});

  std::vector<std::vector<double>> dcov(np);
  auto on = [&](std::size_t i) { return !enabled || (*enabled)[i] != 0; };
  for (std::size_t i = 0; i < np; ++i) {
    if (on(i)) dcov[i].assign(fields[i].cov.size(), 0.0);
  }

  const int tiles = (scene.height + kTileRows - 1) / kTileRows;
  std::vector<std::vector<Rgba>> color_partial(tiles);
  const auto& adj = loss_grad.data();

  for_each_tile(scene.height, cfg.threads, [&](int tile, int r0, int r1) {
    auto& cg = color_partial[tile];
    cg.assign(np, Rgba{0.0, 0.0, 0.0, 0.0});
    std::vector<std::size_t> active;
    std::vector<double> alpha, cov;
    std::vector<std::array<double, 3>> before;
    for (int y = r0; y < r1; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        active.clear();
        alpha.clear();
        cov.clear();
        before.clear();
        std::array<double, 3> c{scene.background.r, scene.background.g, scene.background.b};
        for (std::size_t i = 0; i < np; ++i) {
          if (!on(i)) continue;
          const double cv = fields[i].at(x, y);
          if (cv == 0.0) continue;
          const Rgba& f = scene.paths[i].fill;
          const double a = f.a * cv;
          active.push_back(i);
          alpha.push_back(a);
          cov.push_back(cv);
          before.push_back(c);
          c = {f.r * a + c[0] * (1.0 - a), f.g * a + c[1] * (1.0 - a), f.b * a + c[2] * (1.0 - a)};
        }
        const std::size_t o = (static_cast<std::size_t>(y) * scene.width + x) * 3;
        std::array<double, 3> g{adj[o], adj[o + 1], adj[o + 2]};
        for (std::size_t k = active.size(); k-- > 0;) {
          const std::size_t i = active[k];
          const Rgba& f = scene.paths[i].fill;
          const double a = alpha[k];
          const auto& cb = before[k];
          const double da = g[0] * (f.r - cb[0]) + g[1] * (f.g - cb[1]) + g[2] * (f.b - cb[2]);
          Rgba& pg = cg[i];
          pg.r += g[0] * a;
          pg.g += g[1] * a;
          pg.b += g[2] * a;
          pg.a += da * cov[k];
          const auto& fi = fields[i];
          dcov[i][static_cast<std::size_t>(y - fi.y0) * fi.w + (x - fi.x0)] = da * f.a;
          g = {g[0] * (1.0 - a), g[1] * (1.0 - a), g[2] * (1.0 - a)};
        }
      }
    }
  });

  for (std::size_t i = 0; i < np; ++i) {
    if (scene.paths[i].frozen || !on(i)) continue;
    Rgba acc{0.0, 0.0, 0.0, 0.0};
    for (const auto& part : color_partial) {
      acc.r += part[i].r;
      acc.g += part[i].g;
      acc.b += part[i].b;
      acc.a += part[i].a;
    }
    out.paths[i].fill = acc;
    out.paths[i].points = coverage_backward(fields[i], scene.paths[i], dcov[i], cfg);
  }
  return out;
}

ParamGradients render_with_grad(const Scene& scene, const RenderConfig& cfg, const Image& loss_grad) {
  scene.validate();
  return composite_backward(scene, compute_coverages(scene, cfg), loss_grad, cfg);
}

BinaryMask path_coverage_mask(const BezierPath& path, int width, int height, const RenderConfig& cfg) {
  BinaryMask m(width, height);
  if (path.points.size() < 3) return m;
  CoverageField f = compute_coverage(path, width, height, cfg);
  for (int y = 0; y < f.h; ++y) {
    for (int x = 0; x < f.w; ++x) {
      if (f.cov[static_cast<std::size_t>(y) * f.w + x] >= 0.5) m.set(f.x0 + x, f.y0 + y);
    }
  }
  return m;
}

}  // namespace layervec
