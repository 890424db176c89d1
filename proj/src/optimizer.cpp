#include "layervec/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "layervec/error.hpp"

namespace layervec {

const char* to_string(ColorFit fit) { return fit == ColorFit::dominant ? "dominant" : "mse"; }

ColorFit color_fit_from_string(const std::string& s) {
  if (s == "dominant") return ColorFit::dominant;
  if (s == "mse") return ColorFit::mse;
  throw Error(ErrorKind::invalid_input, "unknown colour-fit strategy '" + s + "'");
}

std::vector<int> BudgetPlan::visual_blocks(int structure_used) const {
  std::vector<int> blocks;
  int remaining = total - structure_used;
  int size = 8;
  bool second_eight = true;
  while (remaining > 0) {
    const int b = std::min(size, remaining);
    blocks.push_back(b);
    remaining -= b;
    if (size == 8 && second_eight) {
      second_eight = false;
    } else {
      size *= 2;
    }
  }
  return blocks;
}

std::vector<int> BudgetPlan::block_iterations(std::size_t blocks) const {
  std::vector<int> iters;
  if (blocks == 0) return iters;
  const int per = std::min(iters_per_block, stage2_iters / static_cast<int>(blocks));
  for (std::size_t i = 0; i + 1 < blocks; ++i) iters.push_back(per);
  iters.push_back(stage2_iters - per * static_cast<int>(blocks - 1));
  return iters;
}

void LossLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << "iter,loss_mse,loss_overlap,loss_fidelity,loss_total\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", r.iter, r.mse, r.overlap, r.fidelity, r.total);
    out << buf;
  }
}

double fidelity_loss(const Image& rendered, const Image& target) {
  if (!rendered.same_shape(target)) throw Error(ErrorKind::shape, "fidelity loss: image shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < rendered.data().size(); ++i) {
    const double d = rendered.data()[i] - target.data()[i];
    s += d * d;
  }
  return s;
}

namespace {

Image rgb_only(const Image& img) {
  if (img.channels() == 3) return img;
  Image out(img.width(), img.height(), 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, std::min(c, img.channels() - 1));
    }
  }
  return out;
}

// Flat view of the optimised parameters: control points of every selected
// path, followed by its RGBA fill when colours are optimised.
struct ParamPack {
  struct Binding {
    std::size_t path;
    std::size_t offset;
    bool colors;
  };
  std::vector<Binding> bindings;
  std::size_t size = 0;

  template <typename Pred>
  static ParamPack build(const Scene& scene, Pred select, bool colors) {
    ParamPack pack;
    for (std::size_t i = 0; i < scene.paths.size(); ++i) {
      if (!select(scene.paths[i])) continue;
      pack.bindings.push_back({i, pack.size, colors});
      pack.size += 2 * scene.paths[i].points.size() + (colors ? 4 : 0);
    }
    return pack;
  }

  AdamState make_state(const Scene& scene, const OptimizerConfig& cfg) const {
    AdamState st;
    st.hyper = cfg.adam;
    for (const auto& b : bindings) {
      const auto& p = scene.paths[b.path];
      for (std::size_t k = 0; k < p.points.size(); ++k) {
        st.add_group(1, cfg.lr_points, -1.0 * scene.width, 2.0 * scene.width);
        st.add_group(1, cfg.lr_points, -1.0 * scene.height, 2.0 * scene.height);
      }
      if (b.colors) st.add_group(4, cfg.lr_colors, 0.0, 1.0);
    }
    return st;
  }

  std::vector<double> pack(const Scene& scene) const {
    std::vector<double> v(size);
    for (const auto& b : bindings) {
      const auto& p = scene.paths[b.path];
      std::size_t o = b.offset;
      for (const auto& q : p.points) {
        v[o++] = q.x;
        v[o++] = q.y;
      }
      if (b.colors) {
        v[o++] = p.fill.r;
        v[o++] = p.fill.g;
        v[o++] = p.fill.b;
        v[o++] = p.fill.a;
      }
    }
    return v;
  }

  void unpack(const std::vector<double>& v, Scene& scene) const {
    for (const auto& b : bindings) {
      auto& p = scene.paths[b.path];
      std::size_t o = b.offset;
      for (auto& q : p.points) {
        q.x = v[o++];
        q.y = v[o++];
      }
      if (b.colors) {
        p.fill.r = v[o++];
        p.fill.g = v[o++];
        p.fill.b = v[o++];
        p.fill.a = v[o++];
      }
    }
  }

  std::vector<double> gradients(const ParamGradients& g) const {
    std::vector<double> v(size);
    for (const auto& b : bindings) {
      const auto& pg = g.paths[b.path];
      std::size_t o = b.offset;
      for (const auto& q : pg.points) {
        v[o++] = q.x;
        v[o++] = q.y;
      }
      if (b.colors) {
        v[o++] = pg.fill.r;
        v[o++] = pg.fill.g;
        v[o++] = pg.fill.b;
        v[o++] = pg.fill.a;
      }
    }
    return v;
  }
};

ParamGradients zero_gradients(const Scene& scene) {
  ParamGradients g;
  g.paths.resize(scene.paths.size());
  for (std::size_t i = 0; i < scene.paths.size(); ++i) g.paths[i].points.assign(scene.paths[i].points.size(), Point{});
  return g;
}

void accumulate(ParamGradients& into, const ParamGradients& from) {
  for (std::size_t i = 0; i < into.paths.size(); ++i) {
    auto& a = into.paths[i];
    const auto& b = from.paths[i];
    for (std::size_t k = 0; k < a.points.size(); ++k) a.points[k] += b.points[k];
    a.fill.r += b.fill.r;
    a.fill.g += b.fill.g;
    a.fill.b += b.fill.b;
    a.fill.a += b.fill.a;
  }
}

class DivergenceGuard {
 public:
  DivergenceGuard(const OptimizerConfig& cfg, const char* stage) : cfg_(cfg), stage_(stage) {}

  void observe(double loss) {
    if (!have_initial_) {
      initial_ = loss;
      have_initial_ = true;
      return;
    }
    if (!std::isfinite(loss) || loss > cfg_.divergence_factor * initial_) {
      if (++streak_ >= cfg_.divergence_window)
        throw Error(ErrorKind::divergence, std::string(stage_) + " loss stayed above " +
                                               std::to_string(cfg_.divergence_factor) + "x its initial value for " +
                                               std::to_string(streak_) + " iterations");
    } else {
      streak_ = 0;
    }
  }

 private:
  const OptimizerConfig& cfg_;
  const char* stage_;
  double initial_ = 0.0;
  bool have_initial_ = false;
  int streak_ = 0;
};

std::vector<int> scene_layers(const Scene& scene) {
  std::set<int> s;
  for (const auto& p : scene.paths) s.insert(p.layer);
  return {s.begin(), s.end()};
}

BinaryMask opened(const BinaryMask& m, int radius) {
  if (radius <= 0) return m;
  const int w = m.width(), h = m.height();
  auto pass = [&](const BinaryMask& in, bool erode) {
    BinaryMask out(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        bool v = erode;
        for (int dy = -radius; dy <= radius && v == erode; ++dy) {
          for (int dx = -radius; dx <= radius; ++dx) {
            const int nx = x + dx, ny = y + dy;
            const bool s = nx >= 0 && ny >= 0 && nx < w && ny < h && in.get(nx, ny);
            if (erode && !s) {
              v = false;
              break;
            }
            if (!erode && s) {
              v = true;
              break;
            }
          }
        }
        out.set(x, y, v);
      }
    }
    return out;
  };
  return pass(pass(m, true), false);
}

std::optional<BezierSkeleton> outline_from_mask(const BinaryMask& m, DPTolerance tol, bool relax) {
  Polyline contour = trace_boundary(m);
  for (double eps = tol.epsilon;; eps *= 0.5) {
    Polyline simple = douglas_peucker(contour, {eps});
    if (simple.points.size() >= 3) return polyline_to_bezier(simple);
    if (!relax || eps < 0.5) break;
  }
  return std::nullopt;
}

// Indices (ascending) of the unfrozen paths cleanup would delete.
std::vector<std::size_t> cleanup_indices(const Scene& scene, const Image& target, const OptimizerConfig& cfg) {
  const auto fields = compute_coverages(scene, cfg.render);
  std::vector<std::uint8_t> enabled(scene.paths.size(), 1);
  for (std::size_t i = 0; i < scene.paths.size(); ++i) {
    if (scene.paths[i].frozen) continue;
    std::size_t area = 0;
    for (double c : fields[i].cov) area += c >= 0.5 ? 1 : 0;
    if (area < cfg.cleanup_min_area) enabled[i] = 0;
  }
  const double denom = static_cast<double>(target.data().size());
  double base = fidelity_loss(composite(scene, fields, &enabled), target) / denom;
  for (std::size_t i = 0; i < scene.paths.size(); ++i) {
    if (scene.paths[i].frozen || !enabled[i]) continue;
    enabled[i] = 0;
    const double trial = fidelity_loss(composite(scene, fields, &enabled), target) / denom;
    if (std::abs(trial - base) < cfg.contribution_tol) {
      base = trial;
    } else {
      enabled[i] = 1;
    }
  }
  std::vector<std::size_t> removed;
  for (std::size_t i = 0; i < enabled.size(); ++i) {
    if (!enabled[i]) removed.push_back(i);
  }
  return removed;
}

void erase_paths(Scene& scene, const std::vector<std::size_t>& removed) {
  std::vector<BezierPath> kept;
  kept.reserve(scene.paths.size());
  std::size_t r = 0;
  for (std::size_t i = 0; i < scene.paths.size(); ++i) {
    if (r < removed.size() && removed[r] == i) {
      ++r;
      continue;
    }
    kept.push_back(std::move(scene.paths[i]));
  }
  scene.paths = std::move(kept);
}

// Moves Adam moments of surviving paths into a state built for the new pack.
AdamState remap_state(const AdamState& old, const ParamPack& old_pack, const ParamPack& new_pack,
                      const std::vector<std::size_t>& removed, const Scene& scene, const OptimizerConfig& cfg) {
  AdamState st = new_pack.make_state(scene, cfg);
  st.step = old.step;
  st.skipped = old.skipped;
  auto new_index = [&](std::size_t old_path) {
    return old_path - static_cast<std::size_t>(std::lower_bound(removed.begin(), removed.end(), old_path) -
                                                removed.begin());
  };
  std::map<std::size_t, std::size_t> offset_of;
  for (const auto& b : new_pack.bindings) offset_of[b.path] = b.offset;
  for (const auto& b : old_pack.bindings) {
    if (std::binary_search(removed.begin(), removed.end(), b.path)) continue;
    auto it = offset_of.find(new_index(b.path));
    if (it == offset_of.end()) continue;
    const std::size_t n = 2 * scene.paths[it->first].points.size() + (b.colors ? 4 : 0);
    for (std::size_t k = 0; k < n; ++k) {
      st.m[it->second + k] = old.m[b.offset + k];
      st.v[it->second + k] = old.v[b.offset + k];
    }
  }
  return st;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stage I

Scene init_structure_paths(const LayerStack& ls, const MaskSet& ms, int width, int height, DPTolerance tol,
                           std::optional<std::size_t> cap, std::vector<std::string>* warnings) {
  Scene scene;
  scene.width = width;
  scene.height = height;
  scene.background = {0.0, 0.0, 0.0};
  const auto order = processing_order(ms);
  std::vector<std::pair<std::size_t, BezierPath>> made;  // (processing rank, path)
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (cap && made.size() >= *cap) break;
    const auto& m = ms.masks[order[rank]];
    if (m.width() != width || m.height() != height)
      throw Error(ErrorKind::shape, "mask '" + m.id() + "' does not match the canvas");
    auto layer = ls.layer_of.find(m.id());
    if (layer == ls.layer_of.end()) throw Error(ErrorKind::invalid_input, "mask '" + m.id() + "' has no layer");
    auto skeleton = outline_from_mask(m, tol, false);
    if (!skeleton) {
      if (warnings) warnings->push_back("skipped mask '" + m.id() + "': simplified outline has < 3 vertices");
      continue;
    }
    BezierPath p = make_path(*skeleton, Rgba{0.5, 0.5, 0.5, 1.0}, layer->second, PathKind::structure);
    p.source_mask_id = m.id();
    made.emplace_back(rank, std::move(p));
  }
  std::stable_sort(made.begin(), made.end(), [](const auto& a, const auto& b) {
    if (a.second.layer != b.second.layer) return a.second.layer < b.second.layer;
    return a.first < b.first;
  });
  for (auto& [rank, p] : made) scene.paths.push_back(std::move(p));
  return scene;
}

void assign_pair_colors(Scene& scene, std::uint64_t seed) {
  // 4 levels per channel, spaced 0.8/3 > 0.25 apart.
  const double level[4] = {0.2, 0.2 + 0.8 / 3.0, 0.2 + 1.6 / 3.0, 1.0};
  std::vector<Rgba> palette;
  for (int r = 0; r < 4; ++r) {
    for (int g = 0; g < 4; ++g) {
      for (int b = 0; b < 4; ++b) palette.push_back({level[r], level[g], level[b], 1.0});
    }
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = palette.size() - 1; i > 0; --i) std::swap(palette[i], palette[rng() % (i + 1)]);
  std::map<int, std::size_t> used;
  for (auto& p : scene.paths) p.fill = palette[used[p.layer]++ % palette.size()];
}

std::vector<LayerTarget> make_layer_targets(const Scene& scene, const MaskSet& ms) {
  std::vector<LayerTarget> targets;
  for (int layer : scene_layers(scene)) {
    LayerTarget t{layer, Image(scene.width, scene.height, 3, 0.0)};
    for (const auto& p : scene.paths) {
      if (p.layer != layer || !p.source_mask_id) continue;
      const BinaryMask* m = ms.find(*p.source_mask_id);
      if (!m) throw Error(ErrorKind::invalid_input, "path refers to unknown mask '" + *p.source_mask_id + "'");
      for (int y = 0; y < scene.height; ++y) {
        for (int x = 0; x < scene.width; ++x) {
          if (!m->get(x, y)) continue;
          t.image.at(x, y, 0) = p.fill.r;
          t.image.at(x, y, 1) = p.fill.g;
          t.image.at(x, y, 2) = p.fill.b;
        }
      }
    }
    targets.push_back(std::move(t));
  }
  return targets;
}

double overlap_penalty(const std::vector<const CoverageField*>& fields, int width, int height, double opacity,
                       double threshold, std::vector<std::vector<double>>* dcov) {
  if (dcov) {
    dcov->resize(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) (*dcov)[i].assign(fields[i]->cov.size(), 0.0);
  }
  if (fields.empty()) return 0.0;
  int x0 = width, y0 = height, x1 = 0, y1 = 0;
  for (const auto* f : fields) {
    if (f->w == 0) continue;
    x0 = std::min(x0, f->x0);
    y0 = std::min(y0, f->y0);
    x1 = std::max(x1, f->x0 + f->w);
    y1 = std::max(y1, f->y0 + f->h);
  }
  double total = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      double alpha = 1.0;
      for (const auto* f : fields) alpha *= 1.0 - opacity * f->at(x, y);
      if (alpha >= threshold) continue;
      total += threshold - alpha;
      if (!dcov) continue;
      for (std::size_t i = 0; i < fields.size(); ++i) {
        const auto* f = fields[i];
        if (!f->contains(x, y)) continue;
        const double c = f->at(x, y);
        // d(θ − α)/d cov_i = a · Π_{k≠i} (1 − a·cov_k)
        (*dcov)[i][static_cast<std::size_t>(y - f->y0) * f->w + (x - f->x0)] = opacity * alpha / (1.0 - opacity * c);
      }
    }
  }
  return total;
}

StructureLoss structure_loss(const Scene& scene, const std::vector<LayerTarget>& targets,
                             const StructureLossConfig& cfg, const RenderConfig& rcfg) {
  scene.validate();
  StructureLoss out;
  out.grads = zero_gradients(scene);
  const auto fields = compute_coverages(scene, rcfg);
  Scene layer_scene = scene;
  layer_scene.background = {0.0, 0.0, 0.0};
  std::vector<std::uint8_t> enabled(scene.paths.size());

  for (const auto& target : targets) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < scene.paths.size(); ++i) {
      enabled[i] = scene.paths[i].layer == target.layer ? 1 : 0;
      if (enabled[i]) members.push_back(i);
    }
    if (members.empty()) continue;

    Image rendered = composite(layer_scene, fields, &enabled);
    if (!rendered.same_shape(target.image)) throw Error(ErrorKind::shape, "layer target does not match the canvas");
    Image adjoint(scene.width, scene.height, 3);
    double mse = 0.0;
    for (std::size_t k = 0; k < rendered.data().size(); ++k) {
      const double d = rendered.data()[k] - target.image.data()[k];
      mse += d * d;
      adjoint.data()[k] = 2.0 * cfg.w_mse * d;
    }
    out.mse += mse;
    if (cfg.w_mse != 0.0) accumulate(out.grads, composite_backward(layer_scene, fields, adjoint, rcfg, &enabled));

    std::vector<const CoverageField*> group;
    for (std::size_t i : members) group.push_back(&fields[i]);
    std::vector<std::vector<double>> dcov;
    out.overlap += overlap_penalty(group, scene.width, scene.height, cfg.overlap_opacity, cfg.transparency_threshold,
                                   cfg.w_overlap != 0.0 ? &dcov : nullptr);
    if (cfg.w_overlap != 0.0) {
      for (std::size_t k = 0; k < members.size(); ++k) {
        const std::size_t i = members[k];
        if (scene.paths[i].frozen) continue;
        for (auto& v : dcov[k]) v *= cfg.w_overlap;
        auto g = coverage_backward(fields[i], scene.paths[i], dcov[k], rcfg);
        for (std::size_t q = 0; q < g.size(); ++q) out.grads.paths[i].points[q] += g[q];
      }
    }
  }
  out.total = cfg.w_mse * out.mse + cfg.w_overlap * out.overlap;
  return out;
}

Scene run_stage1(Scene scene, const std::vector<LayerTarget>& targets, const OptimizerConfig& cfg, int iters,
                 LossLog* log) {
  const auto pack = ParamPack::build(scene, [](const BezierPath& p) { return !p.frozen; }, false);
  if (pack.size == 0 || iters <= 0) return scene;
  AdamState state = pack.make_state(scene, cfg);
  auto params = pack.pack(scene);
  DivergenceGuard guard(cfg, "stage I");
  const int first_iter = log && !log->rows.empty() ? log->rows.back().iter + 1 : 0;
  for (int it = 0; it < iters; ++it) {
    StructureLoss loss = structure_loss(scene, targets, cfg.structure, cfg.render);
    if (log) log->rows.push_back({first_iter + it, 1, loss.mse, loss.overlap, 0.0, loss.total});
    guard.observe(loss.total);
    const auto grads = pack.gradients(loss.grads);
    adam_step(state, params, grads);
    pack.unpack(params, scene);
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Colour fitting

Scene fit_colors(Scene scene, const Image& target_in, ColorFit strategy, const OptimizerConfig& cfg,
                 std::vector<std::string>* warnings) {
  const Image target = rgb_only(target_in);
  if (target.width() != scene.width || target.height() != scene.height)
    throw Error(ErrorKind::shape, "colour fitting: target does not match the canvas");
  auto fitted = [](const BezierPath& p) { return p.kind == PathKind::structure && !p.frozen; };

  const auto fields = compute_coverages(scene, cfg.render);
  const std::size_t np = scene.paths.size();
  struct Bin {
    std::size_t count = 0;
    double r = 0, g = 0, b = 0;
  };
  std::vector<std::map<int, Bin>> hist(np);
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      for (std::size_t i = np; i-- > 0;) {
        if (fields[i].at(x, y) < 0.5) continue;
        const double r = target.at(x, y, 0), g = target.at(x, y, 1), b = target.at(x, y, 2);
        auto q = [](double v) { return std::min(31, static_cast<int>(std::floor(v * 32.0))); };
        Bin& bin = hist[i][(q(r) << 10) | (q(g) << 5) | q(b)];
        ++bin.count;
        bin.r += r;
        bin.g += g;
        bin.b += b;
        break;
      }
    }
  }

  std::vector<std::size_t> removed;
  for (std::size_t i = 0; i < np; ++i) {
    auto& p = scene.paths[i];
    if (!fitted(p)) continue;
    if (!hist[i].empty()) {
      const Bin* best = nullptr;
      for (const auto& [key, bin] : hist[i]) {
        if (!best || bin.count > best->count) best = &bin;
      }
      p.fill = {best->r / best->count, best->g / best->count, best->b / best->count, 1.0};
      continue;
    }
    // Hidden everywhere: mean colour under its own coverage.
    double r = 0, g = 0, b = 0;
    std::size_t n = 0;
    const auto& f = fields[i];
    for (int y = 0; y < f.h; ++y) {
      for (int x = 0; x < f.w; ++x) {
        if (f.cov[static_cast<std::size_t>(y) * f.w + x] < 0.5) continue;
        r += target.at(f.x0 + x, f.y0 + y, 0);
        g += target.at(f.x0 + x, f.y0 + y, 1);
        b += target.at(f.x0 + x, f.y0 + y, 2);
        ++n;
      }
    }
    if (n == 0) {
      removed.push_back(i);
      if (warnings) warnings->push_back("removed path " + std::to_string(i) + ": it covers no pixels");
      continue;
    }
    p.fill = {r / n, g / n, b / n, 1.0};
  }
  erase_paths(scene, removed);

  if (strategy == ColorFit::mse && cfg.mse_color_iters > 0) {
    // RGB only; alpha stays 1.
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < scene.paths.size(); ++i) {
      if (fitted(scene.paths[i])) idx.push_back(i);
    }
    AdamState state;
    state.hyper = cfg.adam;
    state.add_group(3 * idx.size(), cfg.lr_colors, 0.0, 1.0);
    std::vector<double> params(3 * idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& f = scene.paths[idx[k]].fill;
      params[3 * k] = f.r;
      params[3 * k + 1] = f.g;
      params[3 * k + 2] = f.b;
    }
    const auto cached = compute_coverages(scene, cfg.render);
    for (int it = 0; it < cfg.mse_color_iters && !idx.empty(); ++it) {
      Image rendered = composite(scene, cached);
      Image adjoint(scene.width, scene.height, 3);
      for (std::size_t k = 0; k < adjoint.data().size(); ++k)
        adjoint.data()[k] = 2.0 * (rendered.data()[k] - target.data()[k]);
      ParamGradients g = composite_backward(scene, cached, adjoint, cfg.render);
      std::vector<double> grads(params.size());
      for (std::size_t k = 0; k < idx.size(); ++k) {
        grads[3 * k] = g.paths[idx[k]].fill.r;
        grads[3 * k + 1] = g.paths[idx[k]].fill.g;
        grads[3 * k + 2] = g.paths[idx[k]].fill.b;
      }
      adam_step(state, params, grads);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        auto& f = scene.paths[idx[k]].fill;
        f.r = params[3 * k];
        f.g = params[3 * k + 1];
        f.b = params[3 * k + 2];
      }
    }
  }

  for (auto& p : scene.paths) {
    if (p.kind == PathKind::structure) p.frozen = true;
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Stage II

std::size_t add_visual_paths(Scene& scene, const Image& target_in, int block, const OptimizerConfig& cfg) {
  if (block <= 0) return 0;
  const Image target = rgb_only(target_in);
  const Image diff = abs_diff(render(scene, cfg.render), target);
  BinaryMask hot(scene.width, scene.height);
  bool any = false;
  for (std::size_t p = 0; p < diff.pixel_count(); ++p) {
    if (diff.data()[p] >= cfg.diff_threshold) {
      hot.bits()[p] = 1;
      any = true;
    }
  }
  if (!any) return 0;
  hot = opened(hot, cfg.diff_opening_radius);

  int layer = 0;
  for (const auto& p : scene.paths) layer = std::max(layer, p.layer + 1);

  std::size_t added = 0;
  for (const auto& region : connected_components(hot)) {
    if (added >= static_cast<std::size_t>(block)) break;
    if (region.area < cfg.min_region_area) break;  // sorted by area
    const BinaryMask m = region_mask(region, scene.width, scene.height);
    auto skeleton = outline_from_mask(m, cfg.tolerance, true);
    if (!skeleton) continue;
    double r = 0, g = 0, b = 0;
    for (std::size_t p : region.pixels) {
      r += target.data()[3 * p];
      g += target.data()[3 * p + 1];
      b += target.data()[3 * p + 2];
    }
    const double n = static_cast<double>(region.area);
    scene.paths.push_back(make_path(*skeleton, Rgba{r / n, g / n, b / n, 1.0}, layer, PathKind::visual));
    ++added;
  }
  return added;
}

std::size_t cleanup(Scene& scene, const Image& target, const OptimizerConfig& cfg) {
  const auto removed = cleanup_indices(scene, rgb_only(target), cfg);
  erase_paths(scene, removed);
  return removed.size();
}

Scene run_stage2(Scene scene, const Image& target_in, const BudgetPlan& plan, const OptimizerConfig& cfg,
                 LossLog* log) {
  const Image target = rgb_only(target_in);
  if (target.width() != scene.width || target.height() != scene.height)
    throw Error(ErrorKind::shape, "stage II: target does not match the canvas");
  const int structure_used = static_cast<int>(scene.paths.size());
  const auto blocks = plan.visual_blocks(structure_used);
  const auto block_iters = plan.block_iterations(blocks.size());
  auto unfrozen = [](const BezierPath& p) { return !p.frozen; };
  int next_iter = log && !log->rows.empty() ? log->rows.back().iter + 1 : 0;
  DivergenceGuard guard(cfg, "stage II");

  auto optimise = [&](int iters) {
    ParamPack pack = ParamPack::build(scene, unfrozen, true);
    if (pack.size == 0) return;
    AdamState state = pack.make_state(scene, cfg);
    auto params = pack.pack(scene);
    for (int it = 0; it < iters; ++it) {
      const auto fields = compute_coverages(scene, cfg.render);
      Image rendered = composite(scene, fields);
      Image adjoint(scene.width, scene.height, 3);
      double loss = 0.0;
      for (std::size_t k = 0; k < adjoint.data().size(); ++k) {
        const double d = rendered.data()[k] - target.data()[k];
        loss += d * d;
        adjoint.data()[k] = 2.0 * d;
      }
      if (log) log->rows.push_back({next_iter, 2, 0.0, 0.0, loss, loss});
      ++next_iter;
      guard.observe(loss);
      const auto grads = pack.gradients(composite_backward(scene, fields, adjoint, cfg.render));
      adam_step(state, params, grads);
      pack.unpack(params, scene);

      if (cfg.cleanup_every > 0 && (it + 1) % cfg.cleanup_every == 0) {
        const auto removed = cleanup_indices(scene, target, cfg);
        if (!removed.empty()) {
          erase_paths(scene, removed);
          ParamPack next = ParamPack::build(scene, unfrozen, true);
          state = remap_state(state, pack, next, removed, scene, cfg);
          pack = std::move(next);
          params = pack.pack(scene);
          if (pack.size == 0) return;
        }
      }
    }
  };

  int spent = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Image diff = abs_diff(render(scene, cfg.render), target);
    const double max_diff = *std::max_element(diff.data().begin(), diff.data().end());
    if (max_diff < cfg.diff_threshold) break;
    if (add_visual_paths(scene, target, blocks[b], cfg) == 0) break;
    optimise(block_iters[b]);
    spent += block_iters[b];
  }
  const bool has_free = std::any_of(scene.paths.begin(), scene.paths.end(), unfrozen);
  if (spent > 0 && spent < plan.stage2_iters && has_free) optimise(plan.stage2_iters - spent);
  return scene;
}

}  // namespace layervec
