#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "../fixtures.hpp"
#include "layervec/error.hpp"
#include "layervec/optimizer.hpp"

using namespace layervec;

namespace {

CoverageField constant_field(int x0, int y0, int w, int h, double c) {
  CoverageField f;
  f.x0 = x0;
  f.y0 = y0;
  f.w = w;
  f.h = h;
  f.cov.assign(static_cast<std::size_t>(w) * h, c);
  return f;
}

Scene scene_from_masks(const MaskSet& ms, std::uint64_t seed) {
  const LayerStack ls = build_layers(ms);
  Scene s = init_structure_paths(ls, ms, ms.masks[0].width(), ms.masks[0].height(), {});
  assign_pair_colors(s, seed);
  return s;
}

}  // namespace

TEST_CASE("budget plan: structure cap, visual blocks and iteration split") {
  BudgetPlan p;
  p.total = 128;
  CHECK(p.structure_cap() == 64);
  CHECK(p.visual_blocks(64) == std::vector<int>{8, 8, 16, 32});
  CHECK(p.visual_blocks(10) == std::vector<int>{8, 8, 16, 32, 54});
  p.total = 16;
  CHECK(p.structure_cap() == 8);
  CHECK(p.visual_blocks(3) == std::vector<int>{8, 5});
  p.total = 15;
  CHECK(p.structure_cap() == 8);
  CHECK(p.visual_blocks(15).empty());
  CHECK(p.block_iterations(2) == std::vector<int>{100, 400});
  CHECK(p.block_iterations(5) == std::vector<int>{100, 100, 100, 100, 100});
  const auto seven = p.block_iterations(7);
  CHECK(seven.size() == 7);
  CHECK(seven.front() == 71);
  CHECK(seven.back() == 74);
}

TEST_CASE("overlap penalty: analytic constant-coverage oracle") {
  // Two fully covering 4×4 fields overlapping in a 2×4 strip.
  const auto a = constant_field(0, 0, 4, 4, 1.0), b = constant_field(2, 0, 4, 4, 1.0);
  std::vector<std::vector<double>> d;
  const double pen = overlap_penalty({&a, &b}, 8, 4, 0.5, 0.4, &d);
  // α = 0.25 on 8 shared pixels, 0.5 elsewhere.
  CHECK(pen == doctest::Approx(8 * 0.15).epsilon(1e-14));
  // d/dcov_a = a·Π_{k≠a}(1 − a·cov_k) = 0.5·0.5 on the shared strip.
  CHECK(d[0][2] == doctest::Approx(0.25));
  CHECK(d[0][0] == 0.0);

  // Finite differences on partial coverages.
  auto fa = constant_field(0, 0, 3, 3, 0.7), fb = constant_field(1, 1, 3, 3, 0.9);
  fa.cov[4] = 0.95;
  overlap_penalty({&fa, &fb}, 4, 4, 0.5, 0.4, &d);
  const double h = 1e-6;
  for (std::size_t i = 0; i < fa.cov.size(); ++i) {
    auto p = fa, m = fa;
    p.cov[i] += h;
    m.cov[i] -= h;
    const double fd = (overlap_penalty({&p, &fb}, 4, 4, 0.5, 0.4, nullptr) -
                       overlap_penalty({&m, &fb}, 4, 4, 0.5, 0.4, nullptr)) / (2 * h);
    CHECK(d[0][i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("overlap term is exactly zero for separated shapes") {
  Scene s;
  s.width = s.height = 64;
  s.paths.push_back(fixtures::circle_path(16, 32, 10, {1, 0, 0, 1}));
  s.paths.push_back(fixtures::circle_path(46, 32, 10, {0, 1, 0, 1}));
  MaskSet ms;
  std::vector<LayerTarget> targets = {{0, Image(64, 64, 3, 0.0)}};
  const auto loss = structure_loss(s, targets, {}, {});
  CHECK(loss.overlap == 0.0);
}

TEST_CASE("structure loss: totals, targets and gradients") {
  const MaskSet ms = fixtures::two_squares_masks();
  Scene s = scene_from_masks(ms, 3);
  REQUIRE(s.paths.size() == 2);
  const auto targets = make_layer_targets(s, ms);
  REQUIRE(targets.size() == 1);
  // Target pixels carry the pair colour of the path built from each mask.
  for (const auto& p : s.paths) {
    const BinaryMask* m = ms.find(*p.source_mask_id);
    const auto box = m->bbox();
    CHECK(targets[0].image.at(box.x0, box.y0, 0) == p.fill.r);
  }
  CHECK(targets[0].image.at(0, 0, 0) == 0.0);

  // Nudge both paths off the pixel grid so both terms are non-zero and no
  // pixel centre is equidistant from two edges (where the distance has a kink).
  for (auto& q : s.paths[0].points) q = q + Point{4.3, 1.45};
  for (auto& q : s.paths[1].points) q = q + Point{0.21, -0.13};
  StructureLossConfig cfg;
  const auto l = structure_loss(s, targets, cfg, {});
  CHECK(l.mse > 0);
  CHECK(l.overlap > 0);
  CHECK(l.total == 1.0 * l.mse + 1e-8 * l.overlap);

  // Finite differences of the total with both terms weighted to matter.
  cfg.w_overlap = 0.5;
  const auto g = structure_loss(s, targets, cfg, {});
  std::size_t checked = 0, agreed = 0;
  for (std::size_t i = 0; i < s.paths.size(); ++i)
    for (std::size_t k = 0; k < s.paths[i].points.size(); ++k)
      for (int axis = 0; axis < 2; ++axis) {
        Scene p = s, m = s;
        (axis ? p.paths[i].points[k].y : p.paths[i].points[k].x) += 1e-3;
        (axis ? m.paths[i].points[k].y : m.paths[i].points[k].x) -= 1e-3;
        const double fd = (structure_loss(p, targets, cfg, {}).total - structure_loss(m, targets, cfg, {}).total) / 2e-3;
        if (std::abs(fd) < 1e-6) continue;
        ++checked;
        const double an = axis ? g.grads.paths[i].points[k].y : g.grads.paths[i].points[k].x;
        if (std::abs(an - fd) <= 1e-2 * std::abs(fd)) ++agreed;
      }
  CHECK(checked > 10);
  CHECK(double(agreed) >= 0.95 * double(checked));
}

TEST_CASE("pair colours are distinct within a layer and seed-dependent") {
  Scene s;
  s.width = s.height = 32;
  for (int i = 0; i < 12; ++i) s.paths.push_back(fixtures::rect_path(1, 1, 5, 5, {0, 0, 0, 1}, i / 6));
  Scene a = s, b = s, c = s;
  assign_pair_colors(a, 1);
  assign_pair_colors(b, 1);
  assign_pair_colors(c, 2);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (std::size_t i = 0; i < a.paths.size(); ++i)
    for (std::size_t j = i + 1; j < a.paths.size(); ++j) {
      if (a.paths[i].layer != a.paths[j].layer) continue;
      const auto &p = a.paths[i].fill, &q = a.paths[j].fill;
      CHECK(std::sqrt((p.r - q.r) * (p.r - q.r) + (p.g - q.g) * (p.g - q.g) + (p.b - q.b) * (p.b - q.b)) >= 0.25);
    }
}

TEST_CASE("structure initialisation respects the cap and layer order") {
  const MaskSet ms = fixtures::nested_masks();
  const LayerStack ls = build_layers(ms);
  const Scene all = init_structure_paths(ls, ms, 128, 128, {});
  REQUIRE(all.paths.size() == 3);
  CHECK_NOTHROW(all.validate());
  CHECK(*all.paths[0].source_mask_id == "outer");
  CHECK(all.paths[2].layer == 2);
  for (const auto& p : all.paths) CHECK(p.kind == PathKind::structure);
  const Scene capped = init_structure_paths(ls, ms, 128, 128, {}, 2);
  CHECK(capped.paths.size() == 2);

  // A single-pixel mask simplifies to < 3 vertices and is skipped with a warning.
  MaskSet tiny = ms;
  tiny.masks.push_back(fixtures::mask_of(128, 128, fixtures::rect(2, 2, 3, 3), 0, "dot"));
  std::vector<std::string> warnings;
  const Scene t = init_structure_paths(build_layers(tiny), tiny, 128, 128, {}, std::nullopt, &warnings);
  CHECK(t.paths.size() == 3);
  CHECK(warnings.size() == 1);
}

TEST_CASE("dominant colour fitting takes the majority colour of visible pixels") {
  Image target(32, 32, 3, 1.0);
  fixtures::paint(target, 0.2, 0.4, 0.6, fixtures::rect(4, 4, 28, 20));
  fixtures::paint(target, 0.9, 0.1, 0.1, fixtures::rect(4, 20, 28, 28));
  Scene s;
  s.width = s.height = 32;
  s.paths.push_back(fixtures::rect_path(4, 4, 28, 28, {0.5, 0.5, 0.5, 1}));
  const Scene d = fit_colors(s, target, ColorFit::dominant, {});
  CHECK(d.paths[0].fill.r == doctest::Approx(0.2));
  CHECK(d.paths[0].fill.b == doctest::Approx(0.6));
  CHECK(d.paths[0].fill.a == 1.0);
  CHECK(d.paths[0].frozen);

  const Scene m = fit_colors(s, target, ColorFit::mse, {});
  const double dom = fidelity_loss(render(d), target), fit = fidelity_loss(render(m), target);
  CHECK(fit < dom);

  // A path that covers nothing is removed.
  Scene ghost = s;
  ghost.paths.push_back(fixtures::rect_path(-60, -60, -50, -50, {0, 0, 0, 1}));
  std::vector<std::string> warnings;
  CHECK(fit_colors(ghost, target, ColorFit::dominant, {}, &warnings).paths.size() == 1);
  CHECK(warnings.size() == 1);
}

TEST_CASE("visual paths spawn on the largest difference regions") {
  Image target(48, 48, 3, 1.0);
  fixtures::paint(target, 1, 0, 0, fixtures::rect(4, 4, 24, 24));
  fixtures::paint(target, 0, 0, 1, fixtures::rect(30, 30, 40, 40));
  fixtures::paint(target, 0, 1, 0, fixtures::rect(40, 2, 43, 5));  // 9 px: below the region floor
  Scene s;
  s.width = s.height = 48;
  s.paths.push_back(fixtures::rect_path(-10, -10, -5, -5, {0, 0, 0, 1}, 3));
  s.paths[0].frozen = true;
  OptimizerConfig cfg;
  CHECK(add_visual_paths(s, target, 1, cfg) == 1);
  REQUIRE(s.paths.size() == 2);
  CHECK(s.paths[1].kind == PathKind::visual);
  CHECK(s.paths[1].layer == 4);
  CHECK(s.paths[1].fill.r == doctest::Approx(1.0));
  CHECK(add_visual_paths(s, target, 8, cfg) == 1);  // only the blue square remains large enough
  CHECK(s.paths.back().fill.b == doctest::Approx(1.0));
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("cleanup removes tiny and redundant unfrozen paths only") {
  Image target(48, 48, 3, 1.0);
  fixtures::paint(target, 0, 0, 0, fixtures::rect(4, 4, 20, 20));
  Scene s;
  s.width = s.height = 48;
  s.paths.push_back(fixtures::rect_path(4, 4, 20, 20, {0, 0, 0, 1}));
  s.paths.push_back(fixtures::rect_path(40, 4, 42, 6, {0, 0, 0, 1}));     // 4 px
  s.paths.push_back(fixtures::rect_path(32, 32, 44, 44, {1, 1, 1, 1}));   // white on white, far from the rest
  Scene frozen = s;
  for (auto& p : frozen.paths) p.frozen = true;
  CHECK(cleanup(frozen, target, {}) == 0);
  CHECK(cleanup(s, target, {}) == 2);
  REQUIRE(s.paths.size() == 1);
  CHECK(s.paths[0].points[0] == Point{4, 4});
}

TEST_CASE("stage I fits a single square; the divergence guard aborts") {
  const MaskSet ms = fixtures::single_square();
  Scene s = scene_from_masks(ms, 0);
  const auto targets = make_layer_targets(s, ms);
  OptimizerConfig cfg;
  LossLog log;
  const Scene out = run_stage1(s, targets, cfg, 60, &log);
  CHECK(log.rows.size() == 60);
  CHECK(log.rows.back().mse <= log.rows.front().mse);
  CHECK(jaccard(path_coverage_mask(out.paths[0], 128, 128), ms.masks[0]) >= 0.95);

  cfg.divergence_factor = 1e-12;  // every loss counts as diverged
  cfg.divergence_window = 5;
  try {
    run_stage1(s, targets, cfg, 20);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::divergence);
  }
}

TEST_CASE("loss log csv") {
  const auto dir = fixtures::scratch_dir("losslog");
  LossLog log;
  log.rows.push_back({0, 1, 2.5, 3.0, 0.0, 2.5 + 3e-8});
  log.write_csv(dir / "loss.csv");
  std::ifstream in(dir / "loss.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "iter,loss_mse,loss_overlap,loss_fidelity,loss_total");
  std::stringstream ss(row);
  std::string cell;
  std::vector<double> v;
  while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
  REQUIRE(v.size() == 5);
  CHECK(v[4] == 2.5 + 3e-8);
}
