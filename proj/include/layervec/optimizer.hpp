#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "layervec/adam.hpp"
#include "layervec/geometry.hpp"
#include "layervec/layering.hpp"
#include "layervec/masks.hpp"
#include "layervec/raster.hpp"

namespace layervec {

/// Weights and overlap-render constants of the Stage I structure loss.
struct StructureLossConfig {
  double w_mse = 1.0;
  double w_overlap = 1e-8;
  double overlap_opacity = 0.5;         // gray fill opacity used for the transparency render
  double transparency_threshold = 0.4;  // θ
  std::uint64_t seed = 0;               // pair-colour palette shuffle
};

enum class ColorFit { dominant, mse };

const char* to_string(ColorFit fit);
ColorFit color_fit_from_string(const std::string& s);

struct OptimizerConfig {
  RenderConfig render;
  StructureLossConfig structure;
  AdamHyper adam;
  double lr_points = 1.0;
  double lr_colors = 0.01;
  DPTolerance tolerance;
  double diff_threshold = 0.1;
  std::size_t min_region_area = 16;
  int diff_opening_radius = 2;  // square structuring element applied to the thresholded diff
  int cleanup_every = 50;
  std::size_t cleanup_min_area = 10;
  double contribution_tol = 1e-5;
  int mse_color_iters = 100;
  int divergence_window = 50;
  double divergence_factor = 10.0;
};

/// Path budget: structure paths first (at most ceil(N/2)), the rest filled by
/// visual blocks of 8, 8, 16, 32, 64, 128, ... truncated to what remains.
struct BudgetPlan {
  int total = 128;
  int stage1_iters = 500;
  int stage2_iters = 500;
  int iters_per_block = 100;

  int structure_cap() const { return (total + 1) / 2; }
  std::vector<int> visual_blocks(int structure_used) const;
  /// Iterations after each block; the last block takes the remainder.
  std::vector<int> block_iterations(std::size_t blocks) const;
};

struct LossRecord {
  int iter = 0;
  int stage = 1;
  double mse = 0.0;
  double overlap = 0.0;
  double fidelity = 0.0;
  double total = 0.0;
};

struct LossLog {
  std::vector<LossRecord> rows;
  /// Columns iter,loss_mse,loss_overlap,loss_fidelity,loss_total at full precision.
  void write_csv(const std::filesystem::path& path) const;
};

/// One structure path per admitted mask: trace → Douglas–Peucker → cubic
/// skeleton. Masks are admitted most simplified level first, then by area,
/// until `cap` paths exist. Masks whose simplified outline is degenerate are
/// skipped and reported in `warnings`. Paths are ordered by layer.
Scene init_structure_paths(const LayerStack& ls, const MaskSet& ms, int width, int height, DPTolerance tol,
                           std::optional<std::size_t> cap = std::nullopt,
                           std::vector<std::string>* warnings = nullptr);

/// Fills each layer's paths with distinct colours from a seeded shuffle of a
/// 64-colour palette (pairwise RGB distance >= 0.25).
void assign_pair_colors(Scene& scene, std::uint64_t seed);

struct LayerTarget {
  int layer = 0;
  Image image;  // masks in their pair colours on black
};

/// Renders each layer's source masks opaquely with the colour of the path
/// built from them.
std::vector<LayerTarget> make_layer_targets(const Scene& scene, const MaskSet& ms);

struct StructureLoss {
  double mse = 0.0;
  double overlap = 0.0;
  double total = 0.0;
  ParamGradients grads;
};

/// w1·Σ_j ||target_j − render_j||² + w2·Σ_j Σ_p ReLU(θ − α_j(p)), where
/// α_j(p) = Π_i (1 − a·cov_i(p)) over the paths of layer j.
StructureLoss structure_loss(const Scene& scene, const std::vector<LayerTarget>& targets,
                             const StructureLossConfig& cfg, const RenderConfig& rcfg);

/// Overlap term alone for one group of coverage fields, with its adjoint on
/// each field (dcov laid out like field.cov).
double overlap_penalty(const std::vector<const CoverageField*>& fields, int width, int height,
                       double opacity, double threshold, std::vector<std::vector<double>>* dcov);

/// Stage I: Adam on the control points of unfrozen paths; fills untouched.
Scene run_stage1(Scene scene, const std::vector<LayerTarget>& targets, const OptimizerConfig& cfg, int iters,
                 LossLog* log = nullptr);

/// Assigns fills (alpha 1) to structure paths and freezes them. Paths with
/// no covered pixels are removed and reported in `warnings`.
Scene fit_colors(Scene scene, const Image& target, ColorFit strategy, const OptimizerConfig& cfg,
                 std::vector<std::string>* warnings = nullptr);

/// Spawns up to `block` visual paths from the largest render-vs-target
/// difference regions, as a new front layer. Returns how many were added.
std::size_t add_visual_paths(Scene& scene, const Image& target, int block, const OptimizerConfig& cfg);

/// Removes unfrozen paths that are too small or change the mean squared
/// error by less than contribution_tol. Returns how many were removed.
std::size_t cleanup(Scene& scene, const Image& target, const OptimizerConfig& cfg);

/// Stage II: visual blocks, fidelity optimisation of unfrozen paths, periodic cleanup.
Scene run_stage2(Scene scene, const Image& target, const BudgetPlan& plan, const OptimizerConfig& cfg,
                 LossLog* log = nullptr);

/// Σ over pixels and channels of (render − target)².
double fidelity_loss(const Image& rendered, const Image& target);

}  // namespace layervec
