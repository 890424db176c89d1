#include "layervec/pipeline.hpp"

#include "layervec/error.hpp"
#include "layervec/metrics.hpp"

namespace layervec {

namespace {

Image rgb_of(const Image& img) {
  if (img.channels() == 3) return img;
  Image out(img.width(), img.height(), 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, std::min(c, img.channels() - 1));
    }
  }
  return out;
}

}  // namespace

MaskSet segment_levels(const Image& target, const SimplificationSequence* sequence, std::size_t min_area) {
  MaskSet set;
  set.source = MaskSource::builtin;
  const std::size_t levels = sequence ? sequence->size() : 1;
  for (std::size_t k = 0; k < levels; ++k) {
    const Image& img = k == 0 ? target : sequence->levels[k];
    if (img.width() != target.width() || img.height() != target.height())
      throw Error(ErrorKind::shape, "sequence level " + std::to_string(k) + " does not match the target");
    auto masks = builtin_segment(img, min_area, static_cast<int>(k));
    for (auto& m : masks) set.masks.push_back(std::move(m));
  }
  if (set.masks.empty()) throw Error(ErrorKind::empty_mask, "segmentation produced no masks");
  return set;
}

PipelineResult run_pipeline(const Image& target_in, const MaskSet& masks_in, const PipelineConfig& cfg) {
  if (cfg.paths < 1) throw Error(ErrorKind::invalid_input, "path budget must be at least 1");
  const Image target = rgb_of(target_in);
  PipelineResult res;

  MaskSet masks = masks_in;
  if (!cfg.use_sequence) {
    std::erase_if(masks.masks, [](const BinaryMask& m) { return m.level() != 0; });
  }
  for (const auto& m : masks.masks) {
    if (m.width() != target.width() || m.height() != target.height())
      throw Error(ErrorKind::shape, "mask '" + m.id() + "' does not match the target");
  }
  masks.validate();
  res.masks = dedup_across_levels(masks, cfg.dedup_threshold);
  if (res.masks.masks.empty()) throw Error(ErrorKind::empty_mask, "no masks left to vectorize");
  res.layers = build_layers(res.masks, cfg.overlap_slack);

  BudgetPlan plan;
  plan.total = cfg.paths;
  plan.stage1_iters = cfg.stage1_iters;
  plan.stage2_iters = cfg.stage2_iters;

  OptimizerConfig ocfg = cfg.optimizer;
  ocfg.structure.seed = cfg.seed;
  if (!cfg.overlap_loss) ocfg.structure.w_overlap = 0.0;

  Scene scene = init_structure_paths(res.layers, res.masks, target.width(), target.height(), ocfg.tolerance,
                                     static_cast<std::size_t>(plan.structure_cap()), &res.warnings);
  assign_pair_colors(scene, cfg.seed);
  if (cfg.structure_opt && !scene.paths.empty()) {
    const auto targets = make_layer_targets(scene, res.masks);
    scene = run_stage1(std::move(scene), targets, ocfg, plan.stage1_iters, &res.log);
  }
  scene.background = {1.0, 1.0, 1.0};
  scene = fit_colors(std::move(scene), target, cfg.color_fit, ocfg, &res.warnings);
  res.structure_scene = scene;
  res.structure_paths = scene.paths.size();
  res.structure_mse = mse(render(scene, ocfg.render), target);

  res.final_scene = run_stage2(std::move(scene), target, plan, ocfg, &res.log);
  res.final_mse = mse(render(res.final_scene, ocfg.render), target);
  return res;
}

}  // namespace layervec
