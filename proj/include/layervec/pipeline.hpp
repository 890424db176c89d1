#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "layervec/layering.hpp"
#include "layervec/masks.hpp"
#include "layervec/optimizer.hpp"
#include "layervec/simplify.hpp"

namespace layervec {

struct PipelineConfig {
  int paths = 128;
  std::uint64_t seed = 0;
  bool use_sequence = true;      // false: only level-0 masks take part
  bool overlap_loss = true;      // false: overlap weight set to 0
  bool structure_opt = true;     // false: Stage I optimisation skipped
  ColorFit color_fit = ColorFit::dominant;
  std::size_t overlap_slack = 0;
  double dedup_threshold = 0.90;
  std::size_t segment_min_area = 64;
  int stage1_iters = 500;
  int stage2_iters = 500;
  OptimizerConfig optimizer;
};

struct PipelineResult {
  MaskSet masks;              // masks that took part, after dedup
  LayerStack layers;
  Scene structure_scene;      // after Stage I and colour fitting, white background
  Scene final_scene;
  LossLog log;
  std::vector<std::string> warnings;
  std::size_t structure_paths = 0;
  double structure_mse = 0.0;
  double final_mse = 0.0;
};

/// Builds masks with the fallback segmenter: one pass per sequence level
/// (level 0 being `target`), ids "L{level}_m{i}".
MaskSet segment_levels(const Image& target, const SimplificationSequence* sequence, std::size_t min_area);

/// Full vectorization: dedup → layering → structure init → Stage I → colour
/// fit → Stage II.
PipelineResult run_pipeline(const Image& target, const MaskSet& masks, const PipelineConfig& cfg);

}  // namespace layervec
