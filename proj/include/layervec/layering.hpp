#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "layervec/masks.hpp"

namespace layervec {

/// Layer 0 is the backmost.
struct LayerStack {
  std::vector<std::vector<std::string>> layers;
  std::map<std::string, int> layer_of;

  std::size_t layer_count() const { return layers.size(); }
};

/// Places masks in processing order, each into the lowest layer where it
/// shares at most overlap_slack pixels with every mask already there.
LayerStack build_layers(const MaskSet& ms, std::size_t overlap_slack = 0);

struct LayerViolation {
  enum class Kind { overlap, not_minimal, missing, duplicate } kind;
  std::string mask_id;
  std::string other_id;  // overlapping mask, when applicable
  int layer = -1;
};

struct LayerReport {
  std::vector<LayerViolation> violations;
  std::size_t overlap_count() const;
  std::size_t minimality_count() const;
  bool clean() const { return violations.empty(); }
};

/// Independent check of within-layer disjointness, placement minimality and
/// membership (every mask exactly once).
LayerReport verify_layers(const LayerStack& ls, const MaskSet& ms, std::size_t overlap_slack = 0);

void save_layers_json(const LayerStack& ls, const std::filesystem::path& path);

}  // namespace layervec
