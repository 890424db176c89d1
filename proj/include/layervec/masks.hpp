#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "layervec/image.hpp"

namespace layervec {

enum class MaskSource { imported, builtin };

struct MaskSet {
  std::vector<BinaryMask> masks;
  MaskSource source = MaskSource::imported;
  std::vector<std::string> warnings;

  const BinaryMask* find(const std::string& id) const;
  /// Throws unless all masks share dimensions and ids are unique.
  void validate() const;
};

/// Reads masks.json and its PNGs. Masks are binarized at 128; empty ones are
/// dropped with a warning.
MaskSet import_masks(const std::filesystem::path& manifest);

/// Writes one PNG per mask plus masks.json (level, id, file, area, bbox).
void export_masks(const MaskSet& set, const std::filesystem::path& dir);

/// Fallback segmenter: 4-bit-per-channel colour quantization, then
/// 8-connected components of equal colour with area >= min_area, largest first.
std::vector<BinaryMask> builtin_segment(const Image& img, std::size_t min_area = 64, int level = 0);

/// Canonical processing order: most simplified level first, then area
/// descending, then id.
std::vector<std::size_t> processing_order(const MaskSet& set);

/// Keeps a mask only if its Jaccard similarity to every mask kept so far is
/// below the threshold, visiting masks in processing order.
MaskSet dedup_across_levels(const MaskSet& set, double jaccard_threshold = 0.90);

}  // namespace layervec
