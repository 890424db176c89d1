#pragma once

#include <string>
#include <vector>

#include "layervec/image.hpp"
#include "layervec/raster.hpp"

namespace layervec {

/// Mean over pixels and channels of the squared difference.
double mse(const Image& a, const Image& b);

struct MaskCompactness {
  std::string mask_id;
  std::size_t interacting = 0;
  std::size_t contained = 0;
  double ratio = 0.0;
  bool excluded = false;  // no interacting paths
};

struct VeCReport {
  std::vector<MaskCompactness> masks;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over included masks
  std::size_t included = 0;

  std::string to_json() const;
};

/// Ratio of paths with at least `contain_threshold` of their (0.5-binarized)
/// area inside a mask to all paths sharing at least one pixel with it.
VeCReport vec_compactness(const Scene& scene, const std::vector<BinaryMask>& masks,
                          double contain_threshold = 0.85, const RenderConfig& cfg = {});

}  // namespace layervec
