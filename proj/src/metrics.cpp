#include "layervec/metrics.hpp"

#include <cmath>

#include <json.hpp>

#include "layervec/error.hpp"
#include "layervec/geometry.hpp"

namespace layervec {

double mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw Error(ErrorKind::shape, "mse: image shapes differ");
  if (a.data().empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data().size());
}

VeCReport vec_compactness(const Scene& scene, const std::vector<BinaryMask>& masks, double contain_threshold,
                          const RenderConfig& cfg) {
  std::vector<BinaryMask> coverage;
  coverage.reserve(scene.paths.size());
  for (const auto& p : scene.paths) coverage.push_back(path_coverage_mask(p, scene.width, scene.height, cfg));

  VeCReport report;
  for (const auto& m : masks) {
    MaskCompactness mc;
    mc.mask_id = m.id();
    for (const auto& c : coverage) {
      if (!c.same_dims(m)) throw Error(ErrorKind::shape, "mask '" + m.id() + "' does not match the canvas");
      if (shared_pixels(c, m) == 0) continue;
      ++mc.interacting;
      if (overlap_fraction(c, m) >= contain_threshold) ++mc.contained;
    }
    if (mc.interacting == 0) {
      mc.excluded = true;
    } else {
      mc.ratio = static_cast<double>(mc.contained) / static_cast<double>(mc.interacting);
      ++report.included;
    }
    report.masks.push_back(mc);
  }
  if (report.included > 0) {
    const double n = static_cast<double>(report.included);
    for (const auto& m : report.masks) report.mean += m.excluded ? 0.0 : m.ratio;
    report.mean /= n;
    double var = 0.0;
    for (const auto& m : report.masks) var += m.excluded ? 0.0 : (m.ratio - report.mean) * (m.ratio - report.mean);
    report.stddev = std::sqrt(var / n);
  }
  return report;
}

std::string VeCReport::to_json() const {
  nlohmann::json j;
  j["mean"] = mean;
  j["stddev"] = stddev;
  j["included"] = included;
  j["masks"] = nlohmann::json::array();
  for (const auto& m : masks) {
    j["masks"].push_back({{"id", m.mask_id},
                          {"interacting", m.interacting},
                          {"contained", m.contained},
                          {"ratio", m.ratio},
                          {"excluded", m.excluded}});
  }
  return j.dump(2);
}

}  // namespace layervec
