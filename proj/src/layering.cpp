#include "layervec/layering.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "layervec/error.hpp"

namespace layervec {

namespace {

bool boxes_touch(const BoundingBox& a, const BoundingBox& b) {
  return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

}  // namespace

LayerStack build_layers(const MaskSet& ms, std::size_t overlap_slack) {
  LayerStack ls;
  std::vector<std::vector<std::size_t>> members;
  std::vector<BoundingBox> boxes(ms.masks.size());
  for (std::size_t i = 0; i < ms.masks.size(); ++i) boxes[i] = ms.masks[i].bbox();

  for (std::size_t i : processing_order(ms)) {
    const auto& m = ms.masks[i];
    std::size_t target = members.size();
    for (std::size_t l = 0; l < members.size(); ++l) {
      bool fits = true;
      for (std::size_t k : members[l]) {
        if (!boxes_touch(boxes[i], boxes[k])) continue;
        if (shared_pixels(m, ms.masks[k]) > overlap_slack) {
          fits = false;
          break;
        }
      }
      if (fits) {
        target = l;
        break;
      }
    }
    if (target == members.size()) {
      members.emplace_back();
      ls.layers.emplace_back();
    }
    members[target].push_back(i);
    ls.layers[target].push_back(m.id());
    ls.layer_of[m.id()] = static_cast<int>(target);
  }
  return ls;
}

std::size_t LayerReport::overlap_count() const {
  return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(), [](const LayerViolation& v) {
    return v.kind == LayerViolation::Kind::overlap;
  }));
}

std::size_t LayerReport::minimality_count() const {
  return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(), [](const LayerViolation& v) {
    return v.kind == LayerViolation::Kind::not_minimal;
  }));
}

LayerReport verify_layers(const LayerStack& ls, const MaskSet& ms, std::size_t overlap_slack) {
  LayerReport report;
  std::map<std::string, int> placed;
  for (std::size_t l = 0; l < ls.layers.size(); ++l) {
    for (const auto& id : ls.layers[l]) {
      if (!placed.emplace(id, static_cast<int>(l)).second)
        report.violations.push_back({LayerViolation::Kind::duplicate, id, {}, static_cast<int>(l)});
    }
  }
  for (const auto& m : ms.masks) {
    if (!placed.count(m.id())) report.violations.push_back({LayerViolation::Kind::missing, m.id(), {}, -1});
  }

  // Disjointness within each layer.
  for (std::size_t l = 0; l < ls.layers.size(); ++l) {
    const auto& ids = ls.layers[l];
    for (std::size_t a = 0; a < ids.size(); ++a) {
      const BinaryMask* ma = ms.find(ids[a]);
      if (!ma) continue;
      for (std::size_t b = a + 1; b < ids.size(); ++b) {
        const BinaryMask* mb = ms.find(ids[b]);
        if (mb && shared_pixels(*ma, *mb) > overlap_slack)
          report.violations.push_back({LayerViolation::Kind::overlap, ids[a], ids[b], static_cast<int>(l)});
      }
    }
  }

  // Minimality: a mask must conflict with some earlier-ordered mask in every
  // layer below its own.
  const auto order = processing_order(ms);
  std::map<std::string, std::size_t> rank;
  for (std::size_t r = 0; r < order.size(); ++r) rank[ms.masks[order[r]].id()] = r;
  for (const auto& m : ms.masks) {
    auto it = placed.find(m.id());
    if (it == placed.end()) continue;
    for (int l = 0; l < it->second; ++l) {
      bool blocked = false;
      for (const auto& other : ls.layers[l]) {
        auto rk = rank.find(other);
        if (rk == rank.end() || rk->second >= rank[m.id()]) continue;
        if (shared_pixels(m, *ms.find(other)) > overlap_slack) {
          blocked = true;
          break;
        }
      }
      if (!blocked) {
        report.violations.push_back({LayerViolation::Kind::not_minimal, m.id(), {}, l});
        break;
      }
    }
  }
  return report;
}

void save_layers_json(const LayerStack& ls, const std::filesystem::path& path) {
  nlohmann::json j;
  j["layers"] = ls.layers;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace layervec
