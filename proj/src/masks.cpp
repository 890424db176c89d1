#include "layervec/masks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "layervec/error.hpp"
#include "layervec/geometry.hpp"

namespace layervec {

const BinaryMask* MaskSet::find(const std::string& id) const {
  for (const auto& m : masks) {
    if (m.id() == id) return &m;
  }
  return nullptr;
}

void MaskSet::validate() const {
  std::set<std::string> ids;
  for (const auto& m : masks) {
    if (!masks.empty() && !m.same_dims(masks.front()))
      throw Error(ErrorKind::shape, "mask '" + m.id() + "' has different dimensions");
    if (!ids.insert(m.id()).second) throw Error(ErrorKind::invalid_input, "duplicate mask id '" + m.id() + "'");
  }
}

MaskSet import_masks(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorKind::io, "cannot open mask manifest " + manifest.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::decode, manifest.string() + ": " + e.what());
  }
  if (!j.contains("levels") || !j["levels"].is_array())
    throw Error(ErrorKind::invalid_input, "mask manifest has no 'levels' array");

  MaskSet set;
  set.source = MaskSource::imported;
  const auto dir = manifest.parent_path();
  for (const auto& lv : j["levels"]) {
    const int level = lv.at("level").get<int>();
    for (const auto& e : lv.at("masks")) {
      const std::string id = e.at("id").get<std::string>();
      const auto path = dir / e.at("file").get<std::string>();
      if (!std::filesystem::exists(path)) throw Error(ErrorKind::io, "missing mask file " + path.string());
      BinaryMask m = load_mask_png(path, level, id);
      if (!set.masks.empty() && !m.same_dims(set.masks.front()))
        throw Error(ErrorKind::shape, "mask '" + id + "' has different dimensions");
      if (m.area() == 0) {
        set.warnings.push_back("dropped empty mask '" + id + "'");
        continue;
      }
      set.masks.push_back(std::move(m));
    }
  }
  set.validate();
  return set;
}

void export_masks(const MaskSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::map<int, nlohmann::json> by_level;
  for (const auto& m : set.masks) {
    const std::string file = m.id() + ".png";
    save_mask_png(m, dir / file);
    const auto b = m.bbox();
    by_level[m.level()].push_back(
        {{"id", m.id()}, {"file", file}, {"area", m.area()}, {"bbox", {b.x0, b.y0, b.x1, b.y1}}});
  }
  nlohmann::json j;
  j["levels"] = nlohmann::json::array();
  for (auto& [level, masks] : by_level) j["levels"].push_back({{"level", level}, {"masks", masks}});
  std::ofstream out(dir / "masks.json");
  if (!out) throw Error(ErrorKind::io, "cannot write " + (dir / "masks.json").string());
  out << j.dump(2) << "\n";
}

std::vector<BinaryMask> builtin_segment(const Image& img, std::size_t min_area, int level) {
  const int w = img.width(), h = img.height(), ch = img.channels();
  const int cc = std::min(ch, 3);
  std::vector<int> key(img.pixel_count());
  for (std::size_t p = 0; p < key.size(); ++p) {
    int k = 0;
    for (int c = 0; c < cc; ++c) {
      const int q = std::min(15, static_cast<int>(std::floor(img.data()[p * ch + c] * 16.0)));
      k = k * 16 + q;
    }
    key[p] = k;
  }

  std::vector<std::uint8_t> seen(key.size(), 0);
  std::vector<BinaryMask> out;
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < key.size(); ++s) {
    if (seen[s]) continue;
    BinaryMask m(w, h, level);
    std::size_t area = 0;
    seen[s] = 1;
    stack.push_back(s);
    while (!stack.empty()) {
      std::size_t p = stack.back();
      stack.pop_back();
      m.bits()[p] = 1;
      ++area;
      const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
          if (!seen[q] && key[q] == key[s]) {
            seen[q] = 1;
            stack.push_back(q);
          }
        }
      }
    }
    if (area >= min_area) out.push_back(std::move(m));
  }
  // Components were discovered in raster order of their first pixel, which
  // already resolves ties by top-left position.
  std::stable_sort(out.begin(), out.end(),
                   [](const BinaryMask& a, const BinaryMask& b) { return a.area() > b.area(); });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].set_id("L" + std::to_string(level) + "_m" + std::to_string(i));
  return out;
}

std::vector<std::size_t> processing_order(const MaskSet& set) {
  std::vector<std::size_t> order(set.masks.size());
  std::vector<std::size_t> area(set.masks.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
    area[i] = set.masks[i].area();
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ma = set.masks[a];
    const auto& mb = set.masks[b];
    if (ma.level() != mb.level()) return ma.level() > mb.level();
    if (area[a] != area[b]) return area[a] > area[b];
    return ma.id() < mb.id();
  });
  return order;
}

MaskSet dedup_across_levels(const MaskSet& set, double jaccard_threshold) {
  if (!(jaccard_threshold > 0.0 && jaccard_threshold <= 1.0))
    throw Error(ErrorKind::invalid_input, "Jaccard threshold must be in (0,1]");
  MaskSet out;
  out.source = set.source;
  out.warnings = set.warnings;
  for (std::size_t i : processing_order(set)) {
    const auto& m = set.masks[i];
    bool duplicate = false;
    for (const auto& k : out.masks) {
      if (jaccard(m, k) >= jaccard_threshold) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) out.masks.push_back(m);
  }
  return out;
}

}  // namespace layervec
