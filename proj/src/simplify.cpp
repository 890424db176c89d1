#include "layervec/simplify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "layervec/error.hpp"

namespace layervec {

namespace {

// Half-sample symmetric extension: ... c b a | a b c ... c | c b a ...
int reflect(int i, int n) {
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

std::vector<double> gaussian_kernel(int kernel_size) {
  const double sigma = kernel_size / 3.0;
  const int r = kernel_size;
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + r];
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace

Image gaussian_blur(const Image& img, int kernel_size) {
  if (kernel_size <= 0) throw Error(ErrorKind::invalid_input, "Gaussian kernel size must be positive");
  const auto k = gaussian_kernel(kernel_size);
  const int r = kernel_size;
  const int w = img.width(), h = img.height(), ch = img.channels();
  Image tmp(w, h, ch), out(w, h, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * img.at(reflect(x + i, w), y, c);
        tmp.at(x, y, c) = s;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * tmp.at(x, reflect(y + i, h), c);
        out.at(x, y, c) = std::clamp(s, 0.0, 1.0);
      }
    }
  }
  return out;
}

Image bilateral_filter(const Image& img, int diameter, double sigma_color, double sigma_space) {
  if (diameter <= 0 || sigma_color <= 0.0 || sigma_space <= 0.0)
    throw Error(ErrorKind::invalid_input, "bilateral parameters must be positive");
  const int r = diameter / 2;
  const int w = img.width(), h = img.height(), ch = img.channels();
  const int color_ch = std::min(ch, 3);
  const bool use_range = std::isfinite(sigma_color);
  const double inv_space = -1.0 / (2.0 * sigma_space * sigma_space);
  const double inv_color = use_range ? -1.0 / (2.0 * sigma_color * sigma_color) : 0.0;

  struct Tap {
    int dx, dy;
    double w;
  };
  std::vector<Tap> taps;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy > r * r) continue;
      taps.push_back({dx, dy, std::exp((dx * dx + dy * dy) * inv_space)});
    }
  }

  Image out(w, h, ch);
  std::vector<double> acc(ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      double norm = 0.0;
      for (const auto& t : taps) {
        const int sx = reflect(x + t.dx, w), sy = reflect(y + t.dy, h);
        double wgt = t.w;
        if (use_range) {
          double d2 = 0.0;
          for (int c = 0; c < color_ch; ++c) {
            const double d = 255.0 * (img.at(sx, sy, c) - img.at(x, y, c));
            d2 += d * d;
          }
          wgt *= std::exp(d2 * inv_color);
        }
        norm += wgt;
        for (int c = 0; c < ch; ++c) acc[c] += wgt * img.at(sx, sy, c);
      }
      for (int c = 0; c < ch; ++c) out.at(x, y, c) = std::clamp(acc[c] / norm, 0.0, 1.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// SLIC

namespace {

struct Lab {
  double l, a, b;
};

double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

Lab to_lab(double r, double g, double b) {
  r = srgb_to_linear(r);
  g = srgb_to_linear(g);
  b = srgb_to_linear(b);
  double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
  double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
  auto f = [](double t) { return t > 0.008856 ? std::cbrt(t) : 7.787 * t + 16.0 / 116.0; };
  double fx = f(x), fy = f(y), fz = f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

struct Center {
  double l, a, b, x, y;
};

// Folds every label fragment except the largest into an adjacent surviving
// region so each label is one 4-connected region.
void enforce_connectivity(std::vector<int>& labels, int w, int h) {
  for (;;) {
    std::vector<int> comp(labels.size(), -1);
    std::vector<std::size_t> comp_size;
    std::vector<int> comp_label;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < labels.size(); ++s) {
      if (comp[s] >= 0) continue;
      const int id = static_cast<int>(comp_size.size());
      comp_size.push_back(0);
      comp_label.push_back(labels[s]);
      comp[s] = id;
      stack.push_back(s);
      while (!stack.empty()) {
        std::size_t p = stack.back();
        stack.pop_back();
        ++comp_size[id];
        const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
        const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
        for (auto [nx, ny] : nb) {
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          std::size_t q = static_cast<std::size_t>(ny) * w + nx;
          if (comp[q] < 0 && labels[q] == labels[s]) {
            comp[q] = id;
            stack.push_back(q);
          }
        }
      }
    }
    // Keeper = largest component of each label (first found on ties).
    std::map<int, int> keeper;
    for (int c = 0; c < static_cast<int>(comp_size.size()); ++c) {
      auto it = keeper.find(comp_label[c]);
      if (it == keeper.end() || comp_size[c] > comp_size[it->second]) keeper[comp_label[c]] = c;
    }
    std::vector<std::uint8_t> is_keeper(comp_size.size(), 0);
    for (auto [label, c] : keeper) is_keeper[c] = 1;
    if (keeper.size() == comp_size.size()) return;

    // Each fragment adopts the label of its largest adjacent keeper.
    std::vector<int> target(comp_size.size(), -1);
    for (std::size_t p = 0; p < labels.size(); ++p) {
      const int c = comp[p];
      if (is_keeper[c]) continue;
      const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
      const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (auto [nx, ny] : nb) {
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int o = comp[static_cast<std::size_t>(ny) * w + nx];
        if (o == c || !is_keeper[o]) continue;
        if (target[c] < 0 || comp_size[o] > comp_size[target[c]]) target[c] = o;
      }
    }
    bool changed = false;
    for (std::size_t p = 0; p < labels.size(); ++p) {
      const int c = comp[p];
      if (!is_keeper[c] && target[c] >= 0) {
        labels[p] = comp_label[target[c]];
        changed = true;
      }
    }
    if (!changed) return;
  }
}

}  // namespace

SlicResult slic(const Image& img, int superpixels, double compactness, int iterations) {
  const int w = img.width(), h = img.height();
  const std::size_t n = img.pixel_count();
  if (superpixels < 1 || static_cast<std::size_t>(superpixels) > n)
    throw Error(ErrorKind::invalid_input, "superpixel count must be in [1, pixel count]");
  const int ch = img.channels();
  std::vector<Lab> lab(n);
  for (std::size_t p = 0; p < n; ++p) {
    const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
    double r = img.at(x, y, 0);
    double g = ch >= 3 ? img.at(x, y, 1) : r;
    double b = ch >= 3 ? img.at(x, y, 2) : r;
    lab[p] = to_lab(r, g, b);
  }

  const double step = std::sqrt(static_cast<double>(n) / superpixels);
  int nx = std::max(1, static_cast<int>(std::lround(w / step)));
  int ny = std::max(1, static_cast<int>(std::lround(h / step)));
  nx = std::min(nx, w);
  ny = std::min(ny, h);
  while (nx * ny > superpixels) {
    if (nx >= ny && nx > 1) --nx;
    else --ny;
  }
  std::vector<Center> centers;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int cx = std::min(w - 1, static_cast<int>((i + 0.5) * w / nx));
      const int cy = std::min(h - 1, static_cast<int>((j + 0.5) * h / ny));
      const Lab& c = lab[static_cast<std::size_t>(cy) * w + cx];
      centers.push_back({c.l, c.a, c.b, static_cast<double>(cx), static_cast<double>(cy)});
    }
  }
  const double sx = static_cast<double>(w) / nx, sy = static_cast<double>(h) / ny;
  const double s = std::max(sx, sy);
  const double spatial = (compactness / s) * (compactness / s);

  std::vector<int> labels(n, 0);
  std::vector<double> dist(n);
  for (int it = 0; it < iterations; ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const Center& c = centers[k];
      const int xa = std::max(0, static_cast<int>(c.x - s)), xb = std::min(w - 1, static_cast<int>(c.x + s));
      const int ya = std::max(0, static_cast<int>(c.y - s)), yb = std::min(h - 1, static_cast<int>(c.y + s));
      for (int y = ya; y <= yb; ++y) {
        for (int x = xa; x <= xb; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * w + x;
          const double dl = lab[p].l - c.l, da = lab[p].a - c.a, db = lab[p].b - c.b;
          const double dx = x - c.x, dy = y - c.y;
          const double d = dl * dl + da * da + db * db + (dx * dx + dy * dy) * spatial;
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = static_cast<int>(k);
          }
        }
      }
    }
    std::vector<Center> sum(centers.size(), Center{0, 0, 0, 0, 0});
    std::vector<std::size_t> count(centers.size(), 0);
    for (std::size_t p = 0; p < n; ++p) {
      // Pixels outside every window keep their previous label.
      auto& acc = sum[labels[p]];
      acc.l += lab[p].l;
      acc.a += lab[p].a;
      acc.b += lab[p].b;
      acc.x += static_cast<double>(p % w);
      acc.y += static_cast<double>(p / w);
      ++count[labels[p]];
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (count[k] == 0) continue;
      const double inv = 1.0 / count[k];
      centers[k] = {sum[k].l * inv, sum[k].a * inv, sum[k].b * inv, sum[k].x * inv, sum[k].y * inv};
    }
  }

  enforce_connectivity(labels, w, h);

  // Dense relabel in raster order of first appearance.
  std::map<int, int> dense;
  for (auto& l : labels) {
    auto [it, inserted] = dense.emplace(l, static_cast<int>(dense.size()));
    l = it->second;
  }
  SlicResult res;
  res.count = static_cast<int>(dense.size());
  res.labels = labels;
  std::vector<std::vector<double>> sums(res.count, std::vector<double>(ch, 0.0));
  std::vector<std::size_t> counts(res.count, 0);
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < ch; ++c) sums[labels[p]][c] += img.data()[p * ch + c];
    ++counts[labels[p]];
  }
  res.mean_color = Image(w, h, ch);
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < ch; ++c) res.mean_color.data()[p * ch + c] = sums[labels[p]][c] / counts[labels[p]];
  }
  return res;
}

// ---------------------------------------------------------------------------
// Sequences

SimplificationSequence gaussian_sequence(const Image& img, const std::vector<int>& kernel_sizes) {
  SimplificationSequence seq;
  seq.method = "gaussian";
  seq.levels.push_back(img);
  seq.params.push_back({});
  for (int k : kernel_sizes) {
    seq.levels.push_back(gaussian_blur(img, k));
    seq.params.push_back({{"kernel_size", k}, {"sigma", k / 3.0}});
  }
  return seq;
}

SimplificationSequence bilateral_sequence(const Image& img, int levels) {
  SimplificationSequence seq;
  seq.method = "bilateral";
  seq.levels.push_back(img);
  seq.params.push_back({});
  for (int n = 0; n < levels; ++n) {
    const int d = 10 + 5 * n;
    const double sc = 100.0 + 50.0 * n;
    const double ss = 100.0 + 50.0 * n;
    seq.levels.push_back(bilateral_filter(img, d, sc, ss));
    seq.params.push_back({{"diameter", d}, {"sigma_color", sc}, {"sigma_space", ss}});
  }
  return seq;
}

SimplificationSequence slic_sequence(const Image& img, const std::vector<int>& counts) {
  SimplificationSequence seq;
  seq.method = "slic";
  seq.levels.push_back(img);
  seq.params.push_back({});
  for (int k : counts) {
    auto res = slic(img, k);
    seq.levels.push_back(std::move(res.mean_color));
    seq.params.push_back({{"superpixels", k}, {"produced", res.count}, {"compactness", 10.0}});
  }
  return seq;
}

SimplificationSequence load_sequence(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorKind::io, "cannot open sequence manifest " + manifest.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::decode, manifest.string() + ": " + e.what());
  }
  const auto dir = manifest.parent_path();
  if (!j.contains("levels") || !j["levels"].is_array() || j["levels"].empty())
    throw Error(ErrorKind::invalid_input, "sequence manifest has no levels");

  struct Entry {
    int index;
    std::string file;
    std::map<std::string, double> params;
  };
  std::vector<Entry> entries;
  for (const auto& lv : j["levels"]) {
    Entry e{lv.at("index").get<int>(), lv.at("file").get<std::string>(), {}};
    if (lv.contains("params") && lv["params"].is_object()) {
      for (auto it = lv["params"].begin(); it != lv["params"].end(); ++it) {
        if (it.value().is_number()) e.params[it.key()] = it.value().get<double>();
      }
    }
    entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.index < b.index; });
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].index != static_cast<int>(i))
      throw Error(ErrorKind::invalid_input, "sequence level indices must be contiguous from 0");
  }

  SimplificationSequence seq;
  seq.method = j.value("method", std::string("unknown"));
  for (const auto& e : entries) {
    auto path = dir / e.file;
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::io, "missing sequence level " + path.string());
    Image img = load_png(path);
    if (!seq.levels.empty() && (img.width() != seq.levels[0].width() || img.height() != seq.levels[0].height()))
      throw Error(ErrorKind::shape, "sequence level " + e.file + " has different dimensions");
    seq.levels.push_back(std::move(img));
    seq.params.push_back(e.params);
  }
  if (j.contains("original") && j["original"].is_string()) {
    const std::string orig = j["original"].get<std::string>();
    if (orig != entries.front().file) {
      auto path = dir / orig;
      if (!std::filesystem::exists(path)) throw Error(ErrorKind::io, "missing original " + path.string());
      Image o = load_png(path);
      if (!(o == seq.levels.front()))
        throw Error(ErrorKind::invalid_input, "sequence level 0 differs from the declared original");
    }
  }
  return seq;
}

void save_sequence(const SimplificationSequence& seq, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["original"] = "level_0.png";
  j["method"] = seq.method;
  j["levels"] = nlohmann::json::array();
  for (std::size_t i = 0; i < seq.levels.size(); ++i) {
    const std::string file = "level_" + std::to_string(i) + ".png";
    save_png(seq.levels[i], dir / file);
    nlohmann::json lv;
    lv["index"] = i;
    lv["file"] = file;
    lv["params"] = nlohmann::json::object();
    if (i < seq.params.size()) {
      for (const auto& [k, v] : seq.params[i]) lv["params"][k] = v;
    }
    j["levels"].push_back(lv);
  }
  std::ofstream out(dir / "sequence.json");
  if (!out) throw Error(ErrorKind::io, "cannot write " + (dir / "sequence.json").string());
  out << j.dump(2) << "\n";
}

double mean_abs_laplacian(const Image& img) {
  const int w = img.width(), h = img.height(), ch = img.channels();
  double s = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        const double lap = img.at(reflect(x - 1, w), y, c) + img.at(reflect(x + 1, w), y, c) +
                           img.at(x, reflect(y - 1, h), c) + img.at(x, reflect(y + 1, h), c) - 4.0 * img.at(x, y, c);
        s += std::abs(lap);
      }
    }
  }
  return s / static_cast<double>(img.data().size());
}

}  // namespace layervec
