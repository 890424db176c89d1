#include "layervec/svgio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "layervec/error.hpp"

namespace layervec {

namespace {

std::string fmt3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  std::string s = buf;
  if (s == "-0.000") s = "0.000";
  return s;
}

int to_byte(double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::string hex_color(double r, double g, double b) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02X%02X%02X", to_byte(r), to_byte(g), to_byte(b));
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

struct Tag {
  std::string name;
  bool closing = false;
  bool self_closing = false;
  std::map<std::string, std::string> attrs;
};

// Minimal scanner for the dialect written by scene_to_svg.
std::vector<Tag> scan_tags(const std::string& text) {
  std::vector<Tag> tags;
  std::size_t i = 0;
  while ((i = text.find('<', i)) != std::string::npos) {
    if (text.compare(i, 4, "<!--") == 0) {
      const std::size_t end = text.find("-->", i);
      if (end == std::string::npos) throw Error(ErrorKind::invalid_input, "svg: unterminated comment");
      i = end + 3;
      continue;
    }
    if (text.compare(i, 2, "<?") == 0 || text.compare(i, 2, "<!") == 0) {
      const std::size_t end = text.find('>', i);
      if (end == std::string::npos) throw Error(ErrorKind::invalid_input, "svg: unterminated declaration");
      i = end + 1;
      continue;
    }
    const std::size_t end = text.find('>', i);
    if (end == std::string::npos) throw Error(ErrorKind::invalid_input, "svg: unterminated tag");
    std::string body = text.substr(i + 1, end - i - 1);
    i = end + 1;
    Tag tag;
    if (!body.empty() && body.front() == '/') {
      tag.closing = true;
      body.erase(0, 1);
    }
    if (!body.empty() && body.back() == '/') {
      tag.self_closing = true;
      body.pop_back();
    }
    std::size_t p = 0;
    while (p < body.size() && !std::isspace(static_cast<unsigned char>(body[p]))) ++p;
    tag.name = body.substr(0, p);
    while (p < body.size()) {
      while (p < body.size() && std::isspace(static_cast<unsigned char>(body[p]))) ++p;
      if (p >= body.size()) break;
      const std::size_t eq = body.find('=', p);
      if (eq == std::string::npos) throw Error(ErrorKind::invalid_input, "svg: malformed attribute in <" + tag.name + ">");
      std::string key = body.substr(p, eq - p);
      while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
      std::size_t q = eq + 1;
      while (q < body.size() && std::isspace(static_cast<unsigned char>(body[q]))) ++q;
      if (q >= body.size() || (body[q] != '"' && body[q] != '\''))
        throw Error(ErrorKind::invalid_input, "svg: unquoted attribute '" + key + "'");
      const char quote = body[q];
      const std::size_t close = body.find(quote, q + 1);
      if (close == std::string::npos) throw Error(ErrorKind::invalid_input, "svg: unterminated attribute '" + key + "'");
      tag.attrs[key] = body.substr(q + 1, close - q - 1);
      p = close + 1;
    }
    tags.push_back(std::move(tag));
  }
  return tags;
}

double parse_number(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::invalid_input, std::string("svg: bad number for ") + what + ": '" + s + "'");
  }
}

std::vector<Point> parse_path_data(const std::string& d) {
  std::istringstream in(d);
  std::string tok;
  std::vector<Point> pts;
  auto read_point = [&](const char* cmd) {
    std::string xs, ys;
    if (!(in >> xs >> ys)) throw Error(ErrorKind::invalid_input, std::string("svg: truncated ") + cmd + " command");
    return Point{parse_number(xs, "coordinate"), parse_number(ys, "coordinate")};
  };
  if (!(in >> tok) || tok != "M") throw Error(ErrorKind::unsupported, "svg: path data must start with 'M'");
  const Point start = read_point("M");
  pts.push_back(start);
  bool closed = false;
  while (in >> tok) {
    if (tok == "C") {
      pts.push_back(read_point("C"));
      pts.push_back(read_point("C"));
      pts.push_back(read_point("C"));
    } else if (tok == "Z") {
      closed = true;
      break;
    } else {
      throw Error(ErrorKind::unsupported, "svg: unsupported path command '" + tok + "'");
    }
  }
  if (!closed) throw Error(ErrorKind::unsupported, "svg: open paths are not supported");
  if (pts.size() < 4 || (pts.size() - 1) % 3 != 0)
    throw Error(ErrorKind::invalid_input, "svg: path needs at least one complete cubic segment");
  pts.pop_back();  // final endpoint coincides with the start
  return pts;
}

Rgba parse_fill(const Tag& tag) {
  auto it = tag.attrs.find("fill");
  if (it == tag.attrs.end() || it->second.size() != 7 || it->second[0] != '#')
    throw Error(ErrorKind::unsupported, "svg: only #RRGGBB fills are supported");
  Rgba c;
  const auto byte = [&](int k) { return std::stoi(it->second.substr(1 + 2 * k, 2), nullptr, 16) / 255.0; };
  c.r = byte(0);
  c.g = byte(1);
  c.b = byte(2);
  auto op = tag.attrs.find("fill-opacity");
  c.a = op == tag.attrs.end() ? 1.0 : parse_number(op->second, "fill-opacity");
  return c;
}

}  // namespace

std::string path_data(const BezierPath& path) {
  std::string d = "M " + fmt3(path.points[0].x) + " " + fmt3(path.points[0].y);
  for (int k = 0; k < path.segment_count(); ++k) {
    d += " C";
    for (int j = 1; j <= 3; ++j) {
      const Point& q = path.control(k, j);
      d += " " + fmt3(q.x) + " " + fmt3(q.y);
    }
  }
  d += " Z";
  return d;
}

std::string scene_to_svg(const Scene& scene) {
  scene.validate();
  std::ostringstream out;
  const double w = scene.width, h = scene.height;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << scene.width << " " << scene.height
      << "\" width=\"" << scene.width << "\" height=\"" << scene.height << "\">\n";
  BezierPath bg;
  bg.points = {{0, 0}, {w / 3, 0}, {2 * w / 3, 0}, {w, 0}, {w, h / 3}, {w, 2 * h / 3},
               {w, h}, {2 * w / 3, h}, {w / 3, h}, {0, h}, {0, 2 * h / 3}, {0, h / 3}};
  out << "  <g id=\"background\" data-kind=\"background\">\n";
  out << "    <path d=\"" << path_data(bg) << "\" fill=\""
      << hex_color(scene.background.r, scene.background.g, scene.background.b) << "\" fill-opacity=\"1.000\"/>\n";
  out << "  </g>\n";

  std::size_t i = 0;
  while (i < scene.paths.size()) {
    const int layer = scene.paths[i].layer;
    std::size_t j = i;
    std::set<PathKind> kinds;
    while (j < scene.paths.size() && scene.paths[j].layer == layer) kinds.insert(scene.paths[j++].kind);
    const std::string kind = kinds.size() > 1 ? "mixed" : to_string(*kinds.begin());
    out << "  <g id=\"layer-" << layer << "\" data-kind=\"" << kind << "\">\n";
    for (; i < j; ++i) {
      const auto& p = scene.paths[i];
      out << "    <path d=\"" << path_data(p) << "\" fill=\"" << hex_color(p.fill.r, p.fill.g, p.fill.b)
          << "\" fill-opacity=\"" << fmt3(std::clamp(p.fill.a, 0.0, 1.0)) << "\" data-kind=\"" << to_string(p.kind)
          << "\"";
      if (p.frozen) out << " data-frozen=\"true\"";
      if (p.source_mask_id) out << " data-mask=\"" << *p.source_mask_id << "\"";
      out << "/>\n";
    }
    out << "  </g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void export_svg(const Scene& scene, const std::filesystem::path& path) { write_file(path, scene_to_svg(scene)); }

Scene svg_to_scene(const std::string& text) {
  Scene scene;
  bool seen_svg = false;
  bool in_background = false;
  int layer = -1;  // current layer group, -1 outside one
  for (const auto& tag : scan_tags(text)) {
    if (tag.name != "svg" && tag.name != "g" && tag.name != "path")
      throw Error(ErrorKind::unsupported, "svg: unsupported element <" + tag.name + ">");
    if (tag.closing) {
      if (tag.name == "g") {
        in_background = false;
        layer = -1;
      }
      continue;
    }
    if (tag.name == "svg") {
      auto vb = tag.attrs.find("viewBox");
      if (vb == tag.attrs.end()) throw Error(ErrorKind::invalid_input, "svg: missing viewBox");
      std::istringstream in(vb->second);
      double x0, y0, w, h;
      if (!(in >> x0 >> y0 >> w >> h) || x0 != 0 || y0 != 0)
        throw Error(ErrorKind::unsupported, "svg: viewBox must be '0 0 W H'");
      scene.width = static_cast<int>(w);
      scene.height = static_cast<int>(h);
      seen_svg = true;
    } else if (tag.name == "g") {
      const std::string id = tag.attrs.count("id") ? tag.attrs.at("id") : "";
      if (id == "background") {
        in_background = true;
      } else if (id.rfind("layer-", 0) == 0) {
        layer = static_cast<int>(parse_number(id.substr(6), "layer index"));
      } else {
        throw Error(ErrorKind::unsupported, "svg: group '" + id + "' is not a layer group");
      }
    } else {  // path
      if (!seen_svg) throw Error(ErrorKind::invalid_input, "svg: <path> outside <svg>");
      auto d = tag.attrs.find("d");
      if (d == tag.attrs.end()) throw Error(ErrorKind::invalid_input, "svg: <path> without d");
      const Rgba fill = parse_fill(tag);
      if (in_background) {
        scene.background = {fill.r, fill.g, fill.b};
        continue;
      }
      if (layer < 0) throw Error(ErrorKind::unsupported, "svg: <path> outside a layer group");
      BezierPath p;
      p.points = parse_path_data(d->second);
      p.fill = fill;
      p.layer = layer;
      auto kind = tag.attrs.find("data-kind");
      if (kind != tag.attrs.end()) p.kind = path_kind_from_string(kind->second);
      auto frozen = tag.attrs.find("data-frozen");
      p.frozen = frozen != tag.attrs.end() && frozen->second == "true";
      auto mask = tag.attrs.find("data-mask");
      if (mask != tag.attrs.end()) p.source_mask_id = mask->second;
      scene.paths.push_back(std::move(p));
    }
  }
  if (!seen_svg) throw Error(ErrorKind::invalid_input, "svg: no <svg> element");
  scene.validate();
  return scene;
}

Scene import_svg(const std::filesystem::path& path) { return svg_to_scene(read_file(path)); }

std::string scene_to_json(const Scene& scene) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSceneSchemaVersion;
  j["width"] = scene.width;
  j["height"] = scene.height;
  j["background"] = {scene.background.r, scene.background.g, scene.background.b};
  j["paths"] = nlohmann::ordered_json::array();
  for (const auto& p : scene.paths) {
    nlohmann::ordered_json jp;
    nlohmann::ordered_json pts = nlohmann::ordered_json::array();
    for (const auto& q : p.points) pts.push_back({q.x, q.y});
    jp["points"] = std::move(pts);
    jp["fill"] = {p.fill.r, p.fill.g, p.fill.b, p.fill.a};
    jp["layer"] = p.layer;
    jp["kind"] = to_string(p.kind);
    jp["frozen"] = p.frozen;
    if (p.source_mask_id) jp["source_mask_id"] = *p.source_mask_id;
    j["paths"].push_back(std::move(jp));
  }
  return j.dump(2) + "\n";
}

Scene scene_from_json(const std::string& text) {
  Scene scene;
  try {
    const auto j = nlohmann::json::parse(text);
    const int version = j.at("schema_version").get<int>();
    if (version != kSceneSchemaVersion)
      throw Error(ErrorKind::unsupported, "scene schema_version " + std::to_string(version) + " is not supported");
    scene.width = j.at("width").get<int>();
    scene.height = j.at("height").get<int>();
    const auto& bg = j.at("background");
    scene.background = {bg.at(0).get<double>(), bg.at(1).get<double>(), bg.at(2).get<double>()};
    for (const auto& jp : j.at("paths")) {
      BezierPath p;
      for (const auto& q : jp.at("points")) p.points.push_back({q.at(0).get<double>(), q.at(1).get<double>()});
      const auto& f = jp.at("fill");
      p.fill = {f.at(0).get<double>(), f.at(1).get<double>(), f.at(2).get<double>(), f.at(3).get<double>()};
      p.layer = jp.at("layer").get<int>();
      p.kind = path_kind_from_string(jp.at("kind").get<std::string>());
      p.frozen = jp.value("frozen", false);
      if (jp.contains("source_mask_id")) p.source_mask_id = jp.at("source_mask_id").get<std::string>();
      scene.paths.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_input, std::string("scene json: ") + e.what());
  }
  scene.validate();
  return scene;
}

void save_scene_json(const Scene& scene, const std::filesystem::path& path) {
  write_file(path, scene_to_json(scene));
}

Scene load_scene_json(const std::filesystem::path& path) { return scene_from_json(read_file(path)); }

}  // namespace layervec
