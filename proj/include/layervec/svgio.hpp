#pragma once

#include <filesystem>
#include <string>

#include "layervec/raster.hpp"

namespace layervec {

constexpr int kSceneSchemaVersion = 1;

/// SVG with the background as its own group followed by one
/// `<g id="layer-J" data-kind="structure|visual|mixed">` per layer, back to
/// front. Coordinates are written with 3 decimals.
std::string scene_to_svg(const Scene& scene);
void export_svg(const Scene& scene, const std::filesystem::path& path);

/// Reads SVG written by export_svg. Elements other than svg, g and path, and
/// path commands other than M, C and Z, raise an unsupported error.
Scene svg_to_scene(const std::string& text);
Scene import_svg(const std::filesystem::path& path);

/// Canonical scene JSON; doubles are written in shortest round-trip form so
/// save→load is bit-exact.
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);
void save_scene_json(const Scene& scene, const std::filesystem::path& path);
Scene load_scene_json(const std::filesystem::path& path);

/// Path data string "M x y C ... Z" for one path.
std::string path_data(const BezierPath& path);

}  // namespace layervec
