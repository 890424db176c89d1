#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <random>
#include <string>

#include <json.hpp>

#include "../fixtures.hpp"
#include "layervec/error.hpp"
#include "layervec/svgio.hpp"

using namespace layervec;

namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

Scene two_layer_scene() {
  Scene s;
  s.width = 40;
  s.height = 30;
  s.background = {1, 1, 1};
  auto a = fixtures::rect_path(3, 3, 21, 18, {0.8, 0.2, 0.2, 1}, 0);
  a.frozen = true;
  a.source_mask_id = "L0_m0";
  auto b = fixtures::circle_path(25, 15, 7, {0.2, 0.3, 0.8, 0.6}, 1);
  b.kind = PathKind::visual;
  s.paths = {a, b};
  return s;
}

bool bits_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("path data uses absolute M, C and Z with three decimals") {
  const auto p = fixtures::rect_path(0, 0, 3, 6, {0, 0, 0, 1});
  CHECK(path_data(p) ==
        "M 0.000 0.000 C 1.000 0.000 2.000 0.000 3.000 0.000 C 3.000 2.000 3.000 4.000 3.000 6.000 "
        "C 2.000 6.000 1.000 6.000 0.000 6.000 C 0.000 4.000 0.000 2.000 0.000 0.000 Z");
}

TEST_CASE("svg groups: background first, then one group per layer") {
  const std::string svg = scene_to_svg(two_layer_scene());
  CHECK(svg.find("viewBox=\"0 0 40 30\"") != std::string::npos);
  CHECK(count(svg, "<g ") == 3);
  const auto bg = svg.find("id=\"background\"");
  const auto l0 = svg.find("<g id=\"layer-0\" data-kind=\"structure\">");
  const auto l1 = svg.find("<g id=\"layer-1\" data-kind=\"visual\">");
  REQUIRE(bg != std::string::npos);
  REQUIRE(l0 != std::string::npos);
  REQUIRE(l1 != std::string::npos);
  CHECK(bg < l0);
  CHECK(l0 < l1);
  CHECK(svg.find("fill=\"#CC3333\"") != std::string::npos);
  CHECK(svg.find("fill-opacity=\"0.600\"") != std::string::npos);
  CHECK(svg.find("data-frozen=\"true\"") != std::string::npos);
  CHECK(svg.find("data-mask=\"L0_m0\"") != std::string::npos);
  CHECK(svg.find("<rect") == std::string::npos);
}

TEST_CASE("a layer holding both kinds is marked mixed") {
  Scene s = two_layer_scene();
  s.paths[1].layer = 0;
  CHECK(scene_to_svg(s).find("<g id=\"layer-0\" data-kind=\"mixed\">") != std::string::npos);
}

TEST_CASE("svg import restores layers, kinds and metadata") {
  const Scene s = two_layer_scene();
  const Scene back = svg_to_scene(scene_to_svg(s));
  CHECK(back.width == 40);
  CHECK(back.height == 30);
  REQUIRE(back.paths.size() == 2);
  CHECK(back.paths[0].layer == 0);
  CHECK(back.paths[1].layer == 1);
  CHECK(back.paths[0].frozen);
  CHECK_FALSE(back.paths[1].frozen);
  CHECK(back.paths[1].kind == PathKind::visual);
  CHECK(back.paths[0].source_mask_id == std::optional<std::string>("L0_m0"));
  CHECK(back.paths[1].fill.a == doctest::Approx(0.6));
  for (std::size_t i = 0; i < 2; ++i) {
    REQUIRE(back.paths[i].points.size() == s.paths[i].points.size());
    for (std::size_t k = 0; k < s.paths[i].points.size(); ++k) {
      CHECK(std::abs(back.paths[i].points[k].x - s.paths[i].points[k].x) <= 5e-4);
      CHECK(std::abs(back.paths[i].points[k].y - s.paths[i].points[k].y) <= 5e-4);
    }
  }
  const Image a = render(s, {}), b = render(back, {});
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  CHECK(worst < 2.0 / 255.0);
}

TEST_CASE("svg import rejects unsupported content") {
  const std::string head = "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 8 8\" width=\"8\" height=\"8\">";
  auto expect_kind = [](const std::string& text, ErrorKind kind) {
    try {
      svg_to_scene(text);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == kind);
    }
  };
  expect_kind(head + "<rect x=\"0\" y=\"0\" width=\"4\" height=\"4\"/></svg>", ErrorKind::unsupported);
  expect_kind(head + "<g id=\"layer-0\"><path d=\"M 0 0 L 4 4 Z\" fill=\"#000000\"/></g></svg>",
              ErrorKind::unsupported);
  expect_kind(head + "<g id=\"layer-0\"><path d=\"M 0 0 C 1 0 2 0 3 0\" fill=\"#000000\"/></g></svg>",
              ErrorKind::unsupported);
  expect_kind(head + "<g id=\"layer-0\"><path d=\"M 0 0 C 1 0 2 0 3 0 Z\" fill=\"red\"/></g></svg>",
              ErrorKind::unsupported);
  expect_kind("<svg xmlns=\"http://www.w3.org/2000/svg\"></svg>", ErrorKind::invalid_input);
  expect_kind(head + "<g id=\"layer-0\"><path d=\"M 0 0 C 1 0 2 x 3 0 Z\" fill=\"#000000\"/></g></svg>",
              ErrorKind::invalid_input);
}

TEST_CASE("scene json round trip is bit-exact") {
  std::mt19937_64 rng(11);
  Scene s = fixtures::random_scene(rng, 48, 40, 5);
  s.paths[2].kind = PathKind::visual;
  s.paths[1].frozen = true;
  s.paths[0].source_mask_id = "L1_m3";
  const std::string text = scene_to_json(s);
  const Scene back = scene_from_json(text);
  CHECK(back == s);
  for (std::size_t i = 0; i < s.paths.size(); ++i) {
    for (std::size_t k = 0; k < s.paths[i].points.size(); ++k) {
      CHECK(bits_equal(back.paths[i].points[k].x, s.paths[i].points[k].x));
      CHECK(bits_equal(back.paths[i].points[k].y, s.paths[i].points[k].y));
    }
    CHECK(bits_equal(back.paths[i].fill.a, s.paths[i].fill.a));
  }
  CHECK(scene_to_json(back) == text);

  const auto dir = fixtures::scratch_dir("svgio_json");
  save_scene_json(s, dir / "scene.json");
  CHECK(load_scene_json(dir / "scene.json") == s);

  const auto j = nlohmann::json::parse(text);
  CHECK(j["schema_version"] == kSceneSchemaVersion);
  CHECK(j["paths"][0]["source_mask_id"] == "L1_m3");
  CHECK_FALSE(j["paths"][1].contains("source_mask_id"));
}

TEST_CASE("scene json rejects other schema versions and malformed input") {
  auto j = nlohmann::json::parse(scene_to_json(two_layer_scene()));
  j["schema_version"] = 2;
  try {
    scene_from_json(j.dump());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unsupported);
  }
  CHECK_THROWS_AS(scene_from_json("{\"schema_version\": 1"), Error);
  CHECK_THROWS_AS(scene_from_json("{\"schema_version\": 1, \"width\": 4}"), Error);
  CHECK_THROWS_AS(load_scene_json("/nonexistent/scene.json"), Error);
}
