#include <doctest.h>

#include <random>

#include "../fixtures.hpp"
#include "layervec/layering.hpp"

using namespace layervec;

TEST_CASE("nested masks stack one per layer; disjoint masks share a layer") {
  const MaskSet nested = fixtures::nested_masks();
  const LayerStack ls = build_layers(nested);
  REQUIRE(ls.layer_count() == 3);
  CHECK(ls.layer_of.at("outer") == 0);
  CHECK(ls.layer_of.at("middle") == 1);
  CHECK(ls.layer_of.at("inner") == 2);
  CHECK(verify_layers(ls, nested).clean());

  const MaskSet two = fixtures::two_squares_masks();
  const LayerStack flat = build_layers(two);
  CHECK(flat.layer_count() == 1);
  CHECK(verify_layers(flat, two).clean());
}

TEST_CASE("hand-simulated placement") {
  // A (big) overlaps B and C; B and C are disjoint; D overlaps only C.
  MaskSet ms;
  ms.masks.push_back(fixtures::mask_of(40, 40, fixtures::rect(0, 0, 30, 30), 0, "A"));
  ms.masks.push_back(fixtures::mask_of(40, 40, fixtures::rect(2, 2, 12, 20), 0, "B"));
  ms.masks.push_back(fixtures::mask_of(40, 40, fixtures::rect(20, 20, 36, 36), 0, "C"));
  ms.masks.push_back(fixtures::mask_of(40, 40, fixtures::rect(32, 32, 38, 38), 0, "D"));
  const LayerStack ls = build_layers(ms);
  // Order: A(900) C(256) B(180) D(36). A→0; C overlaps A→1; B overlaps A, not C→1; D overlaps C only→0.
  CHECK(ls.layer_of.at("A") == 0);
  CHECK(ls.layer_of.at("C") == 1);
  CHECK(ls.layer_of.at("B") == 1);
  CHECK(ls.layer_of.at("D") == 0);
  CHECK(verify_layers(ls, ms).clean());
}

TEST_CASE("verify_layers detects violations") {
  const MaskSet nested = fixtures::nested_masks();
  LayerStack bad;
  bad.layers = {{"outer", "middle"}, {"inner"}};
  bad.layer_of = {{"outer", 0}, {"middle", 0}, {"inner", 1}};
  const auto r = verify_layers(bad, nested);
  CHECK(r.overlap_count() == 1);

  const MaskSet two = fixtures::two_squares_masks();
  LayerStack lazy;
  lazy.layers = {{"left"}, {"right"}};
  lazy.layer_of = {{"left", 0}, {"right", 1}};
  CHECK(verify_layers(lazy, two).minimality_count() == 1);

  LayerStack missing;
  missing.layers = {{"left"}};
  missing.layer_of = {{"left", 0}};
  CHECK_FALSE(verify_layers(missing, two).clean());
}

TEST_CASE("overlap slack admits small overlaps") {
  MaskSet ms;
  ms.masks.push_back(fixtures::mask_of(20, 20, fixtures::rect(0, 0, 10, 10), 0, "a"));
  ms.masks.push_back(fixtures::mask_of(20, 20, fixtures::rect(9, 0, 19, 10), 0, "b"));  // 10 shared px
  CHECK(build_layers(ms, 0).layer_count() == 2);
  const LayerStack loose = build_layers(ms, 10);
  CHECK(loose.layer_count() == 1);
  CHECK(verify_layers(loose, ms, 10).clean());
}

TEST_CASE("random stacks are disjoint and minimal") {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 100; ++t) {
    const MaskSet ms = fixtures::random_mask_stack(rng);
    const auto report = verify_layers(build_layers(ms), ms);
    CHECK(report.clean());
  }
}
