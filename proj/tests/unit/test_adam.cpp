#include <doctest.h>

#include <cmath>
#include <limits>

#include "layervec/adam.hpp"
#include "layervec/error.hpp"

using namespace layervec;

TEST_CASE("adam matches a scalar reference implementation") {
  AdamState st;
  st.add_group(2, 0.1);
  std::vector<double> p = {1.0, -2.0};
  double rp[2] = {1.0, -2.0}, rm[2] = {0, 0}, rv[2] = {0, 0};
  for (int t = 1; t <= 25; ++t) {
    const std::vector<double> g = {2 * p[0], std::sin(p[1]) + 0.3};
    double rg[2] = {2 * rp[0], std::sin(rp[1]) + 0.3};
    adam_step(st, p, g);
    for (int i = 0; i < 2; ++i) {
      rm[i] = 0.9 * rm[i] + 0.1 * rg[i];
      rv[i] = 0.999 * rv[i] + 0.001 * rg[i] * rg[i];
      const double mh = rm[i] / (1 - std::pow(0.9, t)), vh = rv[i] / (1 - std::pow(0.999, t));
      rp[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    CHECK(p[0] == doctest::Approx(rp[0]).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(rp[1]).epsilon(1e-14));
  }
}

TEST_CASE("first adam step moves each parameter by its learning rate") {
  AdamState st;
  st.add_group(1, 1.0);
  st.add_group(1, 0.01);
  std::vector<double> p = {5.0, 0.5};
  const std::vector<double> g = {123.0, -0.004};
  adam_step(st, p, g);
  CHECK(p[0] == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(0.51).epsilon(1e-6));
}

TEST_CASE("bounds clamp and non-finite gradients are skipped") {
  AdamState st;
  st.add_group(3, 1.0, 0.0, 1.0);
  std::vector<double> p = {0.5, 0.5, 0.5};
  const std::vector<double> g = {-1.0, std::numeric_limits<double>::quiet_NaN(),
                                 std::numeric_limits<double>::infinity()};
  CHECK(adam_step(st, p, g) == 2);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == 0.5);
  CHECK(p[2] == 0.5);
  CHECK(st.m[1] == 0.0);
  CHECK(st.skipped == 2);
  std::vector<double> wrong(2);
  CHECK_THROWS_AS(adam_step(st, p, wrong), Error);
}
