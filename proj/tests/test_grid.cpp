#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "chlax/grid.hpp"

using namespace chlax;

TEST_CASE("trapezoid grid nodes and weights") {
  auto g = make_grid(1.0, 3, Scheme::Trapezoid);
  REQUIRE(g->nodes[0] == -1.0);
  REQUIRE(g->nodes[1] == 0.0);
  REQUIRE(g->nodes[2] == 1.0);
  REQUIRE(g->weights[0] == 0.5);
  REQUIRE(g->weights[1] == 1.0);
  REQUIRE(g->weights[2] == 0.5);

  auto g2 = make_grid(2.0, 2, Scheme::Trapezoid);
  REQUIRE(g2->nodes[0] == -2.0);
  REQUIRE(g2->nodes[1] == 2.0);
  REQUIRE(g2->weights[0] == 2.0);
  REQUIRE(g2->weights[1] == 2.0);
}

TEST_CASE("two-point Gauss-Legendre rule") {
  auto g = make_grid(1.0, 2, Scheme::GaussLegendre);
  const double node = 1.0 / std::sqrt(3.0);
  CHECK_THAT(g->nodes[0], Catch::Matchers::WithinAbs(-node, 1e-14));
  CHECK_THAT(g->nodes[1], Catch::Matchers::WithinAbs(node, 1e-14));
  CHECK_THAT(g->weights[0], Catch::Matchers::WithinAbs(1.0, 1e-14));
  CHECK_THAT(g->weights[1], Catch::Matchers::WithinAbs(1.0, 1e-14));

  // The 2-point rule integrates cubics exactly.
  auto cubic = sample(g, [](double x) { return 3.0 * x * x + 2.0 * x * x * x - x + 5.0; });
  CHECK_THAT(integrate(cubic), Catch::Matchers::WithinAbs(2.0 + 10.0, 1e-13));
}

TEST_CASE("make_grid rejects bad arguments") {
  CHECK_THROWS_AS(make_grid(1.0, 1, Scheme::Trapezoid), ValidationError);
  CHECK_THROWS_AS(make_grid(0.0, 8, Scheme::Trapezoid), ValidationError);
  CHECK_THROWS_AS(make_grid(-2.0, 8, Scheme::Trapezoid), ValidationError);
}

TEST_CASE("integrate basics") {
  auto g = make_grid(1.0, 3, Scheme::Trapezoid);
  CHECK(integrate(sample(g, [](double) { return 0.0; })) == 0.0);
  CHECK(integrate(sample(g, [](double) { return 1.0; })) == 2.0);
}

TEST_CASE("Gaussian integral to 1e-10 on a wide trapezoid grid") {
  auto g = make_grid(8.0, 257, Scheme::Trapezoid);
  auto f = sample(g, [](double x) { return std::exp(-x * x); });
  CHECK_THAT(integrate(f),
             Catch::Matchers::WithinAbs(std::sqrt(M_PI), 1e-10));
}

TEST_CASE("integrate is linear") {
  auto g = make_grid(3.0, 41, Scheme::Trapezoid);
  auto f = sample(g, [](double x) { return std::sin(x); });
  auto h = sample(g, [](double x) { return x * x; });
  const double a = 2.5, b = -1.25;
  GridFunction combo(g, (a * f.values + b * h.values).eval());
  CHECK_THAT(integrate(combo),
             Catch::Matchers::WithinAbs(a * integrate(f) + b * integrate(h), 1e-13));
}

TEST_CASE("trapezoid refinement is at least second order") {
  // Deliberately short truncation so the quadrature error dominates rounding.
  auto value = [](int n) {
    auto g = make_grid(2.0, n, Scheme::Trapezoid);
    return integrate(sample(g, [](double x) { return std::exp(-x * x); }));
  };
  const double d1 = std::abs(value(17) - value(33));
  const double d2 = std::abs(value(33) - value(65));
  CHECK(d1 / d2 >= 3.0);
}

TEST_CASE("particle grid carries unit weights") {
  Eigen::VectorXd q(3);
  q << -1.0, 0.5, 2.0;
  auto g = make_particle_grid(q);
  CHECK(g->scheme == Scheme::Unit);
  CHECK(g->weights.sum() == 3.0);
  CHECK(same_grid(g, g));
}
