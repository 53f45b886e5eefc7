#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "chlax/ch_solver.hpp"
#include "chlax/factorization.hpp"
#include "chlax/oracles.hpp"

using namespace chlax;

namespace {

InitialData standard_data(int n = 65, double L = 12.0) {
  return init_data(gaussian_profile(1.0, 1.0, 0.0), make_grid(L, n, Scheme::Trapezoid));
}

}  // namespace

TEST_CASE("profile masses and tails are analytic") {
  auto p = gaussian_profile(0.8, 1.3, 0.4);
  CHECK(profile_mass(p) == Catch::Approx(0.8 * 1.3 * std::sqrt(M_PI)).epsilon(1e-14));
  auto s = sech2_profile(0.5, 2.0, -1.0);
  CHECK(profile_mass(s) == Catch::Approx(2.0 * 0.5 * 2.0).epsilon(1e-14));

  // The tail vanishes as L grows and accounts for the missing mass.
  auto g = make_grid(12.0, 257, Scheme::Trapezoid);
  auto f = sample(g, [&](double x) { return profile_value(p, x); });
  CHECK(integrate(f) + profile_tail_mass(p, 12.0) ==
        Catch::Approx(profile_mass(p)).epsilon(1e-12));
}

TEST_CASE("green_apply: zero, peakon profile, second-difference inversion") {
  auto g = make_grid(10.0, 201, Scheme::Trapezoid);
  GridFunction zero(g, Eigen::VectorXd::Zero(g->size()));
  CHECK(integrate(green_apply(zero)) == 0.0);

  // Discrete delta of mass 2c at a node produces the peakon profile.
  const int j0 = 100;
  const double c = 0.7;
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(g->size());
  delta[j0] = 2.0 * c / g->weights[j0];
  auto u = green_apply(GridFunction(g, delta));
  for (int i = 0; i < g->size(); i += 25)
    CHECK(u.values[i] ==
          Catch::Approx(c * std::exp(-std::abs(g->nodes[i] - g->nodes[j0])))
              .margin(1e-14));

  // (1 - d^2) green_apply(m) recovers m at interior nodes to O(h^2).
  auto m = sample(g, [](double x) { return std::exp(-x * x); });
  auto um = green_apply(m);
  auto recovered = momentum_from_velocity(um);
  double err = 0.0;
  for (int i = 2; i + 2 < g->size(); ++i)
    err = std::max(err, std::abs(recovered.values[i] - m.values[i]));
  const double h = g->spacing();
  CHECK(err < 1.0 * h * h);
}

TEST_CASE("init_data: invariants and rejection paths") {
  auto d = standard_data(65);
  CHECK(trace_op(d.k0) ==
        Catch::Approx(0.5 * d.total_momentum).margin(1e-10));
  CHECK((d.u0.values - green_apply(d.m0).values).cwiseAbs().maxCoeff() == 0.0);
  CHECK(semiseparability_defect(d.k0) < 1e-14);
  CHECK(d.total_momentum ==
        Catch::Approx(std::sqrt(M_PI)).margin(1e-12));  // a sigma sqrt(pi)

  auto g = make_grid(12.0, 33, Scheme::Trapezoid);
  CHECK_THROWS_AS(init_data(gaussian_profile(-1.0, 1.0, 0.0), g), ValidationError);
  auto small = make_grid(3.0, 33, Scheme::Trapezoid);
  CHECK_THROWS_AS(init_data(gaussian_profile(1.0, 1.0, 0.0), small),
                  ValidationError);
}

TEST_CASE("mercer: spectra, orthonormality, trace identities") {
  auto d = standard_data(65);
  auto sd = mercer(d.k0);

  CHECK(sd.all_lambdas.minCoeff() >= 0.0);
  CHECK(sd.all_lambdas.maxCoeff() <= 0.5 * d.total_momentum + 1e-10);
  CHECK(sd.all_lambdas.sum() == Catch::Approx(trace_op(d.k0)).margin(1e-10));
  CHECK(sd.all_lambdas.squaredNorm() ==
        Catch::Approx(hs_norm_squared(d.k0)).margin(1e-10));

  for (int i = 0; i < 4; ++i)
    for (int j = 0; j <= i; ++j) {
      const double dot = inner(sd.eigenfunction(i), sd.eigenfunction(j));
      CHECK(dot == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-10));
    }

  // Rank-1 kernel: a single retained pair.
  auto g = make_grid(4.0, 33, Scheme::Trapezoid);
  auto phi = sample(g, [](double x) { return std::exp(-x * x); });
  phi.values /= std::sqrt(inner(phi, phi));
  KernelOperator k1 = outer(phi, phi);
  k1.values *= 0.9;
  auto sd1 = mercer(k1);
  CHECK(sd1.rank() == 1);
  CHECK(sd1.all_lambdas[0] == Catch::Approx(0.9).margin(1e-12));

  Eigen::MatrixXd asym = Eigen::MatrixXd::Zero(33, 33);
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(mercer(KernelOperator(g, asym)), AsymmetryError);
}

TEST_CASE("evolve_kernel agrees with the factorization flow") {
  auto d = standard_data(65);
  auto sd = mercer(d.k0);

  auto k0r = evolve_kernel(sd, d.k0, 0.0);
  CHECK((k0r.values - d.k0.values).cwiseAbs().maxCoeff() < 1e-11);

  for (double t : {0.5, 1.0}) {
    auto via_mercer = evolve_kernel(sd, d.k0, t);
    auto via_factor = lax_solution(d.k0, t);
    CHECK((via_mercer.values - via_factor.values).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("recover_p: exact momentum at t = 0 and conservation") {
  auto d = standard_data(65);
  auto p0 = recover_p(d.k0);
  CHECK((p0.values - d.m0.values).cwiseAbs().maxCoeff() == 0.0);  // bit exact

  KernelOperator doubled(d.grid, (2.0 * d.k0.values).eval());
  CHECK((recover_p(doubled).values - 2.0 * p0.values).cwiseAbs().maxCoeff() == 0.0);

  auto sd = mercer(d.k0);
  for (double t : {0.5, 2.0}) {
    auto pt = recover_p(evolve_kernel(sd, d.k0, t));
    CHECK(integrate(pt) == Catch::Approx(d.total_momentum).margin(1e-8));
  }
}

TEST_CASE("characteristic velocity at t = 0 collapses to u0") {
  auto d = standard_data(129);
  Eigen::VectorXd qdot = characteristic_velocity(d.k0);
  CHECK((qdot - d.u0.values).cwiseAbs().maxCoeff() < 1e-8);

  // Guarded form on the reconstructed kernel agrees as well.
  auto sd = mercer(d.k0);
  Eigen::VectorXd qdot_g =
      characteristic_velocity_guarded(evolve_kernel(sd, d.k0, 0.0), d.grid->nodes);
  CHECK((qdot_g - d.u0.values).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("evolve_q: first-order Taylor and monotonicity") {
  auto d = standard_data(65);
  auto sd = mercer(d.k0);
  const double dt = 1e-3;
  auto traj = evolve_q(sd, d.k0, {dt});
  Eigen::VectorXd taylor = d.grid->nodes + dt * d.u0.values;
  CHECK((traj.q[0] - taylor).cwiseAbs().maxCoeff() < 5e-7);

  auto longer = evolve_q(sd, d.k0, {0.0, 0.5, 1.0});
  for (const auto& q : longer.q)
    for (int i = 0; i + 1 < q.size(); ++i) CHECK(q[i] < q[i + 1]);

  CHECK_THROWS_AS(evolve_q(sd, d.k0, {0.5, 0.2}), ValidationError);
}

TEST_CASE("reconstruct_u: t = 0 identity, zero momentum, single peakon") {
  auto d = standard_data(65);
  GridFunction q0(d.grid, d.grid->nodes);
  auto u0 = reconstruct_u(q0, d.m0, d.grid);
  CHECK((u0.values - d.u0.values).cwiseAbs().maxCoeff() < 1e-10);

  GridFunction zerop(d.grid, Eigen::VectorXd::Zero(d.grid->size()));
  CHECK(reconstruct_u(q0, zerop, d.grid).values.cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd qn(1), pn(1);
  qn << 0.4;
  pn << 1.2;
  auto gp = make_particle_grid(qn);
  auto eval = make_grid(5.0, 21, Scheme::Trapezoid);
  auto u = reconstruct_u(GridFunction(gp, qn), GridFunction(gp, pn), eval);
  for (int i = 0; i < eval->size(); i += 5)
    CHECK(u.values[i] ==
          Catch::Approx(0.5 * 1.2 * std::exp(-std::abs(eval->nodes[i] - 0.4)))
              .margin(1e-14));
}

TEST_CASE("energy equals the squared Hilbert-Schmidt norm along the flow") {
  auto d = standard_data(65);
  auto sd = mercer(d.k0);
  const double h0 = hs_norm_squared(d.k0);
  CHECK(h0 == Catch::Approx(sd.all_lambdas.squaredNorm()).margin(1e-10));

  auto kt = evolve_kernel(sd, d.k0, 0.5);
  auto p = recover_p(kt);
  auto traj = evolve_q(sd, d.k0, {0.5});
  // H = 1/4 integral integral e^{-|q - q'|} p p'.
  double h_quadrature = 0.0;
  const auto& w = d.grid->weights;
  for (int i = 0; i < d.grid->size(); ++i)
    for (int j = 0; j < d.grid->size(); ++j)
      h_quadrature += 0.25 * w[i] * w[j] *
                      std::exp(-std::abs(traj.q[0][i] - traj.q[0][j])) *
                      p.values[i] * p.values[j];
  CHECK(h_quadrature == Catch::Approx(hs_norm_squared(kt)).margin(1e-8));
}

TEST_CASE("solve_ch pipeline state and invariants") {
  auto d = standard_data(65);
  auto sd = mercer(d.k0);
  SolveOptions opt;
  opt.times = {0.0, 1.0};
  auto states = solve_ch(d, sd, opt);
  REQUIRE(states.size() == 2);

  auto rep0 = invariants_report(states[0], d);
  CHECK(rep0.momentum_drift < 1e-12);
  CHECK(rep0.energy_drift < 1e-12);
  CHECK(rep0.spectral_drift < 1e-12);

  auto rep1 = invariants_report(states[1], d);
  CHECK(rep1.momentum_drift < 1e-8);
  CHECK(rep1.energy_drift < 1e-8);
  CHECK(rep1.spectral_drift < 1e-10);
  CHECK(rep1.q_monotonicity_margin > 0.0);
  CHECK(rep1.jacobian_lower_margin > -1e-6);
  CHECK(rep1.jacobian_upper_margin > -1e-6);
}

TEST_CASE("profile support radius covers the representable bump") {
  auto p = gaussian_profile(1.0, 1.0, 0.0);
  const double r = profile_support_radius(p);
  CHECK(r > 4.0);
  CHECK(r < 5.5);
  CHECK(profile_value(p, r) < 2e-8);
}
