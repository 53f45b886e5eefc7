#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "chlax/ch_solver.hpp"
#include "chlax/factorization.hpp"
#include "chlax/oracles.hpp"

using namespace chlax;

namespace {

double particle_energy(const ParticleState& s) {
  const auto& w = s.grid->weights;
  double h = 0.0;
  for (int i = 0; i < s.q.size(); ++i)
    for (int j = 0; j < s.q.size(); ++j)
      h += 0.25 * w[i] * w[j] * std::exp(-std::abs(s.q[i] - s.q[j])) * s.p[i] *
           s.p[j];
  return h;
}

}  // namespace

TEST_CASE("single peakon moves at half its momentum, exactly") {
  Eigen::VectorXd q(1), p(1);
  q << -1.5;
  p << 0.9;
  auto s0 = make_peakons(q, p);
  auto states = integrate_particles(s0, 1e-2, {0.5, 2.0});
  CHECK(states[0].q[0] == Catch::Approx(-1.5 + 0.5 * 0.9 * 0.5).margin(1e-14));
  CHECK(states[1].q[0] == Catch::Approx(-1.5 + 0.5 * 0.9 * 2.0).margin(1e-14));
  CHECK(states[0].p[0] == 0.9);
  CHECK(states[1].p[0] == 0.9);
}

TEST_CASE("symmetric peakon pair conserves total momentum exactly") {
  Eigen::VectorXd q(2), p(2);
  q << -1.0, 1.0;
  p << 0.8, 0.8;
  auto s0 = make_peakons(q, p);
  auto states = integrate_particles(s0, 1e-2, {1.0});
  CHECK(states[0].p.sum() == Catch::Approx(1.6).margin(1e-15));
}

TEST_CASE("four-peakon energy drift stays at RK4 level") {
  Eigen::VectorXd q(4), p(4);
  q << -3.0, -1.0, 0.5, 2.5;
  p << 0.9, 0.5, 0.7, 0.3;
  auto s0 = make_peakons(q, p);
  const double h0 = particle_energy(s0);
  auto s1 = integrate_particles(s0, 1e-3, {1.0})[0];
  CHECK(std::abs(particle_energy(s1) - h0) <= 1e-10);
  // Weighted momentum is conserved too.
  CHECK(s1.p.sum() == Catch::Approx(s0.p.sum()).margin(1e-12));
}

TEST_CASE("unordered peakon input is sorted and recorded") {
  Eigen::VectorXd q(3), p(3);
  q << 2.0, -1.0, 0.5;
  p << 0.1, 0.2, 0.3;
  auto s = make_peakons(q, p);
  CHECK(s.q[0] == -1.0);
  CHECK(s.q[1] == 0.5);
  CHECK(s.q[2] == 2.0);
  CHECK(s.p[0] == 0.2);
  CHECK(s.input_permutation == std::vector<int>{1, 2, 0});

  Eigen::VectorXd badp(3);
  badp << 0.1, -0.2, 0.3;
  CHECK_THROWS_AS(make_peakons(q, badp), ValidationError);
}

TEST_CASE("kernel_from_particles: scalar case, diagonal, semiseparability") {
  Eigen::VectorXd q(1), p(1);
  q << 0.3;
  p << 1.4;
  auto s = make_peakons(q, p);
  auto k = kernel_from_particles(s);
  CHECK(k.values(0, 0) == 0.7);

  Eigen::VectorXd q4(4), p4(4);
  q4 << -2.0, -0.5, 1.0, 3.0;
  p4 << 0.4, 1.1, 0.6, 0.9;
  auto s4 = make_peakons(q4, p4);
  auto k4 = kernel_from_particles(s4);
  for (int i = 0; i < 4; ++i) CHECK(k4.values(i, i) == 0.5 * p4[i]);
  CHECK(semiseparability_defect(k4) < 1e-15);

  auto gm = gamma_map(s4);
  CHECK((gm.values - 4.0 * k4.values).cwiseAbs().maxCoeff() == 0.0);
  Eigen::VectorXd q1(1), p1(1);
  q1 << 5.0;
  p1 << 0.25;
  CHECK(gamma_map(make_peakons(q1, p1)).values(0, 0) == 0.5);  // 2p
}

TEST_CASE("lax_step_evolve: fixed point, stability gate, route agreement") {
  Eigen::VectorXd nodes = Eigen::VectorXd::LinSpaced(5, -2.0, 2.0);
  auto gu = make_particle_grid(nodes);
  Eigen::MatrixXd d = Eigen::VectorXd::LinSpaced(5, 0.1, 0.9).asDiagonal();
  KernelOperator kd(gu, d);
  auto constant = lax_step_evolve(kd, 1e-2, {0.5}, true);
  CHECK((constant[0].values - d).cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(lax_step_evolve(kd, 1.0, {0.5}, true), StabilityError);

  auto init = init_data(gaussian_profile(1.0, 1.0, 0.0),
                        make_grid(12.0, 49, Scheme::Trapezoid));
  auto stepped = lax_step_evolve(init.k0, 1e-3, {0.5}, true)[0];
  auto direct = lax_solution(init.k0, 0.5);
  CHECK((stepped.values - direct.values).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("particle flow matches the factorization flow in quadrature mode") {
  auto init = init_data(gaussian_profile(1.0, 1.0, 0.0),
                        make_grid(12.0, 49, Scheme::Trapezoid));
  auto part0 = particles_from_initial_data(init);
  auto part = integrate_particles(part0, 1e-3, {1.0})[0];
  auto from_particles = kernel_from_particles(part);
  auto direct = lax_solution(init.k0, 1.0);
  CHECK((from_particles.values - direct.values).cwiseAbs().maxCoeff() < 1e-6);

  // gamma intertwines the flows (Poisson-map consequence).
  auto gm = gamma_map(part);
  CHECK((gm.values - 4.0 * direct.values).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("finite peakons: matrix flow and ODE flow are the same system") {
  Eigen::VectorXd q(4), p(4);
  q << -3.0, -1.0, 0.5, 2.5;
  p << 0.9, 0.5, 0.7, 0.3;
  auto s0 = make_peakons(q, p);
  auto k0 = kernel_from_particles(s0);

  auto direct = lax_solution(k0, 1.0);
  const double d1 =
      (kernel_from_particles(integrate_particles(s0, 1e-2, {1.0})[0]).values -
       direct.values)
          .cwiseAbs()
          .maxCoeff();
  const double d2 =
      (kernel_from_particles(integrate_particles(s0, 5e-3, {1.0})[0]).values -
       direct.values)
          .cwiseAbs()
          .maxCoeff();
  CHECK(d2 < 1e-9);
  // Fourth-order tightening under dt halving.
  CHECK(d1 / d2 > 8.0);
  CHECK(d1 / d2 < 32.0);
}

TEST_CASE("Sturm-Liouville: constant coefficient and second-order refinement") {
  auto g = make_grid(60.0, 601, Scheme::Trapezoid);
  auto m = sample(g, [](double) { return 2.0; });
  auto ev = sturm_liouville_spectrum(m, 2);
  CHECK(ev[0] == Catch::Approx(0.125).margin(5e-4));

  auto lowest = [](int n) {
    auto gg = make_grid(4.25, n, Scheme::Trapezoid);
    auto mm = sample(gg, [](double x) { return std::exp(-x * x); });
    return sturm_liouville_spectrum(mm, 1)[0];
  };
  const double l1 = lowest(100), l2 = lowest(200), l3 = lowest(400);
  const double ratio = std::abs(l1 - l2) / std::abs(l2 - l3);
  CHECK(ratio > 3.0);
  CHECK(ratio < 5.0);

  Eigen::VectorXd bad = Eigen::VectorXd::Zero(g->size());
  CHECK_THROWS_AS(sturm_liouville_spectrum(GridFunction(g, bad), 1),
                  ValidationError);
}

TEST_CASE("spectral mapping between the kernel and Sturm-Liouville problems") {
  auto profile = gaussian_profile(1.0, 1.0, 0.0);
  const double l_c = profile_support_radius(profile);
  auto g = make_grid(l_c, 200, Scheme::Trapezoid);
  auto init = init_data(profile, g, std::numeric_limits<double>::infinity());
  auto sd = mercer(init.k0);
  auto sl = sturm_liouville_spectrum(init.m0, 3);
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(2.0 * sd.all_lambdas[i] * sl[i] - 1.0) < 1e-3);
}

TEST_CASE("pde_residual helper runs and vanishes for stationary zero fields") {
  auto g = make_grid(8.0, 65, Scheme::Trapezoid);
  GridFunction z(g, Eigen::VectorXd::Zero(g->size()));
  auto r = pde_residual(z, z, z, 1e-3, 6.0);
  CHECK(r.max_abs == 0.0);
  CHECK(r.weak == 0.0);
}
