#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "chlax/ch_solver.hpp"
#include "chlax/operator_algebra.hpp"

namespace chlax {

// ---------------------------------------------------------------------------
// Lagrangian particle system
// ---------------------------------------------------------------------------
//
//   qdot_i = 1/2 sum_j w_j e^{-|q_i - q_j|} p_j
//   pdot_i = 1/2 p_i sum_j w_j sgn(i - j) e^{-|q_i - q_j|} p_j
//
// with sgn(0) = 0.  In continuum-quadrature mode the particles carry the
// grid weights; in finite-peakon mode the weights are 1 and the system is
// the classical N-peakon ODE.

struct ParticleState {
  enum class Mode { ContinuumQuadrature, FinitePeakon };
  double t = 0.0;
  GridPtr grid;  // weights live here (unit weights for finite peakons)
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Mode mode = Mode::ContinuumQuadrature;
  std::vector<int> input_permutation;  // sorting applied to unordered input
};

inline ParticleState particles_from_initial_data(const InitialData& init) {
  ParticleState s;
  s.grid = init.grid;
  s.q = init.grid->nodes;
  s.p = init.m0.values;
  s.mode = ParticleState::Mode::ContinuumQuadrature;
  return s;
}

/// Finite-peakon state; unordered input is sorted by position and the
/// permutation recorded.
inline ParticleState make_peakons(const Eigen::VectorXd& q,
                                  const Eigen::VectorXd& p) {
  if (q.size() != p.size() || q.size() == 0)
    throw ValidationError("make_peakons: need matching nonempty q, p");
  const int n = static_cast<int>(q.size());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::sort(perm.begin(), perm.end(),
            [&](int a, int b) { return q[a] < q[b]; });
  Eigen::VectorXd qs(n), ps(n);
  for (int i = 0; i < n; ++i) {
    qs[i] = q[perm[i]];
    ps[i] = p[perm[i]];
    if (!(ps[i] > 0.0))
      throw ValidationError("make_peakons: momenta must be positive");
  }
  ParticleState s;
  s.grid = make_particle_grid(qs);
  s.q = qs;
  s.p = ps;
  s.mode = ParticleState::Mode::FinitePeakon;
  s.input_permutation = std::move(perm);
  return s;
}

namespace detail {

inline void particle_derivative(const Eigen::VectorXd& w,
                                const Eigen::VectorXd& q,
                                const Eigen::VectorXd& p,
                                Eigen::VectorXd& qdot, Eigen::VectorXd& pdot) {
  const int n = static_cast<int>(q.size());
  qdot.resize(n);
  pdot.resize(n);
  for (int i = 0; i < n; ++i) {
    double sq = 0.0;
    double sp = 0.0;
    for (int j = 0; j < n; ++j) {
      const double e = w[j] * std::exp(-std::abs(q[i] - q[j])) * p[j];
      sq += e;
      if (j < i) sp += e;
      else if (j > i) sp -= e;
    }
    qdot[i] = 0.5 * sq;
    pdot[i] = 0.5 * p[i] * sp;
  }
}

}  // namespace detail

/// Classical RK4 on the particle system; returns states at the requested
/// times.  A step that loses positivity of p or the ordering of q is
/// rejected -- trajectory crossing is excluded by theory, so reaching it
/// means the step size is bad (or a genuine bug).
inline std::vector<ParticleState> integrate_particles(
    const ParticleState& state0, double dt, const std::vector<double>& times) {
  if (!(dt > 0.0)) throw ValidationError("integrate_particles: dt must be > 0");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < state0.t)
      throw ValidationError("integrate_particles: time before initial state");
    if (i > 0 && times[i] < times[i - 1])
      throw ValidationError("integrate_particles: times must be sorted");
  }
  const Eigen::VectorXd& w = state0.grid->weights;
  Eigen::VectorXd q = state0.q, p = state0.p;
  double t = state0.t;
  std::vector<ParticleState> out;
  Eigen::VectorXd k1q, k1p, k2q, k2p, k3q, k3p, k4q, k4p;
  for (double target : times) {
    while (target > t) {
      const double h = std::min(dt, target - t);
      detail::particle_derivative(w, q, p, k1q, k1p);
      detail::particle_derivative(w, q + 0.5 * h * k1q, p + 0.5 * h * k1p, k2q, k2p);
      detail::particle_derivative(w, q + 0.5 * h * k2q, p + 0.5 * h * k2p, k3q, k3p);
      detail::particle_derivative(w, q + h * k3q, p + h * k3p, k4q, k4p);
      q += (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
      p += (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
      t += h;
      for (int i = 0; i < p.size(); ++i)
        if (!(p[i] > 0.0))
          throw MonotonicityError(
              "integrate_particles: momentum lost positivity at t = " +
              std::to_string(t));
      for (int i = 0; i + 1 < q.size(); ++i)
        if (!(q[i] < q[i + 1]))
          throw MonotonicityError(
              "integrate_particles: trajectories crossed at t = " +
              std::to_string(t));
    }
    ParticleState s = state0;
    s.t = target;
    s.q = q;
    s.p = p;
    out.push_back(std::move(s));
  }
  return out;
}

/// The single-pair kernel carried by a particle configuration:
/// K(xi, eta) = 1/2 e^{-|q(xi) - q(eta)|/2} sqrt(p(xi) p(eta)).
inline KernelOperator kernel_from_particles(const ParticleState& s) {
  const int n = static_cast<int>(s.q.size());
  for (int i = 0; i + 1 < n; ++i)
    if (!(s.q[i] < s.q[i + 1]))
      throw ValidationError("kernel_from_particles: q must be increasing");
  Eigen::VectorXd sp = s.p.array().sqrt().matrix();
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i) {
    k(i, i) = 0.5 * s.p[i];
    for (int j = 0; j < i; ++j) {
      const double v = 0.5 * std::exp(-0.5 * (s.q[i] - s.q[j])) * sp[i] * sp[j];
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return KernelOperator(s.grid, std::move(k));
}

/// The map gamma(q, p) = 2 e^{-|q(xi) - q(eta)|/2} sqrt(p(xi) p(eta)), i.e.
/// l_+(min) l_-(max) with l_pm = sqrt(2p) e^{pm q/2}.  Evaluated in the
/// subtracted form -- the l_pm factors themselves overflow for large |q|.
inline KernelOperator gamma_map(const ParticleState& s) {
  KernelOperator k = kernel_from_particles(s);
  k.values *= 4.0;
  return k;
}

// ---------------------------------------------------------------------------
// Direct time stepping of the Lax equation
// ---------------------------------------------------------------------------

/// RK4 on dK/dt = 1/2 [Pi_l K, K]; the independent oracle for the
/// factorization solution.  Enforces the stability gate ||K|| dt <= 0.1 on
/// the initial operator norm (preserved by the isospectral flow).
inline std::vector<KernelOperator> lax_step_evolve(
    const KernelOperator& k0, double dt, const std::vector<double>& times,
    bool symmetric) {
  if (!(dt > 0.0)) throw ValidationError("lax_step_evolve: dt must be > 0");
  const Eigen::MatrixXd w0 = weighted(k0);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(w0);
  const double norm = svd.singularValues().maxCoeff();
  if (norm * dt > 0.1)
    throw StabilityError("lax_step_evolve: ||K|| dt = " +
                         std::to_string(norm * dt) + " exceeds the 0.1 gate");
  KernelOperator k = k0;
  double t = 0.0;
  std::vector<KernelOperator> out;
  for (double target : times) {
    while (target > t + 1e-15) {
      const double h = std::min(dt, target - t);
      const KernelOperator f1 = lax_rhs(k, symmetric, 1);
      KernelOperator s2(k.grid, k.values + 0.5 * h * f1.values);
      const KernelOperator f2 = lax_rhs(s2, symmetric, 1);
      KernelOperator s3(k.grid, k.values + 0.5 * h * f2.values);
      const KernelOperator f3 = lax_rhs(s3, symmetric, 1);
      KernelOperator s4(k.grid, k.values + h * f3.values);
      const KernelOperator f4 = lax_rhs(s4, symmetric, 1);
      k.values += (h / 6.0) * (f1.values + 2.0 * f2.values +
                               2.0 * f3.values + f4.values);
      t += h;
    }
    out.push_back(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sturm-Liouville spectral problem
// ---------------------------------------------------------------------------

/// Lowest eigenvalues of (1/4 - d^2) f = lambda m f on the truncated line,
/// second-order finite differences with Robin rows f' = -+ f/2 at the two
/// ends mimicking the free-line decay e^{-+ x/2}.  The boundary rows carry
/// the standard half-cell scaling that keeps the pencil symmetric.
inline Eigen::VectorXd sturm_liouville_spectrum(const GridFunction& m,
                                                int count) {
  const auto& g = *m.grid;
  const int n = g.size();
  if (count < 1 || count > n)
    throw ValidationError("sturm_liouville_spectrum: bad count");
  for (int i = 0; i < n; ++i)
    if (!(m.values[i] > 0.0))
      throw ValidationError("sturm_liouville_spectrum: m must be positive");
  const double h = g.spacing();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i + 1 < n; ++i) {
    a(i, i) = 0.25 + 2.0 / (h * h);
    a(i, i - 1) = -1.0 / (h * h);
    a(i, i + 1) = -1.0 / (h * h);
    b(i, i) = m.values[i];
  }
  const double corner = 0.5 * (0.25 + (2.0 + h) / (h * h));
  a(0, 0) = corner;
  a(0, 1) = -1.0 / (h * h);
  b(0, 0) = 0.5 * m.values[0];
  a(n - 1, n - 1) = corner;
  a(n - 1, n - 2) = -1.0 / (h * h);
  b(n - 1, n - 1) = 0.5 * m.values[n - 1];
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(a, b);
  return es.eigenvalues().head(count);
}

// ---------------------------------------------------------------------------
// Eulerian PDE residual
// ---------------------------------------------------------------------------

/// Residual of m_t + u m_x + 2 m u_x with m = (1 - d^2) u by centered
/// differences and m_t by a central difference of two nearby output times.
/// `max_abs` is taken over the interior window |x| <= window; `weak` pairs
/// the residual with fixed smooth bump test functions, the measurement that
/// ignores the sub-grid oscillation of the particle quadrature.
struct PdeResidual {
  Eigen::VectorXd field;
  double max_abs = 0.0;
  double weak = 0.0;
};

inline PdeResidual pde_residual(const GridFunction& u_minus,
                                const GridFunction& u_center,
                                const GridFunction& u_plus, double delta_t,
                                double window) {
  require_same_grid(u_minus.grid, u_center.grid, "pde_residual");
  require_same_grid(u_center.grid, u_plus.grid, "pde_residual");
  const auto& g = *u_center.grid;
  const double h = g.spacing();
  const Eigen::VectorXd m_minus = u_minus.values - fd_second_derivative(u_minus.values, h);
  const Eigen::VectorXd m_center = u_center.values - fd_second_derivative(u_center.values, h);
  const Eigen::VectorXd m_plus = u_plus.values - fd_second_derivative(u_plus.values, h);
  const Eigen::VectorXd m_t = (m_plus - m_minus) / (2.0 * delta_t);
  const Eigen::VectorXd m_x = fd_first_derivative(m_center, h);
  const Eigen::VectorXd u_x = fd_first_derivative(u_center.values, h);
  PdeResidual r;
  r.field = m_t.array() + u_center.values.array() * m_x.array() +
            2.0 * m_center.array() * u_x.array();
  for (int i = 0; i < g.size(); ++i)
    if (std::abs(g.nodes[i]) <= window)
      r.max_abs = std::max(r.max_abs, std::abs(r.field[i]));
  for (double c : {-3.0, 0.0, 3.0}) {
    double s = 0.0;
    for (int i = 0; i < g.size(); ++i) {
      const double d = g.nodes[i] - c;
      s += g.weights[i] * std::exp(-0.5 * d * d) * r.field[i];
    }
    r.weak = std::max(r.weak, std::abs(s));
  }
  return r;
}

/// Max deviation from the single-pair identity
/// K(xi, eta) K(eta, zeta) = K(xi, zeta) K(eta, eta) over all node triples
/// xi <= eta <= zeta, normalized by the kernel scale squared.
inline double semiseparability_defect(const KernelOperator& k) {
  const int n = k.size();
  const double scale = std::max(max_abs(k), 1e-300);
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      for (int l = j; l < n; ++l) {
        const double d = k.values(i, j) * k.values(j, l) -
                         k.values(i, l) * k.values(j, j);
        worst = std::max(worst, std::abs(d));
      }
  return worst / (scale * scale);
}

}  // namespace chlax
