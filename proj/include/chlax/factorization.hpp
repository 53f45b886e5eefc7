#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>

#include "chlax/fredholm.hpp"
#include "chlax/operator_algebra.hpp"

namespace chlax {

// ---------------------------------------------------------------------------
// Triangular x orthogonal factorization of group elements I + K
// ---------------------------------------------------------------------------
//
// Every invertible I + K factors uniquely as b_- o b_+^{-1} with b_- lower
// triangular (identity plus Volterra) and b_+ orthogonal in the weighted
// metric.  Discretely the lower subgroup has a free diagonal; uniqueness is
// pinned by requiring a positive diagonal on the symmetrized b_-, which is
// exactly what Cholesky produces.  The alternative route solves the per-node
// family of restricted Fredholm equations and assembles b_- from them; both
// routes agree to rounding and are cross-validated in the tests.

struct FactorizationDiagnostics {
  double orthogonality_defect = 0.0;   // ||b_+^T b_+ - I||_max, weighted coords
  double reconstruction_defect = 0.0;  // ||g b_+ - b_-||_max, weighted coords
};

struct FactorizationResult {
  KernelOperator b_minus;  // kernel of b_- - I, lower triangular
  KernelOperator b_plus;   // kernel of b_+ - I, orthogonal group element
  double t = 0.0;
  FactorizationDiagnostics diagnostics;
};

namespace detail {

/// Cholesky of I + S in weighted coordinates; returns the full factor L.
/// pd_floor is the smallest admissible eigenvalue of I + S: 1e-12 for the
/// public factorization contract, 0 for the exponential flow internals
/// whose conditioning is budgeted separately (exp(-t K) legitimately has
/// eigenvalues down to e^{-36}).
inline Eigen::MatrixXd cholesky_identity_plus(const Eigen::MatrixXd& s,
                                              const char* where,
                                              double pd_floor = 0.0) {
  const int n = static_cast<int>(s.rows());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) + s;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  bool suspect = llt.info() != Eigen::Success;
  if (!suspect && pd_floor > 0.0) {
    const double dmin = llt.matrixLLT().diagonal().minCoeff();
    suspect = !(dmin * dmin > pd_floor);
  }
  if (suspect) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    if (!(lmin > pd_floor))
      throw NotPositiveDefiniteError(
          std::string(where) + ": I + S is not positive definite (smallest "
                               "eigenvalue " + std::to_string(lmin) + ")",
          lmin);
  }
  return llt.matrixL();
}

inline void require_symmetric_kernel(const KernelOperator& k, const char* where) {
  if (!is_symmetric(k, 1e-12))
    throw AsymmetryError(std::string(where) + ": kernel is not symmetric");
}

}  // namespace detail

/// b_- with b_- o b_-* = I + S for symmetric S, positive definite I + S.
/// Returns the kernel of b_- - I.
inline KernelOperator cholesky_factor(const KernelOperator& s) {
  detail::require_symmetric_kernel(s, "cholesky_factor");
  const Eigen::MatrixXd sw = weighted(s);
  Eigen::MatrixXd l = detail::cholesky_identity_plus(sw, "cholesky_factor", 1e-12);
  l.diagonal().array() -= 1.0;
  return from_weighted(s.grid, l);
}

// ---------------------------------------------------------------------------
// Fredholm route
// ---------------------------------------------------------------------------

/// Per-cutoff family of solutions of the restricted equations
///   C(x, y) + int_{-infty}^{y} S(x, z) C(z, y) dz = -S(x, y),  x < y,
/// one column per grid node y.  `c` holds kernel samples with strictly
/// upper-triangular support; `pivots` holds the diagonal of (I+S)(I+C),
/// the discrete normalizers that map the assembled factor onto the
/// positive-diagonal representative.
struct CPlusFamily {
  GridPtr grid;
  Eigen::MatrixXd c;
  Eigen::VectorXd pivots;

  /// C(x, x_j) samples on the nodes x < x_j.
  Eigen::VectorXd column(int j) const { return c.col(j).head(j); }
};

struct FredholmFactorization {
  CPlusFamily c_plus;
  KernelOperator b_minus;  // kernel of b_- - I, matches cholesky_factor
};

enum class CPlusMode { DenseSolve, Det2Minor };

/// Factorization of I + S via the family of restricted linear systems.
/// DenseSolve solves each prefix system directly; Det2Minor evaluates the
/// same columns through the det2 / first-minor resolvent formula and is the
/// verification route.
inline FredholmFactorization fredholm_factor(const KernelOperator& s,
                                             CPlusMode mode = CPlusMode::DenseSolve) {
  detail::require_symmetric_kernel(s, "fredholm_factor");
  const Eigen::MatrixXd sw = weighted(s);
  const int n = static_cast<int>(sw.rows());

  Eigen::MatrixXd c_w = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd pivots(n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd col;
    if (j > 0) {
      const Eigen::MatrixXd block = sw.topLeftCorner(j, j);
      const Eigen::VectorXd rhs = -sw.col(j).head(j);
      if (mode == CPlusMode::DenseSolve) {
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(
            Eigen::MatrixXd::Identity(j, j) + block);
        const Eigen::VectorXd d = lu.matrixLU().diagonal().cwiseAbs();
        if (d.minCoeff() == 0.0 || d.maxCoeff() / d.minCoeff() > 1e15)
          throw SingularError(
              "fredholm_factor: restricted system singular at y = " +
              std::to_string(s.grid->nodes[j]));
        col = lu.solve(rhs);
      } else {
        const double d2 = detail::det2_spectral_weighted(block);
        if (std::abs(d2) <= 1e-300)
          throw SingularError(
              "fredholm_factor: restricted det2 vanishes at y = " +
              std::to_string(s.grid->nodes[j]));
        const Eigen::MatrixXd minor = detail::first_minor_weighted(block, d2);
        col = rhs + minor * rhs / d2;
      }
      c_w.col(j).head(j) = col;
    }
    double piv = 1.0 + sw(j, j);
    if (j > 0) piv += sw.row(j).head(j).dot(c_w.col(j).head(j));
    if (!(piv > 0.0))
      throw NotPositiveDefiniteError(
          "fredholm_factor: nonpositive pivot at y = " +
              std::to_string(s.grid->nodes[j]),
          piv);
    pivots[j] = piv;
  }

  // b_- = I + Pi_-(S + S C_+): lower triangular with diagonal pivots, then
  // rescaled by pivot^{-1/2} onto the positive-diagonal representative.
  Eigen::MatrixXd m = sw + sw * c_w + c_w;
  m.triangularView<Eigen::StrictlyUpper>().setZero();
  for (int j = 0; j < n; ++j) m(j, j) = pivots[j] - 1.0;
  Eigen::MatrixXd b = Eigen::MatrixXd::Identity(n, n) + m;
  b = b * pivots.array().rsqrt().matrix().asDiagonal();

  CPlusFamily fam;
  fam.grid = s.grid;
  fam.c = s.grid->inv_sqrt_w.asDiagonal() * c_w * s.grid->inv_sqrt_w.asDiagonal();
  fam.pivots = pivots;
  b.diagonal().array() -= 1.0;
  return FredholmFactorization{std::move(fam), from_weighted(s.grid, b)};
}

// ---------------------------------------------------------------------------
// Factorization of operator exponentials and the Lax flow
// ---------------------------------------------------------------------------

namespace detail {

/// Spread of the spectrum (max - min eigenvalue), taken from the symmetric
/// part for nonsymmetric kernels; controls the conditioning of exp(-t K).
inline double spectral_spread(const Eigen::MatrixXd& w) {
  const Eigen::MatrixXd sym = 0.5 * (w + w.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff() - es.eigenvalues().minCoeff();
}

constexpr double kExpConditionBudget = 36.0;  // log(1/eps), roughly
constexpr double kChainStepBudget = 30.0;     // spread * dt per chained step

}  // namespace detail

/// Solves the factorization problem exp(-t/2 K0) = b_-(t) o b_+(t)^{-1}.
/// Symmetric K0 uses I + S(t) = exp(-t K0) directly; nonsymmetric K0 uses
/// I + S = g g* with g = exp(-t/2 K0).
inline FactorizationResult factor_exp(const KernelOperator& k0, double t) {
  const Eigen::MatrixXd w = weighted(k0);
  const int n = static_cast<int>(w.rows());
  const bool sym = detail::matrix_is_symmetric(w, 1e-12);
  const double spread = detail::spectral_spread(w);
  if (std::abs(t) * spread > detail::kExpConditionBudget)
    throw ConditioningError(
        "factor_exp: exp(-t K0) too ill-conditioned at t = " +
        std::to_string(t) + " (spectral spread " + std::to_string(spread) +
        "); chain the flow in shorter time steps");

  Eigen::MatrixXd g_delta;  // exp(-t/2 K0) - I
  Eigen::MatrixXd s_w;      // S(t) = g g* - I
  if (sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w);
    const auto& q = es.eigenvectors();
    Eigen::VectorXd eg = es.eigenvalues().array().unaryExpr(
        [t](double l) { return std::expm1(-0.5 * t * l); });
    Eigen::VectorXd es_full = es.eigenvalues().array().unaryExpr(
        [t](double l) { return std::expm1(-t * l); });
    g_delta = q * eg.asDiagonal() * q.transpose();
    s_w = q * es_full.asDiagonal() * q.transpose();
  } else {
    g_delta = detail::expm_delta_general(-0.5 * t * w);
    s_w = g_delta + g_delta.transpose() + g_delta * g_delta.transpose();
  }

  Eigen::MatrixXd l = detail::cholesky_identity_plus(s_w, "factor_exp");
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(eye + g_delta);
  Eigen::MatrixXd x = lu.solve(l);  // b_+ = g^{-1} b_-

  FactorizationResult r;
  r.t = t;
  r.diagnostics.orthogonality_defect =
      (x.transpose() * x - eye).cwiseAbs().maxCoeff();
  r.diagnostics.reconstruction_defect =
      ((eye + g_delta) * x - l).cwiseAbs().maxCoeff();
  l.diagonal().array() -= 1.0;
  x.diagonal().array() -= 1.0;
  r.b_minus = from_weighted(k0.grid, l);
  r.b_plus = from_weighted(k0.grid, x);
  return r;
}

struct LaxSolveResult {
  KernelOperator k;
  double conjugation_defect = 0.0;  // max |b_- route - b_+ route|
  int chain_steps = 1;
};

/// K(t) = b_pm(t)^{-1} K0 b_pm(t) from the factorization of exp(-t/2 K0).
/// Both conjugations are computed; the b_- route (triangular solves) is
/// returned and the disagreement reported.  Large t * spread is handled by
/// chaining the group property K(t1 + t2) = flow(flow(K0, t1), t2).
inline LaxSolveResult lax_solution_full(const KernelOperator& k0, double t) {
  const double spread = detail::spectral_spread(weighted(k0));
  int steps = 1;
  if (std::abs(t) * spread > detail::kChainStepBudget)
    steps = static_cast<int>(
        std::ceil(std::abs(t) * spread / detail::kChainStepBudget));

  LaxSolveResult out;
  out.chain_steps = steps;
  KernelOperator cur = k0;
  if (t == 0.0) {
    out.k = std::move(cur);
    return out;
  }
  const double dt = t / steps;
  for (int s = 0; s < steps; ++s) {
    FactorizationResult f = factor_exp(cur, dt);
    const int n = cur.size();
    const Eigen::MatrixXd kw = weighted(cur);
    Eigen::MatrixXd l =
        Eigen::MatrixXd::Identity(n, n) + weighted(f.b_minus);
    Eigen::MatrixXd x =
        Eigen::MatrixXd::Identity(n, n) + weighted(f.b_plus);
    Eigen::MatrixXd k_minus =
        l.triangularView<Eigen::Lower>().solve(kw) * l;
    Eigen::MatrixXd k_plus = Eigen::PartialPivLU<Eigen::MatrixXd>(x).solve(kw) * x;
    out.conjugation_defect = std::max(
        out.conjugation_defect, (k_minus - k_plus).cwiseAbs().maxCoeff());
    cur = from_weighted(k0.grid, k_minus);
  }
  out.k = std::move(cur);
  return out;
}

inline KernelOperator lax_solution(const KernelOperator& k0, double t) {
  return lax_solution_full(k0, t).k;
}

/// The same flow evaluated through the explicit kernel formula: S(t) from
/// the exponential, the C_+ family from per-node restricted solves, b_- - I
/// assembled from them, and K(t) put together as
///   K0 + C_+^* K0 + (K0 + C_+^* K0)(b_- - I).
inline KernelOperator lax_solution_kernel(const KernelOperator& k0, double t,
                                          CPlusMode mode = CPlusMode::DenseSolve) {
  if (t == 0.0) return k0;
  const Eigen::MatrixXd w = weighted(k0);
  const int n = static_cast<int>(w.rows());
  const bool sym = detail::matrix_is_symmetric(w, 1e-12);
  const double spread = detail::spectral_spread(w);
  if (std::abs(t) * spread > detail::kExpConditionBudget)
    throw ConditioningError(
        "lax_solution_kernel: exp(-t K0) too ill-conditioned; use "
        "lax_solution with time chaining");

  Eigen::MatrixXd s_w;
  if (sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w);
    Eigen::VectorXd e = es.eigenvalues().array().unaryExpr(
        [t](double l) { return std::expm1(-t * l); });
    s_w = es.eigenvectors() * e.asDiagonal() * es.eigenvectors().transpose();
  } else {
    Eigen::MatrixXd g = detail::expm_delta_general(-0.5 * t * w);
    s_w = g + g.transpose() + g * g.transpose();
  }

  FredholmFactorization ff = fredholm_factor(from_weighted(k0.grid, s_w), mode);
  const Eigen::MatrixXd c_raw = k0.grid->sqrt_w.asDiagonal() * ff.c_plus.c *
                                k0.grid->sqrt_w.asDiagonal();
  const Eigen::VectorXd scale = ff.c_plus.pivots.array().rsqrt();
  // Normalized C_+ = (I + C_raw) diag(pivot^{-1/2}) - I, the transpose of
  // b_-^{-1} - I for the positive-diagonal factor.
  Eigen::MatrixXd c_norm =
      (Eigen::MatrixXd::Identity(n, n) + c_raw) * scale.asDiagonal();
  c_norm.diagonal().array() -= 1.0;
  const Eigen::MatrixXd b_minus = weighted(ff.b_minus);

  Eigen::MatrixXd a = w + c_norm.transpose() * w;
  Eigen::MatrixXd kt = a + a * b_minus;
  return from_weighted(k0.grid, kt);
}

}  // namespace chlax
