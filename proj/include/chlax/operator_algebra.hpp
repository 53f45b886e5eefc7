#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "chlax/grid.hpp"

namespace chlax {

/// A Hilbert-Schmidt integral operator, stored as raw kernel samples
/// K(x_i, x_j) on a quadrature grid.  The operator acts by
/// (K phi)_i = sum_j w_j K_ij phi_j, so every algebraic operation below
/// inserts quadrature weights.
///
/// Spectral primitives conjugate by D^{1/2}, D = diag(w), which turns the
/// action into plain matrix algebra (`weighted()` below) and keeps symmetric
/// kernels symmetric.
struct KernelOperator {
  GridPtr grid;
  Eigen::MatrixXd values;  // n x n kernel samples

  KernelOperator() = default;
  KernelOperator(GridPtr g, Eigen::MatrixXd v)
      : grid(std::move(g)), values(std::move(v)) {
    if (grid && (values.rows() != grid->size() || values.cols() != grid->size()))
      throw ValidationError("KernelOperator: shape does not match grid");
    if (!values.allFinite())
      throw ValidationError("KernelOperator: non-finite kernel entry");
  }

  int size() const { return static_cast<int>(values.rows()); }
};

inline KernelOperator zero_operator(const GridPtr& g) {
  return KernelOperator(g, Eigen::MatrixXd::Zero(g->size(), g->size()));
}

/// Kernel samples of the identity *operator*: delta_ij / w_i.
inline KernelOperator delta_kernel(const GridPtr& g) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(g->size(), g->size());
  for (int i = 0; i < g->size(); ++i) m(i, i) = 1.0 / g->weights[i];
  return KernelOperator(g, std::move(m));
}

/// Rank-one kernel a(x) b(y).
inline KernelOperator outer(const GridFunction& a, const GridFunction& b) {
  require_same_grid(a.grid, b.grid, "outer");
  return KernelOperator(a.grid, a.values * b.values.transpose());
}

/// D^{1/2} K D^{1/2}: the symmetrized matrix of the operator.  Composition
/// of operators is multiplication of these matrices, the adjoint is the
/// transpose, and eigenvalues/triangularity are preserved both ways.
inline Eigen::MatrixXd weighted(const KernelOperator& k) {
  return k.grid->sqrt_w.asDiagonal() * k.values * k.grid->sqrt_w.asDiagonal();
}

inline KernelOperator from_weighted(const GridPtr& g, const Eigen::MatrixXd& w) {
  return KernelOperator(g, g->inv_sqrt_w.asDiagonal() * w * g->inv_sqrt_w.asDiagonal());
}

inline double max_abs(const KernelOperator& k) {
  return k.values.size() ? k.values.cwiseAbs().maxCoeff() : 0.0;
}

inline bool is_symmetric(const KernelOperator& k, double tol) {
  const double scale = std::max(1.0, max_abs(k));
  return (k.values - k.values.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

// ---------------------------------------------------------------------------
// Basic algebra
// ---------------------------------------------------------------------------

inline GridFunction apply(const KernelOperator& k, const GridFunction& phi) {
  require_same_grid(k.grid, phi.grid, "apply");
  Eigen::VectorXd wphi = k.grid->weights.asDiagonal() * phi.values;
  return GridFunction(k.grid, k.values * wphi);
}

/// Kernel of A o B: C_ij = sum_k A_ik w_k B_kj.
inline KernelOperator compose(const KernelOperator& a, const KernelOperator& b) {
  require_same_grid(a.grid, b.grid, "compose");
  return KernelOperator(a.grid,
                        a.values * (a.grid->weights.asDiagonal() * b.values));
}

/// Kernel transpose: A*(x,y) = A(y,x).
inline KernelOperator adjoint(const KernelOperator& a) {
  return KernelOperator(a.grid, a.values.transpose());
}

inline KernelOperator commutator(const KernelOperator& a, const KernelOperator& b) {
  require_same_grid(a.grid, b.grid, "commutator");
  const Eigen::MatrixXd aw = a.values * a.grid->weights.asDiagonal();
  const Eigen::MatrixXd bw = b.values * b.grid->weights.asDiagonal();
  return KernelOperator(a.grid, aw * b.values - bw * a.values);
}

struct Bilinears {
  double trace_a = 0.0;    // tr A = sum_i w_i A_ii
  double hs_inner = 0.0;   // (A, B)_2 = sum_ij w_i w_j A_ij B_ij
  double ad_pairing = 0.0; // (A, B)  = sum_ij w_i w_j A_ij B_ji
};

inline double trace_op(const KernelOperator& a) {
  return a.grid->weights.dot(a.values.diagonal());
}

inline Bilinears bilinears(const KernelOperator& a, const KernelOperator& b) {
  require_same_grid(a.grid, b.grid, "bilinears");
  const auto& w = a.grid->weights;
  Bilinears r;
  r.trace_a = trace_op(a);
  const Eigen::MatrixXd wa = w.asDiagonal() * a.values * w.asDiagonal();
  r.hs_inner = (wa.array() * b.values.array()).sum();
  r.ad_pairing = (wa.array() * b.values.transpose().array()).sum();
  return r;
}

// ---------------------------------------------------------------------------
// Splittings
// ---------------------------------------------------------------------------
//
// The algebra splits two ways:
//   lk: lower-triangular (Volterra, diagonal included) + skew-symmetric,
//   lu: lower-triangular (diagonal included) + strictly upper-triangular.
// The continuum splitting is ambiguous on the (measure-zero) diagonal; here
// the full diagonal goes to the lower part so that the skew projection is
// exactly skew and lower + complement reproduces the input bit for bit.

enum class SplitTag { LK, LU };

struct SplitPair {
  KernelOperator lower;
  KernelOperator complement;
  SplitTag tag = SplitTag::LK;
};

inline SplitPair split_lk(const KernelOperator& a) {
  const int n = a.size();
  Eigen::MatrixXd skew = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      skew(i, j) = a.values(i, j);
      skew(j, i) = -a.values(i, j);
    }
  Eigen::MatrixXd lower = a.values - skew;
  return SplitPair{KernelOperator(a.grid, std::move(lower)),
                   KernelOperator(a.grid, std::move(skew)), SplitTag::LK};
}

inline SplitPair split_lu(const KernelOperator& a) {
  Eigen::MatrixXd lower = a.values.triangularView<Eigen::Lower>();
  Eigen::MatrixXd upper = a.values - lower;
  return SplitPair{KernelOperator(a.grid, std::move(lower)),
                   KernelOperator(a.grid, std::move(upper)), SplitTag::LU};
}

/// Classical r-matrix of the lk splitting: R = Pi_l - Pi_k.
inline KernelOperator r_matrix(const KernelOperator& a) {
  auto s = split_lk(a);
  return KernelOperator(a.grid, s.lower.values - s.complement.values);
}

/// Dual projections with respect to the pairing (A,B) = integral A(x,y)B(y,x).
struct DualSplit {
  KernelOperator l_star;
  KernelOperator k_star;
};

inline DualSplit dual_split(const KernelOperator& a) {
  const int n = a.size();
  Eigen::MatrixXd ks = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd ls(n, n);
  for (int i = 0; i < n; ++i) {
    ls(i, i) = a.values(i, i);
    for (int j = 0; j < i; ++j) {  // j < i: the y < x half-plane
      ks(i, j) = a.values(i, j) - a.values(j, i);
      ls(i, j) = a.values(j, i);
      ls(j, i) = a.values(j, i);
    }
  }
  return DualSplit{KernelOperator(a.grid, std::move(ls)),
                   KernelOperator(a.grid, std::move(ks))};
}

// ---------------------------------------------------------------------------
// Lax right-hand side
// ---------------------------------------------------------------------------

/// 1/2 [Pi_l(K^j), K], the isospectral vector field generated by the
/// Hamiltonian tr(K^{j+1}) / (2(j+1)).  For symmetric K and j = 1 this is
/// the discrete form of the symmetric kernel evolution; the general case
/// covers the nonsymmetric flow as well.
inline KernelOperator lax_rhs(const KernelOperator& k, bool symmetric, int power) {
  if (power < 1) throw ValidationError("lax_rhs: power must be >= 1");
  if (symmetric && !is_symmetric(k, 1e-12))
    throw AsymmetryError("lax_rhs: kernel is not symmetric within 1e-12");
  const Eigen::MatrixXd kw = weighted(k);
  Eigen::MatrixXd kp = kw;
  for (int j = 1; j < power; ++j) kp = kp * kw;
  // Triangular selection commutes with the diagonal conjugation, so the
  // projection may be taken directly in weighted coordinates.
  Eigen::MatrixXd pl(kp.rows(), kp.cols());
  const int n = static_cast<int>(kp.rows());
  for (int i = 0; i < n; ++i) {
    pl(i, i) = kp(i, i);
    for (int j = 0; j < i; ++j) {
      pl(i, j) = kp(i, j) + kp(j, i);
      pl(j, i) = 0.0;
    }
  }
  Eigen::MatrixXd rhs = 0.5 * (pl * kw - kw * pl);
  return from_weighted(k.grid, rhs);
}

// ---------------------------------------------------------------------------
// Operator exponential
// ---------------------------------------------------------------------------

namespace detail {

/// exp(A) - I for a general square matrix, by scaling and squaring with a
/// series truncated when a term drops below 1e-16 of the running sum.
/// Working with the difference keeps exp(0) - I exactly zero.
inline Eigen::MatrixXd expm_delta_general(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Eigen::MatrixXd b = a / std::ldexp(1.0, squarings);

  Eigen::MatrixXd sum = b;
  Eigen::MatrixXd term = b;
  for (int j = 2; j <= 60; ++j) {
    term = (term * b) / static_cast<double>(j);
    sum += term;
    if (term.cwiseAbs().maxCoeff() <
        1e-16 * std::max(1.0, sum.cwiseAbs().maxCoeff()))
      break;
  }
  // (I + E)^2 = I + (2E + E^2), applied `squarings` times.
  for (int s = 0; s < squarings; ++s) sum = 2.0 * sum + sum * sum;
  (void)n;
  return sum;
}

/// exp(A) - I for symmetric A via eigendecomposition, using expm1 on the
/// spectrum so that small scales stay accurate.
inline Eigen::MatrixXd expm_delta_symmetric(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  Eigen::VectorXd e = es.eigenvalues().array().unaryExpr(
      [](double x) { return std::expm1(x); });
  return es.eigenvectors() * e.asDiagonal() * es.eigenvectors().transpose();
}

inline bool matrix_is_symmetric(const Eigen::MatrixXd& a, double tol) {
  const double scale = std::max(1.0, a.size() ? a.cwiseAbs().maxCoeff() : 0.0);
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

}  // namespace detail

/// Kernel of exp(scale * K) - I.  The group element is I plus the returned
/// kernel.  Symmetric inputs go through the eigendecomposition, everything
/// else through scaling-and-squaring.
inline KernelOperator exp_op(const KernelOperator& k, double scale) {
  Eigen::MatrixXd a = scale * weighted(k);
  Eigen::MatrixXd delta = detail::matrix_is_symmetric(a, 1e-12)
                              ? detail::expm_delta_symmetric(a)
                              : detail::expm_delta_general(a);
  return from_weighted(k.grid, delta);
}

}  // namespace chlax
