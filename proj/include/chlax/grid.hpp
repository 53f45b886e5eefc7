#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>

#include "chlax/errors.hpp"

namespace chlax {

enum class Scheme { Trapezoid, GaussLegendre, Unit };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::Trapezoid: return "trapezoid";
    case Scheme::GaussLegendre: return "gauss-legendre";
    case Scheme::Unit: return "unit";
  }
  return "unknown";
}

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "trapezoid") return Scheme::Trapezoid;
  if (s == "gauss-legendre") return Scheme::GaussLegendre;
  if (s == "unit") return Scheme::Unit;
  throw ValidationError("unknown quadrature scheme: " + s);
}

/// Quadrature grid on the truncated line [-L, L].
///
/// Nodes are strictly increasing, weights positive.  All integral operators
/// in the library are Nystrom-discretized against this grid, so the weight
/// vector (and its square roots, cached here) shows up in every composition.
/// Immutable after construction; share freely across threads.
struct Grid {
  double half_width = 0.0;
  Scheme scheme = Scheme::Trapezoid;
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
  Eigen::VectorXd sqrt_w;
  Eigen::VectorXd inv_sqrt_w;

  int size() const { return static_cast<int>(nodes.size()); }
  double spacing() const {
    return size() > 1 ? nodes[1] - nodes[0] : 2.0 * half_width;
  }
};

using GridPtr = std::shared_ptr<const Grid>;

namespace detail {

inline void finish_grid(Grid& g) {
  const int n = g.size();
  for (int i = 0; i + 1 < n; ++i)
    if (!(g.nodes[i] < g.nodes[i + 1]))
      throw ValidationError("grid nodes must be strictly increasing");
  if ((g.weights.array() <= 0.0).any())
    throw ValidationError("grid weights must be positive");
  g.sqrt_w = g.weights.array().sqrt();
  g.inv_sqrt_w = g.sqrt_w.array().inverse();
}

/// Nodes/weights of the n-point Gauss-Legendre rule on [-1, 1] via
/// Golub-Welsch: eigen-decompose the Jacobi matrix of the Legendre
/// three-term recurrence.
inline void gauss_legendre_reference(int n, Eigen::VectorXd& x,
                                     Eigen::VectorXd& w) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  x = es.eigenvalues();
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    w[i] = 2.0 * v0 * v0;
  }
}

}  // namespace detail

/// Builds a quadrature grid on [-L, L].  Trapezoid uses uniform nodes
/// including both endpoints; Gauss-Legendre uses the classical rule mapped
/// from [-1, 1].
inline GridPtr make_grid(double half_width, int n, Scheme scheme) {
  if (n < 2) throw ValidationError("make_grid: need at least 2 nodes");
  if (!(half_width > 0.0)) throw ValidationError("make_grid: L must be > 0");
  auto g = std::make_shared<Grid>();
  g->half_width = half_width;
  g->scheme = scheme;
  switch (scheme) {
    case Scheme::Trapezoid: {
      const double h = 2.0 * half_width / (n - 1);
      g->nodes = Eigen::VectorXd::LinSpaced(n, -half_width, half_width);
      g->weights = Eigen::VectorXd::Constant(n, h);
      g->weights[0] = 0.5 * h;
      g->weights[n - 1] = 0.5 * h;
      break;
    }
    case Scheme::GaussLegendre: {
      Eigen::VectorXd x, w;
      detail::gauss_legendre_reference(n, x, w);
      g->nodes = half_width * x;
      g->weights = half_width * w;
      break;
    }
    case Scheme::Unit:
      throw ValidationError("make_grid: unit-weight grids take explicit nodes");
  }
  detail::finish_grid(*g);
  return g;
}

/// Unit-weight grid over explicit (strictly increasing) nodes.  Used for the
/// finite-peakon particle system, where "nodes" are particle labels and the
/// operator algebra runs with weight 1 per particle.
inline GridPtr make_particle_grid(const Eigen::VectorXd& nodes) {
  if (nodes.size() < 1) throw ValidationError("make_particle_grid: empty");
  auto g = std::make_shared<Grid>();
  g->half_width = std::max(std::abs(nodes[0]), std::abs(nodes[nodes.size() - 1]));
  g->scheme = Scheme::Unit;
  g->nodes = nodes;
  g->weights = Eigen::VectorXd::Ones(nodes.size());
  detail::finish_grid(*g);
  return g;
}

inline bool same_grid(const GridPtr& a, const GridPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return a->scheme == b->scheme && a->half_width == b->half_width &&
         a->nodes.size() == b->nodes.size() && a->nodes == b->nodes &&
         a->weights == b->weights;
}

inline void require_same_grid(const GridPtr& a, const GridPtr& b,
                              const char* where) {
  if (!same_grid(a, b))
    throw GridMismatchError(std::string(where) + ": operands on different grids");
}

/// A scalar function sampled at the grid nodes.
struct GridFunction {
  GridPtr grid;
  Eigen::VectorXd values;

  GridFunction() = default;
  GridFunction(GridPtr g, Eigen::VectorXd v) : grid(std::move(g)), values(std::move(v)) {
    if (grid && values.size() != grid->size())
      throw ValidationError("GridFunction: sample count != node count");
  }
};

template <class F>
GridFunction sample(const GridPtr& grid, F&& f) {
  Eigen::VectorXd v(grid->size());
  for (int i = 0; i < grid->size(); ++i) v[i] = f(grid->nodes[i]);
  return GridFunction(grid, std::move(v));
}

/// Quadrature of a sampled function: sum_i w_i f(x_i).
inline double integrate(const GridFunction& f) {
  return f.grid->weights.dot(f.values);
}

/// Weighted L2 inner product of two sampled functions.
inline double inner(const GridFunction& f, const GridFunction& g) {
  require_same_grid(f.grid, g.grid, "inner");
  return (f.grid->weights.array() * f.values.array() * g.values.array()).sum();
}

}  // namespace chlax
