#pragma once

// Brute-force reference solvers shared by the unit tests and the acceptance
// runner. Each one enumerates instead of iterating, so it shares no code
// path with the solver it checks.

#include <algorithm>
#include <vector>

#include <Eigen/Dense>

#include "bmpc/qp.hpp"

namespace bmpc::oracle {

/// Best objective |Ax - b|^2 over all feasible equality-constrained
/// subproblems on column subsets.
inline double nnls_objective(const Eigen::MatrixXd & A, const Eigen::VectorXd & b)
{
  const auto n = A.cols();
  double best = b.squaredNorm();
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < n; ++j)
      if (mask & (1u << j)) cols.push_back(j);
    const Eigen::MatrixXd As = A(Eigen::all, cols);
    const Eigen::VectorXd x = As.completeOrthogonalDecomposition().solve(b);
    if ((x.array() < 0.0).any()) continue;
    best = std::min(best, (As * x - b).squaredNorm());
  }
  return best;
}

/// Box-constrained QP (A = I, P positive definite). Every assignment of
/// {free, at lower, at upper} is solved; the feasible face minimizer with the
/// smallest cost is the optimum.
inline Eigen::VectorXd box_qp(const QpProblem & qp)
{
  const int n = static_cast<int>(qp.n());
  int combos = 1;
  for (int i = 0; i < n; ++i) combos *= 3;
  Eigen::VectorXd best;
  double best_f = kInf;
  for (int c = 0; c < combos; ++c) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<int> free;
    int code = c;
    for (int i = 0; i < n; ++i, code /= 3) {
      if (code % 3 == 0) free.push_back(i);
      else x(i) = code % 3 == 1 ? qp.l(i) : qp.u(i);
    }
    if (!free.empty()) {
      const auto k = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd Pff(k, k);
      Eigen::VectorXd rhs(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        rhs(a) = -qp.q(free[static_cast<std::size_t>(a)]);
        for (int j = 0; j < n; ++j)
          if (std::find(free.begin(), free.end(), j) == free.end()) rhs(a) -= qp.P(free[static_cast<std::size_t>(a)], j) * x(j);
        for (Eigen::Index b = 0; b < k; ++b) Pff(a, b) = qp.P(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
      }
      const Eigen::VectorXd xf = Pff.llt().solve(rhs);
      for (Eigen::Index a = 0; a < k; ++a) x(free[static_cast<std::size_t>(a)]) = xf(a);
    }
    bool feasible = true;
    for (int i = 0; i < n; ++i) feasible = feasible && x(i) >= qp.l(i) - 1e-12 && x(i) <= qp.u(i) + 1e-12;
    if (!feasible) continue;
    const double f = qp.objective(x);
    if (f < best_f) {
      best_f = f;
      best = x;
    }
  }
  return best;
}

/// Random strictly convex box QP with n variables.
template <class Rng>
QpProblem random_box_qp(Rng & rng, int n)
{
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = rng.normal();
  Eigen::MatrixXd P = M * M.transpose();
  P.diagonal().array() += 0.1;
  Eigen::VectorXd q(n), lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    q(i) = 3.0 * rng.normal();
    lo(i) = rng.uniform(-2.0, 0.0);
    hi(i) = rng.uniform(0.0, 2.0);
  }
  return {P, q, Eigen::MatrixXd::Identity(n, n), lo, hi};
}

/// Minimum of `cost` over [0, 1]^N: an 11-point grid per input, then a
/// shrinking pattern search around the best node.
template <class Cost>
double grid_minimum(const Cost & cost, int N)
{
  Eigen::VectorXd best = Eigen::VectorXd::Zero(N), u(N);
  double best_J = cost(best);
  int total = 1;
  for (int k = 0; k < N; ++k) total *= 11;
  for (int c = 0; c < total; ++c) {
    int code = c;
    for (int k = 0; k < N; ++k, code /= 11) u(k) = 0.1 * (code % 11);
    const double J = cost(u);
    if (J < best_J) {
      best_J = J;
      best = u;
    }
  }
  for (double h = 0.05; h > 1e-7; h *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int k = 0; k < N; ++k)
        for (double s : {-h, h}) {
          Eigen::VectorXd v = best;
          v(k) = std::clamp(v(k) + s, 0.0, 1.0);
          const double J = cost(v);
          if (J < best_J - 1e-15) {
            best_J = J;
            best = v;
            improved = true;
          }
        }
    }
  }
  return best_J;
}

}  // namespace bmpc::oracle
