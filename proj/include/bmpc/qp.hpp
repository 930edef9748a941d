#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "bmpc/errors.hpp"

namespace bmpc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// min 1/2 x'Px + q'x  subject to  l <= Ax <= u. Equality rows have l == u.
struct QpProblem
{
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd l, u;

  [[nodiscard]] Eigen::Index n() const { return q.size(); }
  [[nodiscard]] Eigen::Index m() const { return A.rows(); }
  [[nodiscard]] double objective(const Eigen::VectorXd & x) const { return 0.5 * x.dot(P * x) + q.dot(x); }

  void validate() const
  {
    const auto nn = n();
    if (P.rows() != nn || P.cols() != nn || A.cols() != nn || l.size() != A.rows() || u.size() != A.rows())
      throw Error(ErrorCode::DimensionMismatch, "inconsistent QP dimensions");
    for (Eigen::Index i = 0; i < l.size(); ++i)
      if (l(i) > u(i)) throw Error(ErrorCode::ConfigError, "QP bounds cross on row " + std::to_string(i));
    const double scale = std::max(1.0, P.cwiseAbs().maxCoeff());
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) throw Error(ErrorCode::NonConvexCost, "P is not symmetric");
    if (nn > 0) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -1e-9 * scale) throw Error(ErrorCode::NonConvexCost, "P is not positive semidefinite");
    }
  }
};

struct QpSettings
{
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  int max_iter = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool polish = true;
  int check_every = 10;
  int adapt_every = 50;
};

struct QpResult
{
  Eigen::VectorXd x;
  Eigen::VectorXd y;  ///< multipliers of the rows of A
  int iterations = 0;
  double objective = 0.0;
  double prim_res = 0.0;
  double dual_res = 0.0;
  bool polished = false;
};

namespace detail {

inline double inf_norm(const Eigen::VectorXd & v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

inline Eigen::VectorXd clamp_box(const Eigen::VectorXd & v, const Eigen::VectorXd & l, const Eigen::VectorXd & u)
{
  return v.cwiseMax(l).cwiseMin(u);
}

/// Solves the reduced KKT system on the guessed active set and keeps the
/// result if it is feasible and at least as good on the residuals.
inline bool polish(const QpProblem & qp, QpResult & r, double tol)
{
  const auto n = qp.n();
  std::vector<Eigen::Index> rows;
  std::vector<double> rhs;
  for (Eigen::Index i = 0; i < qp.m(); ++i) {
    const bool eq = qp.l(i) == qp.u(i);
    const bool lo = std::isfinite(qp.l(i)) && r.y(i) < -tol;
    const bool up = std::isfinite(qp.u(i)) && r.y(i) > tol;
    if (eq || lo) {
      rows.push_back(i);
      rhs.push_back(qp.l(i));
    } else if (up) {
      rows.push_back(i);
      rhs.push_back(qp.u(i));
    }
  }
  const auto k = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
  Eigen::VectorXd b(n + k);
  const double delta = 1e-9;
  K.topLeftCorner(n, n) = qp.P;
  K.topLeftCorner(n, n).diagonal().array() += delta;
  for (Eigen::Index j = 0; j < k; ++j) {
    K.block(n + j, 0, 1, n) = qp.A.row(rows[static_cast<std::size_t>(j)]);
    K.block(0, n + j, n, 1) = qp.A.row(rows[static_cast<std::size_t>(j)]).transpose();
    K(n + j, n + j) = -delta;
    b(n + j) = rhs[static_cast<std::size_t>(j)];
  }
  b.head(n) = -qp.q;
  // Factor the regularized matrix, refine against the exact one.
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  K.topLeftCorner(n, n).diagonal().array() -= delta;
  K.bottomRightCorner(k, k).diagonal().array() += delta;
  Eigen::VectorXd sol = lu.solve(b);
  for (int it = 0; it < 5; ++it) sol += lu.solve(b - K * sol);
  if (!sol.allFinite()) return false;

  Eigen::VectorXd x = sol.head(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(qp.m());
  for (Eigen::Index j = 0; j < k; ++j) y(rows[static_cast<std::size_t>(j)]) = sol(n + j);
  const Eigen::VectorXd Ax = qp.A * x;
  const double prim = inf_norm(Ax - clamp_box(Ax, qp.l, qp.u));
  const double dual = inf_norm(qp.P * x + qp.q + qp.A.transpose() * y);
  // Multipliers must have the sign of the bound they hold.
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto i = rows[static_cast<std::size_t>(j)];
    if (qp.l(i) == qp.u(i)) continue;
    const bool at_lower = rhs[static_cast<std::size_t>(j)] == qp.l(i);
    if (at_lower && y(i) > tol) return false;
    if (!at_lower && y(i) < -tol) return false;
  }
  if (prim > std::max(r.prim_res, tol) || dual > std::max(r.dual_res, tol)) return false;
  r.x = x;
  r.y = y;
  r.prim_res = prim;
  r.dual_res = dual;
  r.polished = true;
  return true;
}

}  // namespace detail

/// OSQP-style ADMM with a cached dense factorization, per-row step sizes
/// (stiffer on equality rows), periodic step-size adaptation and an optional
/// active-set polish.
inline QpResult solve_qp(const QpProblem & qp, const QpSettings & s = {})
{
  qp.validate();
  const auto n = qp.n();
  const auto m = qp.m();
  QpResult r;
  r.x = Eigen::VectorXd::Zero(n);
  r.y = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd z = detail::clamp_box(Eigen::VectorXd::Zero(m), qp.l, qp.u);

  double rho = s.rho;
  Eigen::VectorXd rho_vec(m);
  auto set_rho = [&] {
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!std::isfinite(qp.l(i)) && !std::isfinite(qp.u(i))) rho_vec(i) = 1e-6;
      else if (qp.l(i) == qp.u(i)) rho_vec(i) = 1e3 * rho;
      else rho_vec(i) = rho;
    }
  };
  Eigen::LDLT<Eigen::MatrixXd> kkt;
  auto factor = [&] {
    set_rho();
    Eigen::MatrixXd M = qp.P + qp.A.transpose() * rho_vec.asDiagonal() * qp.A;
    M.diagonal().array() += s.sigma;
    kkt.compute(M);
  };
  factor();

  Eigen::VectorXd x = r.x, y = r.y;
  bool converged = false;
  for (int it = 1; it <= s.max_iter; ++it) {
    const Eigen::VectorXd rhs = s.sigma * x - qp.q + qp.A.transpose() * (rho_vec.cwiseProduct(z) - y);
    const Eigen::VectorXd xt = kkt.solve(rhs);
    const Eigen::VectorXd zt = qp.A * xt;
    x = s.alpha * xt + (1.0 - s.alpha) * x;
    const Eigen::VectorXd zr = s.alpha * zt + (1.0 - s.alpha) * z;
    const Eigen::VectorXd zn = detail::clamp_box(zr + y.cwiseQuotient(rho_vec), qp.l, qp.u);
    y += rho_vec.cwiseProduct(zr - zn);
    z = zn;
    r.iterations = it;

    if (it % s.check_every == 0 || it == s.max_iter) {
      const Eigen::VectorXd Ax = qp.A * x;
      const Eigen::VectorXd Px = qp.P * x;
      const Eigen::VectorXd Aty = qp.A.transpose() * y;
      const double prim = detail::inf_norm(Ax - z);
      const double dual = detail::inf_norm(Px + qp.q + Aty);
      const double eps_p = s.eps_abs + s.eps_rel * std::max(detail::inf_norm(Ax), detail::inf_norm(z));
      const double eps_d = s.eps_abs + s.eps_rel * std::max({detail::inf_norm(Px), detail::inf_norm(Aty), detail::inf_norm(qp.q)});
      r.prim_res = prim;
      r.dual_res = dual;
      if (prim <= eps_p && dual <= eps_d) {
        converged = true;
        break;
      }
      if (s.adapt_every > 0 && it % s.adapt_every == 0) {
        const double pn = prim / std::max(1e-30, std::max(detail::inf_norm(Ax), detail::inf_norm(z)));
        const double dn = dual / std::max(1e-30, std::max({detail::inf_norm(Px), detail::inf_norm(Aty), detail::inf_norm(qp.q)}));
        const double ratio = std::sqrt(pn / std::max(dn, 1e-30));
        const double next = std::clamp(rho * ratio, 1e-6, 1e6);
        if (next > 5.0 * rho || next < 0.2 * rho) {
          rho = next;
          factor();
        }
      }
    }
  }
  r.x = x;
  r.y = y;
  if (s.polish) detail::polish(qp, r, std::max(s.eps_abs, 1e-9));
  if (!converged && !r.polished)
    throw Error(ErrorCode::MaxIterationsExceeded, "ADMM did not converge in " + std::to_string(s.max_iter) + " iterations");
  r.objective = qp.objective(r.x);
  return r;
}

}  // namespace bmpc
