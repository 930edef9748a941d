#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "bmpc/errors.hpp"

namespace bmpc {

struct NnlsResult
{
  Eigen::VectorXd x;
  int iterations = 0;
  double residual_norm = 0.0;
};

namespace detail {

inline Eigen::VectorXd solve_on_columns(const Eigen::MatrixXd & A, const Eigen::VectorXd & b, const std::vector<Eigen::Index> & cols)
{
  Eigen::MatrixXd sub(A.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = A.col(cols[i]);
  return sub.colPivHouseholderQr().solve(b);
}

}  // namespace detail

/// Lawson-Hanson active-set solver for min ||Ax - b|| subject to x >= 0.
/// The outer loop is capped at 10 * columns iterations.
inline NnlsResult nnls(const Eigen::MatrixXd & A, const Eigen::VectorXd & b)
{
  if (A.rows() != b.size()) throw Error(ErrorCode::DimensionMismatch, "nnls: rows of A and b differ");
  const Eigen::Index n = A.cols();
  NnlsResult res;
  res.x = Eigen::VectorXd::Zero(n);
  if (n == 0) {
    res.residual_norm = b.norm();
    return res;
  }

  const double tol = std::max(1e-300, 1e-13 * A.norm() * std::max(b.norm(), 1.0));
  const int max_iter = 10 * static_cast<int>(n);

  std::vector<char> passive(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd w = A.transpose() * (b - A * x);

  auto passive_set = [&] {
    std::vector<Eigen::Index> p;
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[static_cast<std::size_t>(j)]) p.push_back(j);
    return p;
  };

  std::vector<char> blocked(static_cast<std::size_t>(n), 0);
  while (true) {
    Eigen::Index t = -1;
    double wmax = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (!passive[ju] && !blocked[ju] && w(j) > wmax) {
        wmax = w(j);
        t = j;
      }
    }
    if (t < 0) break;
    if (++res.iterations > max_iter)
      throw Error(ErrorCode::MaxIterationsExceeded, "nnls did not converge in " + std::to_string(max_iter) + " iterations");
    passive[static_cast<std::size_t>(t)] = 1;

    bool first = true;
    while (true) {
      const auto P = passive_set();
      const Eigen::VectorXd z = detail::solve_on_columns(A, b, P);
      bool all_pos = true;
      for (Eigen::Index i = 0; i < z.size(); ++i)
        if (z(i) <= 0.0) all_pos = false;
      if (all_pos) {
        x.setZero();
        for (std::size_t i = 0; i < P.size(); ++i) x(P[i]) = z(static_cast<Eigen::Index>(i));
        break;
      }
      if (first) {
        // The entering column itself came back non-positive: numerically it
        // cannot improve the objective. Skip it for this round.
        const auto it = std::find(P.begin(), P.end(), t);
        if (it != P.end() && z(it - P.begin()) <= 0.0) {
          passive[static_cast<std::size_t>(t)] = 0;
          blocked[static_cast<std::size_t>(t)] = 1;
          break;
        }
      }
      first = false;
      double alpha = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < P.size(); ++i) {
        const double zi = z(static_cast<Eigen::Index>(i));
        if (zi <= 0.0) {
          const double xi = x(P[i]);
          alpha = std::min(alpha, xi / (xi - zi));
        }
      }
      for (std::size_t i = 0; i < P.size(); ++i) {
        const Eigen::Index j = P[i];
        x(j) += alpha * (z(static_cast<Eigen::Index>(i)) - x(j));
        if (x(j) <= 1e-15 * std::max(1.0, std::abs(z(static_cast<Eigen::Index>(i))))) {
          x(j) = 0.0;
          passive[static_cast<std::size_t>(j)] = 0;
        }
      }
    }
    w = A.transpose() * (b - A * x);
    if (!blocked[static_cast<std::size_t>(t)]) std::fill(blocked.begin(), blocked.end(), 0);
  }

  res.x = x;
  res.residual_norm = (A * x - b).norm();
  return res;
}

/// Unconstrained least squares; zero columns get coefficient 0.
inline Eigen::VectorXd least_squares(const Eigen::MatrixXd & A, const Eigen::VectorXd & b)
{
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  return cod.solve(b);
}

}  // namespace bmpc
