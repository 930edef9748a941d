#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bmpc/errors.hpp"
#include "bmpc/nnls.hpp"
#include "bmpc/regressors.hpp"
#include "bmpc/time_series.hpp"
#include "json.hpp"

namespace bmpc {

struct ArmaxTrainingStats
{
  std::size_t rows = 0;
  double residual_norm = 0.0;
  double rmse = 0.0;
};

/// y[k+1] = theta . [y_k..y_{k-d}, u_k..u_{k-d}, T_amb.., T_n.., I_vert one-hot..]
struct ArmaxModel
{
  RegressorConfig config;
  Eigen::VectorXd theta;
  bool nonneg = true;
  ArmaxTrainingStats stats;
  /// Actuator drive per unit valve duty for the measured_energy option,
  /// least-squares slope of energy against duty on the training data.
  double energy_gain = 0.0;

  [[nodiscard]] double coef_y(std::size_t lag) const { return theta(static_cast<Eigen::Index>(config.y_block() + lag)); }
  [[nodiscard]] double coef_u(std::size_t lag) const { return theta(static_cast<Eigen::Index>(config.u_block() + lag)); }
};

namespace detail {

inline double estimate_energy_gain(std::span<const TimeSeries> segments, const RegressorConfig & c)
{
  double num = 0.0, den = 0.0;
  for (const auto & seg : segments) {
    if (!seg.has(c.energy) || !seg.has(c.valve)) return 0.0;
    const auto q = seg[c.energy];
    const auto b = seg[c.valve];
    for (std::size_t k = 0; k < seg.length(); ++k) {
      num += q[k] * b[k];
      den += b[k] * b[k];
    }
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace detail

/// Fits on the given segments; columns are scaled to unit RMS before the
/// solve and coefficients unscaled afterwards. All-zero columns keep 0.
inline ArmaxModel fit_armax(std::span<const TimeSeries> segments, const RegressorConfig & config, bool nonneg)
{
  const auto data = build_regression_rows(segments, config);
  const Eigen::Index n = data.X.cols();
  Eigen::VectorXd scale(n);
  std::vector<Eigen::Index> used;
  for (Eigen::Index j = 0; j < n; ++j) {
    scale(j) = std::sqrt(data.X.col(j).squaredNorm() / static_cast<double>(data.X.rows()));
    if (scale(j) > 1e-12) used.push_back(j);
  }
  Eigen::MatrixXd Xs(data.X.rows(), static_cast<Eigen::Index>(used.size()));
  for (std::size_t i = 0; i < used.size(); ++i)
    Xs.col(static_cast<Eigen::Index>(i)) = data.X.col(used[i]) / scale(used[i]);

  const Eigen::VectorXd sol = nonneg ? nnls(Xs, data.y).x : least_squares(Xs, data.y);

  ArmaxModel m;
  m.config = config;
  m.nonneg = nonneg;
  m.theta = Eigen::VectorXd::Zero(n);
  for (std::size_t i = 0; i < used.size(); ++i) m.theta(used[i]) = sol(static_cast<Eigen::Index>(i)) / scale(used[i]);
  if (nonneg) m.theta = m.theta.cwiseMax(0.0);
  const Eigen::VectorXd r = data.X * m.theta - data.y;
  m.stats.rows = static_cast<std::size_t>(data.X.rows());
  m.stats.residual_norm = r.norm();
  m.stats.rmse = std::sqrt(r.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, r.size())));
  m.energy_gain = detail::estimate_energy_gain(segments, config);
  return m;
}

inline ArmaxModel fit_armax(const TimeSeries & ts, const RegressorConfig & config, bool nonneg)
{
  return fit_armax(std::span<const TimeSeries>(&ts, 1), config, nonneg);
}

/// Recursive rollout on precomputed signals. Entries of `s` after `anchor`
/// provide inputs and disturbances; their y values are ignored. For the
/// valve_times_dT option the future drive uses y[anchor] as the last
/// measured temperature. Returns y[anchor+1 .. anchor+steps].
inline std::vector<double> armax_rollout(const ArmaxModel & m, const RegressorSignals & s, std::size_t anchor, std::size_t steps)
{
  const auto & c = m.config;
  const std::size_t L = c.lags();
  if (anchor + 1 < L) throw Error(ErrorCode::TooShort, "history shorter than delta + 1");
  if (steps == 0) return {};
  if (anchor + steps > s.length())
    throw Error(ErrorCode::ForecastTooShort, "signals do not cover the prediction window");

  // Local window: y lags and actuator drives (future drives re-derived).
  const std::size_t first = anchor + 1 - L;
  const std::size_t span = L + steps;
  std::vector<double> y(span), u(span);
  for (std::size_t i = 0; i < span; ++i) {
    const std::size_t k = first + i;
    y[i] = k <= anchor ? s.y[k] : 0.0;
    if (k >= s.length()) {
      u[i] = 0.0;
      continue;
    }
    if (k > anchor && c.actuator == ActuatorOption::ValveTimesDT)
      u[i] = s.valve[k] * (s.supply[k] - s.y[anchor]);
    else
      u[i] = s.u[k];
  }
  const auto tau = static_cast<std::size_t>(c.tau);
  std::vector<double> out(steps);
  for (std::size_t step = 0; step < steps; ++step) {
    const std::size_t k = anchor + step;  // predicting k + 1
    const std::size_t ik = k - first;
    double acc = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
      const std::size_t i = k - j;
      const std::size_t ii = ik - j;
      acc += m.theta(static_cast<Eigen::Index>(c.y_block() + j)) * y[ii];
      acc += m.theta(static_cast<Eigen::Index>(c.u_block() + j)) * u[ii];
      acc += m.theta(static_cast<Eigen::Index>(c.amb_block() + j)) * s.ambient[i];
      if (c.has_neighbor()) acc += m.theta(static_cast<Eigen::Index>(c.nb_block() + j)) * s.neighbor[i];
      const auto base = static_cast<Eigen::Index>(c.solar_block() + j * tau);
      acc += m.theta.segment(base, c.tau).dot(s.solar.row(static_cast<Eigen::Index>(i)).transpose());
    }
    y[ik + 1] = acc;
    out[step] = acc;
  }
  return out;
}

/// Open-loop prediction. The last sample of `history` is the anchor; `future`
/// holds the disturbance and input channels for the following samples
/// (its output channel, if any, is ignored).
inline std::vector<double> predict_openloop(const ArmaxModel & m, const TimeSeries & history, const TimeSeries & future,
  std::size_t steps)
{
  if (steps == 0) return {};
  const auto & c = m.config;
  if (history.length() < c.lags()) throw Error(ErrorCode::TooShort, "history shorter than delta + 1");
  if (future.length() + 1 < steps) throw Error(ErrorCode::ForecastTooShort, "future shorter than steps - 1");
  const auto tail = history.slice(history.length() - c.lags(), history.length());
  const auto hs = compute_signals(tail, c);
  if (future.length() == 0) return armax_rollout(m, hs, c.lags() - 1, steps);
  const auto fs = compute_signals(future, c, hs.y.back());

  RegressorSignals s;
  auto cat = [](std::vector<double> a, const std::vector<double> & b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  s.y = cat(hs.y, fs.y);
  s.u = cat(hs.u, fs.u);
  s.ambient = cat(hs.ambient, fs.ambient);
  s.neighbor = cat(hs.neighbor, fs.neighbor);
  s.valve = cat(hs.valve, fs.valve);
  s.supply = cat(hs.supply, fs.supply);
  s.solar.resize(hs.solar.rows() + fs.solar.rows(), c.tau);
  s.solar << hs.solar, fs.solar;
  return armax_rollout(m, s, c.lags() - 1, steps);
}

inline void to_json(nlohmann::json & j, const ArmaxModel & m)
{
  j = nlohmann::json{{"kind", "armax"}, {"config", m.config}, {"nonneg", m.nonneg},
    {"theta", std::vector<double>(m.theta.data(), m.theta.data() + m.theta.size())}, {"energy_gain", m.energy_gain},
    {"stats", {{"rows", m.stats.rows}, {"residual_norm", m.stats.residual_norm}, {"rmse", m.stats.rmse}}}};
}

inline void from_json(const nlohmann::json & j, ArmaxModel & m)
{
  m.config = j.at("config").get<RegressorConfig>();
  m.nonneg = j.value("nonneg", true);
  const auto th = j.at("theta").get<std::vector<double>>();
  if (th.size() != m.config.degrees_of_freedom())
    throw Error(ErrorCode::ConfigError, "theta length does not match config");
  m.theta = Eigen::Map<const Eigen::VectorXd>(th.data(), static_cast<Eigen::Index>(th.size()));
  m.energy_gain = j.value("energy_gain", 0.0);
  if (j.contains("stats")) {
    const auto & s = j.at("stats");
    m.stats.rows = s.value("rows", std::size_t{0});
    m.stats.residual_norm = s.value("residual_norm", 0.0);
    m.stats.rmse = s.value("rmse", 0.0);
  }
}

}  // namespace bmpc
