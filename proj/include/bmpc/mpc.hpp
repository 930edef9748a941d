#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "bmpc/armax.hpp"
#include "bmpc/errors.hpp"
#include "bmpc/forest.hpp"
#include "bmpc/icnn.hpp"
#include "bmpc/mode.hpp"
#include "bmpc/plant.hpp"
#include "bmpc/qp.hpp"
#include "bmpc/random.hpp"
#include "bmpc/regressors.hpp"
#include "bmpc/simulation.hpp"
#include "bmpc/time_series.hpp"

namespace bmpc {

/// Comfort band overriding the default between two hours of the day (UTC).
/// from > to wraps over midnight.
struct ComfortWindow
{
  double from = 0.0;
  double to = 24.0;
  double y_min = 21.0;
  double y_max = 25.0;

  [[nodiscard]] bool contains(double hour) const
  {
    return from <= to ? (hour >= from && hour < to) : (hour >= from || hour < to);
  }
};

/// Step function of time of day; the first matching window wins.
struct ComfortSchedule
{
  double y_min = 21.0;
  double y_max = 25.0;
  std::vector<ComfortWindow> windows;

  [[nodiscard]] std::pair<double, double> at(Timestamp t) const
  {
    const double h = hour_of_day(t);
    for (const auto & w : windows)
      if (w.contains(h)) return {w.y_min, w.y_max};
    return {y_min, y_max};
  }

  void validate() const
  {
    if (!(y_min <= y_max)) throw Error(ErrorCode::ConfigError, "comfort.y_min must not exceed comfort.y_max");
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const auto & w = windows[i];
      const std::string at = "comfort.windows[" + std::to_string(i) + "]";
      if (!(w.y_min <= w.y_max)) throw Error(ErrorCode::ConfigError, at + ": y_min must not exceed y_max");
      if (w.from < 0.0 || w.from > 24.0 || w.to < 0.0 || w.to > 24.0)
        throw Error(ErrorCode::ConfigError, at + ": hours must lie in [0, 24]");
    }
  }
};

struct MpcConfig
{
  int N = 14;
  double R = 1.0;
  double lambda = 100.0;
  Seconds step{1800};
  ComfortSchedule comfort;
  double u_min = 0.0;
  double u_max = 1.0;
  ThermalMode mode = ThermalMode::Heating;
  double backoff = 0.0;  ///< K, planning margin inside the comfort band
  bool allow_nonconvex_lower_bound = false;
  double forecast_sigma = 0.0;  ///< K, white noise on the ambient forecast
  int icnn_restarts = 5;
  std::uint64_t seed = 0;
  QpSettings qp;

  void validate() const
  {
    if (N < 1) throw Error(ErrorCode::ConfigError, "N must be >= 1");
    if (R < 0.0) throw Error(ErrorCode::ConfigError, "R must be >= 0");
    if (!(lambda > 0.0)) throw Error(ErrorCode::ConfigError, "lambda must be > 0");
    if (step.count() <= 0 || step.count() % 60 != 0) throw Error(ErrorCode::ConfigError, "control_step_s must be a positive multiple of 60");
    if (!(u_min <= u_max) || u_min < 0.0 || u_max > 1.0) throw Error(ErrorCode::ConfigError, "need 0 <= u_min <= u_max <= 1");
    if (backoff < 0.0) throw Error(ErrorCode::ConfigError, "backoff must be >= 0");
    if (forecast_sigma < 0.0) throw Error(ErrorCode::ConfigError, "forecast_sigma must be >= 0");
    if (icnn_restarts < 1) throw Error(ErrorCode::ConfigError, "icnn_restarts must be >= 1");
    comfort.validate();
  }
};

inline void to_json(nlohmann::json & j, const ComfortWindow & w)
{
  j = nlohmann::json{{"from", w.from}, {"to", w.to}, {"y_min", w.y_min}, {"y_max", w.y_max}};
}

inline void from_json(const nlohmann::json & j, ComfortWindow & w)
{
  w.from = j.at("from").get<double>();
  w.to = j.at("to").get<double>();
  w.y_min = j.at("y_min").get<double>();
  w.y_max = j.at("y_max").get<double>();
}

inline void to_json(nlohmann::json & j, const ComfortSchedule & c)
{
  j = nlohmann::json{{"y_min", c.y_min}, {"y_max", c.y_max}, {"windows", c.windows}};
}

inline void from_json(const nlohmann::json & j, ComfortSchedule & c)
{
  c.y_min = j.value("y_min", c.y_min);
  c.y_max = j.value("y_max", c.y_max);
  if (j.contains("windows")) c.windows = j.at("windows").get<std::vector<ComfortWindow>>();
}

inline void to_json(nlohmann::json & j, const MpcConfig & c)
{
  j = nlohmann::json{{"N", c.N}, {"R", c.R}, {"lambda", c.lambda}, {"control_step_s", c.step.count()},
    {"comfort", c.comfort}, {"u_min", c.u_min}, {"u_max", c.u_max}, {"mode", to_string(c.mode)},
    {"backoff", c.backoff}, {"allow_nonconvex_lower_bound", c.allow_nonconvex_lower_bound},
    {"forecast_sigma", c.forecast_sigma}, {"icnn_restarts", c.icnn_restarts}, {"seed", c.seed},
    {"qp", {{"eps_abs", c.qp.eps_abs}, {"eps_rel", c.qp.eps_rel}, {"max_iter", c.qp.max_iter}}}};
}

inline void from_json(const nlohmann::json & j, MpcConfig & c)
{
  static const std::vector<std::string> known = {"N", "R", "lambda", "control_step_s", "comfort", "u_min", "u_max",
    "mode", "backoff", "allow_nonconvex_lower_bound", "forecast_sigma", "icnn_restarts", "seed", "qp"};
  for (const auto & [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw Error(ErrorCode::ConfigError, "unknown MPC config field '" + k + "'");
  c.N = j.value("N", c.N);
  c.R = j.value("R", c.R);
  c.lambda = j.value("lambda", c.lambda);
  if (j.contains("control_step_s")) c.step = Seconds{j.at("control_step_s").get<std::int64_t>()};
  if (j.contains("comfort")) c.comfort = j.at("comfort").get<ComfortSchedule>();
  c.u_min = j.value("u_min", c.u_min);
  c.u_max = j.value("u_max", c.u_max);
  if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
  c.backoff = j.value("backoff", c.backoff);
  c.allow_nonconvex_lower_bound = j.value("allow_nonconvex_lower_bound", c.allow_nonconvex_lower_bound);
  c.forecast_sigma = j.value("forecast_sigma", c.forecast_sigma);
  c.icnn_restarts = j.value("icnn_restarts", c.icnn_restarts);
  c.seed = j.value("seed", c.seed);
  if (j.contains("qp")) {
    const auto & q = j.at("qp");
    c.qp.eps_abs = q.value("eps_abs", c.qp.eps_abs);
    c.qp.eps_rel = q.value("eps_rel", c.qp.eps_rel);
    c.qp.max_iter = q.value("max_iter", c.qp.max_iter);
  }
  c.validate();
}

// ---------------------------------------------------------------------------
// Problem layout and assembly

/// Decision vector (u_0..u_{N-1}, y_1..y_N, eps_1..eps_N) for one zone.
struct QpLayout
{
  int N = 1;
  int outputs = 1;

  [[nodiscard]] Eigen::Index u(int k) const { return k; }
  [[nodiscard]] Eigen::Index y(int k) const { return N + (k - 1); }    ///< k = 1..N
  [[nodiscard]] Eigen::Index eps(int k) const { return 2 * N + (k - 1); }  ///< k = 1..N
  /// Inputs, outputs and one slack per output and step.
  [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(N) * (1 + 2 * outputs); }
};

/// Linear prediction over the horizon:
///   y_k = sum_j Ay(k,j) y_j + sum_j Bu(k,j) u_j + d_k,   k = 1..N (row k-1),
/// with Ay strictly lower triangular.
struct HorizonDynamics
{
  Eigen::MatrixXd Ay;
  Eigen::MatrixXd Bu;
  Eigen::VectorXd d;

  [[nodiscard]] int horizon() const { return static_cast<int>(d.size()); }

  /// Outputs for a given input sequence.
  [[nodiscard]] Eigen::VectorXd simulate(const Eigen::VectorXd & u) const
  {
    Eigen::VectorXd y = Bu * u + d;
    for (Eigen::Index k = 0; k < y.size(); ++k) y(k) += Ay.row(k).head(k).dot(y.head(k));
    return y;
  }
};

struct OutputBounds
{
  std::vector<double> y_min, y_max;  ///< per step k = 1..N, back-off applied
};

/// Bounds at the boundary times window[anchor + k], k = 1..N.
inline OutputBounds horizon_bounds(const TimeSeries & window, std::size_t anchor, const MpcConfig & cfg)
{
  OutputBounds b;
  for (int k = 1; k <= cfg.N; ++k) {
    const auto [lo, hi] = cfg.comfort.at(window.time_at(anchor + static_cast<std::size_t>(k)));
    b.y_min.push_back(lo + cfg.backoff);
    b.y_max.push_back(std::max(lo + cfg.backoff, hi - cfg.backoff));
  }
  return b;
}

struct MpcQp
{
  QpProblem qp;
  QpLayout layout;
};

/// min sum R u_k^2 + lambda eps_k  s.t. dynamics, y_k + eps_k >= y_min,
/// y_k - eps_k <= y_max, eps >= 0, u in [u_min, u_max].
inline MpcQp assemble_qp(const HorizonDynamics & dyn, const OutputBounds & b, const MpcConfig & cfg)
{
  const int N = dyn.horizon();
  if (N != cfg.N || b.y_min.size() != static_cast<std::size_t>(N) || b.y_max.size() != static_cast<std::size_t>(N))
    throw Error(ErrorCode::DimensionMismatch, "horizon mismatch between dynamics, bounds and config");
  const QpLayout L{N, 1};
  const Eigen::Index n = L.size();
  const Eigen::Index m = 5 * N;
  MpcQp out;
  out.layout = L;
  auto & qp = out.qp;
  qp.P = Eigen::MatrixXd::Zero(n, n);
  qp.q = Eigen::VectorXd::Zero(n);
  qp.A = Eigen::MatrixXd::Zero(m, n);
  qp.l.resize(m);
  qp.u.resize(m);
  for (int k = 0; k < N; ++k) qp.P(L.u(k), L.u(k)) = 2.0 * cfg.R;
  for (int k = 1; k <= N; ++k) qp.q(L.eps(k)) = cfg.lambda;

  Eigen::Index r = 0;
  for (int k = 1; k <= N; ++k, ++r) {  // dynamics
    qp.A(r, L.y(k)) = 1.0;
    for (int j = 1; j < k; ++j) qp.A(r, L.y(j)) = -dyn.Ay(k - 1, j - 1);
    for (int j = 0; j < N; ++j) qp.A(r, L.u(j)) = -dyn.Bu(k - 1, j);
    qp.l(r) = qp.u(r) = dyn.d(k - 1);
  }
  for (int k = 1; k <= N; ++k, ++r) {  // lower comfort
    qp.A(r, L.y(k)) = 1.0;
    qp.A(r, L.eps(k)) = 1.0;
    qp.l(r) = b.y_min[static_cast<std::size_t>(k - 1)];
    qp.u(r) = kInf;
  }
  for (int k = 1; k <= N; ++k, ++r) {  // upper comfort
    qp.A(r, L.y(k)) = 1.0;
    qp.A(r, L.eps(k)) = -1.0;
    qp.l(r) = -kInf;
    qp.u(r) = b.y_max[static_cast<std::size_t>(k - 1)];
  }
  for (int k = 1; k <= N; ++k, ++r) {  // slack sign
    qp.A(r, L.eps(k)) = 1.0;
    qp.l(r) = 0.0;
    qp.u(r) = kInf;
  }
  for (int k = 0; k < N; ++k, ++r) {  // input box
    qp.A(r, L.u(k)) = 1.0;
    qp.l(r) = cfg.u_min;
    qp.u(r) = cfg.u_max;
  }
  return out;
}

namespace detail {

inline void require_window(const TimeSeries & window, std::size_t anchor, std::size_t history, int N)
{
  if (anchor < history) throw Error(ErrorCode::TooShort, "history shorter than the model lags");
  if (anchor + static_cast<std::size_t>(N) > window.length())
    throw Error(ErrorCode::ForecastTooShort, "forecast covers fewer than N steps");
}

}  // namespace detail

/// ARMAX prediction is recursive: future outputs feed the autoregressive
/// part as decision variables.
inline HorizonDynamics armax_dynamics(const ArmaxModel & m, const TimeSeries & window, std::size_t anchor, int N,
  ThermalMode mode)
{
  const auto & c = m.config;
  const std::size_t L = c.lags();
  detail::require_window(window, anchor, L - 1, N);
  const auto s = compute_signals(window, c);
  const double y0 = s.y[anchor];
  auto gain = [&](std::size_t i) {
    switch (c.actuator) {
      case ActuatorOption::ValveTimesDT: return s.supply[i] - y0;
      case ActuatorOption::ValveOnly: return mode == ThermalMode::Heating ? 1.0 : -1.0;
      case ActuatorOption::MeasuredEnergy: return m.energy_gain;
    }
    return 0.0;
  };
  HorizonDynamics dyn;
  dyn.Ay = Eigen::MatrixXd::Zero(N, N);
  dyn.Bu = Eigen::MatrixXd::Zero(N, N);
  dyn.d = Eigen::VectorXd::Zero(N);
  const auto tau = static_cast<std::size_t>(c.tau);
  for (int k = 0; k < N; ++k) {  // predicting y_{k+1} from sample anchor + k
    const std::size_t t = anchor + static_cast<std::size_t>(k);
    double d = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
      const std::size_t i = t - j;
      const double ty = m.theta(static_cast<Eigen::Index>(c.y_block() + j));
      const double tu = m.theta(static_cast<Eigen::Index>(c.u_block() + j));
      if (i <= anchor) d += ty * s.y[i];
      else dyn.Ay(k, static_cast<Eigen::Index>(i - anchor - 1)) += ty;
      if (i < anchor) d += tu * s.u[i];
      else dyn.Bu(k, static_cast<Eigen::Index>(i - anchor)) += tu * gain(i);
      d += m.theta(static_cast<Eigen::Index>(c.amb_block() + j)) * s.ambient[i];
      if (c.has_neighbor()) d += m.theta(static_cast<Eigen::Index>(c.nb_block() + j)) * s.neighbor[i];
      const auto base = static_cast<Eigen::Index>(c.solar_block() + j * tau);
      d += m.theta.segment(base, c.tau).dot(s.solar.row(static_cast<Eigen::Index>(i)).transpose());
    }
    dyn.d(k) = d;
  }
  return dyn;
}

/// Per-step forests give y_k = y_0 + w_k' u_{0..k-1} + b_k directly.
inline HorizonDynamics rf_dynamics(const RfModel & m, const TimeSeries & window, std::size_t anchor, int N)
{
  if (N > m.horizon()) throw Error(ErrorCode::ConfigError, "MPC horizon exceeds the forest horizon");
  detail::require_window(window, anchor, static_cast<std::size_t>(m.config.delta), N);
  const auto s = step_signals(window, m.config);
  HorizonDynamics dyn;
  dyn.Ay = Eigen::MatrixXd::Zero(N, N);
  dyn.Bu = Eigen::MatrixXd::Zero(N, N);
  dyn.d = Eigen::VectorXd::Zero(N);
  for (int k = 1; k <= N; ++k) {
    const auto & f = m.steps.at(static_cast<std::size_t>(k - 1));
    if (f.trees.empty()) throw Error(ErrorCode::ConfigError, "step model " + std::to_string(k) + " was not fitted");
    std::vector<double> xd(f.spec.n_d());
    step_features_d(s, anchor, f.spec, xd);
    const auto map = extract_affine(f, xd);
    dyn.Bu.row(k - 1).head(k) = map.w.transpose();
    dyn.d(k - 1) = s.y[anchor] + map.b;
  }
  return dyn;
}

inline MpcQp build_qp(const ArmaxModel & m, const TimeSeries & window, std::size_t anchor, const MpcConfig & cfg)
{
  cfg.validate();
  return assemble_qp(armax_dynamics(m, window, anchor, cfg.N, cfg.mode), horizon_bounds(window, anchor, cfg), cfg);
}

inline MpcQp build_qp(const RfModel & m, const TimeSeries & window, std::size_t anchor, const MpcConfig & cfg)
{
  cfg.validate();
  return assemble_qp(rf_dynamics(m, window, anchor, cfg.N), horizon_bounds(window, anchor, cfg), cfg);
}

// ---------------------------------------------------------------------------
// Solutions

struct MpcSolution
{
  std::vector<double> u, y, eps;
  double objective = 0.0;
  int iterations = 0;
  double solve_time_s = 0.0;
};

inline MpcSolution solve_qp(const MpcQp & p, const QpSettings & s = {})
{
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = solve_qp(p.qp, s);
  MpcSolution out;
  const auto & L = p.layout;
  for (int k = 0; k < L.N; ++k) out.u.push_back(std::clamp(r.x(L.u(k)), p.qp.l(4 * L.N + k), p.qp.u(4 * L.N + k)));
  for (int k = 1; k <= L.N; ++k) out.y.push_back(r.x(L.y(k)));
  for (int k = 1; k <= L.N; ++k) out.eps.push_back(std::max(0.0, r.x(L.eps(k))));
  out.objective = r.objective;
  out.iterations = r.iterations;
  out.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// ICNN: projected gradient on the slack-eliminated objective
//   J(u) = sum R u_k^2 + lambda sum max(0, y_k(u) - y_max,k)
// with y(u) the recursive network prediction. A smoothed hinge with a
// decreasing width carries the iteration; candidates are ranked on the exact J.

namespace detail {

struct SmoothHinge
{
  double mu;
  [[nodiscard]] double value(double r) const
  {
    if (r <= 0.0) return 0.0;
    if (r < mu) return 0.5 * r * r / mu;
    return r - 0.5 * mu;
  }
  [[nodiscard]] double slope(double r) const
  {
    if (r <= 0.0) return 0.0;
    if (r < mu) return r / mu;
    return 1.0;
  }
};

class IcnnHorizon
{
public:
  IcnnHorizon(const IcnnThermalModel & m, const TimeSeries & window, std::size_t anchor, const MpcConfig & cfg,
    bool lower)
    : m_(m), cfg_(cfg), lower_(lower), N_(cfg.N)
  {
    require_window(window, anchor, 1, cfg.N);
    s_ = icnn_signals(window, m.config, true);
    a_ = anchor;
    bounds_ = horizon_bounds(window, anchor, cfg);
    y0_ = s_.y[anchor];
    yp_ = s_.y[anchor - 1];
    b_prev_ = s_.b[anchor - 1];
    nb_ = s_.neighbor[anchor] - s_.y[anchor];
  }

  [[nodiscard]] int horizon() const { return N_; }

  /// Predicted y_1..y_N; with `jac` set, also dy/du (N x N).
  Eigen::VectorXd predict(const Eigen::VectorXd & u, Eigen::MatrixXd * jac = nullptr) const
  {
    Eigen::VectorXd y(N_);
    double xc[kIcnnCvx], xn[kIcnnNcvx];
    double yk = y0_, ykm1 = yp_;
    Eigen::RowVectorXd Jk = Eigen::RowVectorXd::Zero(N_), Jkm1 = Eigen::RowVectorXd::Zero(N_);
    for (int k = 0; k < N_; ++k) {
      const std::size_t t = a_ + static_cast<std::size_t>(k);
      icnn_inputs(s_, t, yk, ykm1, nb_, xc, xn);
      xc[2] = u(k);
      xc[3] = k > 0 ? u(k - 1) : b_prev_;
      const double next = yk + forward(m_.net, xc, xn);
      if (jac) {
        const auto g = gradient(m_.net, xc, xn);
        Eigen::RowVectorXd Jn = (1.0 + g(0)) * Jk + g(1) * Jkm1;
        Jn(k) += g(2);
        if (k > 0) Jn(k - 1) += g(3);
        Jkm1 = Jk;
        Jk = Jn;
        jac->row(k) = Jn;
      }
      ykm1 = yk;
      yk = next;
      y(k) = next;
    }
    return y;
  }

  [[nodiscard]] double exact(const Eigen::VectorXd & u, Eigen::VectorXd * y_out = nullptr) const
  {
    const auto y = predict(u);
    if (y_out) *y_out = y;
    double J = cfg_.R * u.squaredNorm();
    for (int k = 0; k < N_; ++k) J += cfg_.lambda * violation(k, y(k));
    return J;
  }

  double smoothed(const Eigen::VectorXd & u, double mu, Eigen::VectorXd & grad) const
  {
    Eigen::MatrixXd jac(N_, N_);
    const auto y = predict(u, &jac);
    const SmoothHinge h{mu};
    double J = cfg_.R * u.squaredNorm();
    Eigen::VectorXd dy = Eigen::VectorXd::Zero(N_);
    for (int k = 0; k < N_; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double up = y(k) - bounds_.y_max[kk];
      J += cfg_.lambda * h.value(up);
      dy(k) += cfg_.lambda * h.slope(up);
      if (lower_) {
        const double dn = bounds_.y_min[kk] - y(k);
        J += cfg_.lambda * h.value(dn);
        dy(k) -= cfg_.lambda * h.slope(dn);
      }
    }
    grad = 2.0 * cfg_.R * u + jac.transpose() * dy;
    return J;
  }

  [[nodiscard]] double violation(int k, double y) const
  {
    const auto kk = static_cast<std::size_t>(k);
    double v = std::max(0.0, y - bounds_.y_max[kk]);
    if (lower_) v = std::max(v, bounds_.y_min[kk] - y);
    return v;
  }

private:
  const IcnnThermalModel & m_;
  const MpcConfig & cfg_;
  bool lower_;
  int N_;
  IcnnSignals s_;
  std::size_t a_ = 0;
  OutputBounds bounds_;
  double y0_ = 0.0, yp_ = 0.0, b_prev_ = 0.0, nb_ = 0.0;
};

}  // namespace detail

/// Convex only without lower output bounds; heating problems need them and
/// are refused unless explicitly allowed.
inline MpcSolution solve_icnn_mpc(const IcnnThermalModel & m, const TimeSeries & window, std::size_t anchor,
  const MpcConfig & cfg)
{
  cfg.validate();
  const bool lower = cfg.allow_nonconvex_lower_bound;
  if (cfg.mode == ThermalMode::Heating && !lower)
    throw Error(ErrorCode::LowerBoundRequested,
      "heating MPC needs a lower comfort bound, which breaks ICNN convexity; pass --allow-nonconvex-lower-bound");
  const auto t0 = std::chrono::steady_clock::now();
  const detail::IcnnHorizon H(m, window, anchor, cfg, lower);
  const int N = cfg.N;
  auto project = [&](Eigen::VectorXd v) { return v.cwiseMax(cfg.u_min).cwiseMin(cfg.u_max); };

  Rng rng(derive_seed(cfg.seed, 7, anchor));
  std::vector<Eigen::VectorXd> starts;
  starts.push_back(Eigen::VectorXd::Constant(N, cfg.u_min));
  if (cfg.icnn_restarts > 1) starts.push_back(Eigen::VectorXd::Constant(N, 0.5 * (cfg.u_min + cfg.u_max)));
  while (static_cast<int>(starts.size()) < cfg.icnn_restarts) {
    Eigen::VectorXd v(N);
    for (int k = 0; k < N; ++k) v(k) = rng.uniform(cfg.u_min, cfg.u_max);
    starts.push_back(v);
  }

  Eigen::VectorXd best = starts.front();
  double best_J = H.exact(best);
  int iterations = 0;
  constexpr int kWindow = 50;
  constexpr double kImprove = 1e-7;
  constexpr int kMaxPerStage = 3000;
  for (const auto & start : starts) {
    Eigen::VectorXd u = project(start);
    double step = 1e-2;
    for (double mu : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
      Eigen::VectorXd g(N);
      double J = H.smoothed(u, mu, g);
      std::vector<double> hist{J};
      for (int it = 0; it < kMaxPerStage; ++it) {
        ++iterations;
        bool moved = false;
        for (int bt = 0; bt < 60; ++bt) {
          const Eigen::VectorXd cand = project(u - step * g);
          const Eigen::VectorXd d = cand - u;
          if (d.squaredNorm() == 0.0) break;
          Eigen::VectorXd gc(N);
          const double Jc = H.smoothed(cand, mu, gc);
          if (Jc <= J + g.dot(d) + d.squaredNorm() / (2.0 * step)) {
            u = cand;
            J = Jc;
            g = gc;
            moved = true;
            step *= 1.5;
            break;
          }
          step *= 0.5;
        }
        hist.push_back(J);
        if (!moved) break;
        const auto n = hist.size();
        if (n > kWindow && hist[n - 1 - kWindow] - hist[n - 1] < kImprove) break;
      }
      const double Je = H.exact(u);
      if (Je < best_J) {
        best_J = Je;
        best = u;
      }
    }
  }

  MpcSolution out;
  Eigen::VectorXd y;
  out.objective = H.exact(best, &y);
  for (int k = 0; k < N; ++k) {
    out.u.push_back(best(k));
    out.y.push_back(y(k));
    out.eps.push_back(H.violation(k, y(k)));
  }
  out.iterations = iterations;
  out.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// Models and planning

using ZoneModel = std::variant<ArmaxModel, RfModel, IcnnThermalModel>;

inline std::string_view model_kind(const ZoneModel & m)
{
  if (std::holds_alternative<ArmaxModel>(m)) return "armax";
  if (std::holds_alternative<RfModel>(m)) return "rf";
  return std::get<IcnnThermalModel>(m).net.arch.kind == IcnnKind::Ficnn ? "ficnn" : "picnn";
}

inline const RegressorConfig & model_config(const ZoneModel & m)
{
  return std::visit([](const auto & x) -> const RegressorConfig & { return x.config; }, m);
}

/// Samples needed before the anchor.
inline std::size_t model_history(const ZoneModel & m)
{
  if (const auto * a = std::get_if<ArmaxModel>(&m)) return a->config.lags() - 1;
  if (const auto * r = std::get_if<RfModel>(&m)) return static_cast<std::size_t>(r->config.delta);
  return 1;
}

/// One optimization; wall time covers problem construction and solve.
inline MpcSolution plan(const ZoneModel & model, const TimeSeries & window, std::size_t anchor, const MpcConfig & cfg)
{
  const auto t0 = std::chrono::steady_clock::now();
  MpcSolution sol;
  if (const auto * a = std::get_if<ArmaxModel>(&model)) sol = solve_qp(build_qp(*a, window, anchor, cfg), cfg.qp);
  else if (const auto * r = std::get_if<RfModel>(&model)) sol = solve_qp(build_qp(*r, window, anchor, cfg), cfg.qp);
  else sol = solve_icnn_mpc(std::get<IcnnThermalModel>(model), window, anchor, cfg);
  sol.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

// ---------------------------------------------------------------------------
// Actuation

/// On for the leading round(u * n_sub) sub-steps.
inline std::vector<bool> pwm(double u, Seconds control_step, Seconds sub_step)
{
  if (sub_step.count() <= 0 || control_step.count() % sub_step.count() != 0)
    throw Error(ErrorCode::NonIntegerRatio, "sub_step must divide control_step");
  const auto n = static_cast<std::size_t>(control_step / sub_step);
  const auto on = static_cast<std::size_t>(std::lround(std::clamp(u, 0.0, 1.0) * static_cast<double>(n)));
  std::vector<bool> out(n, false);
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(on), true);
  return out;
}

// ---------------------------------------------------------------------------
// Closed loop

/// Model-view window for one control decision: `history` intervals before
/// the current one, then N forecast intervals. Zone temperatures use the
/// same boundary sampling as model_samples; future ones hold the last value
/// (persistence forecast for the neighbour). Future valves are zero, they
/// are the decision variables.
inline TimeSeries control_window(const SimulationLog & log, const TimeSeries & weather, const PlantParams & p,
  std::size_t minute, Timestamp now, ThermalMode mode, std::size_t history, int N, Seconds step,
  double forecast_sigma, std::uint64_t seed)
{
  const auto r = static_cast<std::size_t>(step.count() / 60);
  const std::size_t len = history + static_cast<std::size_t>(N);
  if (minute < history * r + kBoundaryWindow) throw Error(ErrorCode::TooShort, "not enough logged history");
  const auto t_amb = weather["T_amb"];
  const auto i_hor = weather["I_hor"];
  if ((minute + static_cast<std::size_t>(N) * r) > weather.length())
    throw Error(ErrorCode::ForecastTooShort, "weather trace ends inside the horizon");
  auto mean = [](std::span<const double> v, std::size_t a, std::size_t e) {
    double s = 0.0;
    for (std::size_t j = a; j < e; ++j) s += v[j];
    return s / static_cast<double>(e - a);
  };
  auto sum = [](std::span<const double> v, std::size_t a, std::size_t e) {
    double s = 0.0;
    for (std::size_t j = a; j < e; ++j) s += v[j];
    return s;
  };
  const std::size_t nz = log.zones;
  std::vector<Channel> ch;
  Rng noise(derive_seed(seed, 5, minute));
  std::vector<double> amb(len), ih(len), sup(len), md(len);
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t a = minute - history * r + i * r;
    amb[i] = mean(t_amb, a, a + r);
    ih[i] = mean(i_hor, a, a + r);
    if (i >= history) {
      if (forecast_sigma > 0.0) amb[i] += forecast_sigma * noise.normal();
      sup[i] = p.supply(mode);
      md[i] = mode == ThermalMode::Heating ? 1.0 : -1.0;
    } else {
      sup[i] = mean(log.T_sup, a, a + r);
      md[i] = mean(log.mode, a, a + r);
    }
  }
  for (std::size_t z = 0; z < nz; ++z) {
    std::vector<double> T(len), b(len, 0.0), Q(len, 0.0);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t a = minute - history * r + std::min(i, history) * r;
      T[i] = mean(log.T[z], a - kBoundaryWindow, a);
      if (i < history) {
        b[i] = std::clamp(mean(log.b[z], a, a + r), 0.0, 1.0);
        Q[i] = sum(log.Q[z], a, a + r);
      }
    }
    ch.push_back({"T_" + std::to_string(z + 1), Unit::Celsius, std::move(T)});
    ch.push_back({"b_" + std::to_string(z + 1), Unit::Fraction, std::move(b)});
    ch.push_back({"Q_" + std::to_string(z + 1), Unit::Energy, std::move(Q)});
  }
  ch.push_back({"T_sup", Unit::Celsius, std::move(sup)});
  ch.push_back({"T_amb", Unit::Celsius, std::move(amb)});
  ch.push_back({"I_hor", Unit::Irradiance, std::move(ih)});
  ch.push_back({"hc_mode", Unit::Dimensionless, std::move(md)});
  return TimeSeries(now - step * static_cast<std::int64_t>(history), step, std::move(ch));
}

/// Receding-horizon controller: one MPC per zone at every control step, the
/// first input applied by PWM at one-minute resolution. Any solver error
/// falls back to the hysteresis action for that zone and step.
///
/// Logged extras are deterministic (iterations, fallback share, duties);
/// wall-clock solve times are kept separately and only logged on request.
class MpcPolicy final : public Controller
{
public:
  MpcPolicy(std::vector<ZoneModel> models, MpcConfig cfg, const Scenario & sc, bool log_timing = false)
    : models_(std::move(models)), cfg_(std::move(cfg)), sc_(sc), log_timing_(log_timing)
  {
    cfg_.validate();
    if (models_.empty()) throw Error(ErrorCode::ConfigError, "no zone models");
    if (cfg_.step != sc.control_step) throw Error(ErrorCode::ConfigError, "MPC control step differs from the scenario's");
    for (const auto & m : models_) {
      if (std::holds_alternative<IcnnThermalModel>(m) && cfg_.mode == ThermalMode::Heating && !cfg_.allow_nonconvex_lower_bound)
        throw Error(ErrorCode::LowerBoundRequested, "ICNN heating MPC needs --allow-nonconvex-lower-bound");
      history_ = std::max(history_, model_history(m));
    }
    for (std::size_t z = 0; z < models_.size(); ++z) hyst_.emplace_back(sc_.hysteresis(cfg_.mode));
    duty_.assign(models_.size(), 0.0);
    fallback_.assign(models_.size(), true);
  }

  void act(const ControlInput & in, std::span<double> valves, std::span<double> extra) override
  {
    if (valves.size() != models_.size()) throw Error(ErrorCode::DimensionMismatch, "one model per zone expected");
    const auto r = static_cast<std::size_t>(cfg_.step.count() / 60);
    const std::size_t offset = in.minute % r;
    if (offset == 0) {
      step_time_ = 0.0;
      iterations_ = 0;
      std::optional<TimeSeries> window;
      try {
        window = control_window(*in.log, *in.weather, *in.plant, in.minute, in.time, in.mode, history_, cfg_.N,
          cfg_.step, cfg_.forecast_sigma, derive_seed(cfg_.seed, 11));
      } catch (const Error &) {
        window.reset();
      }
      for (std::size_t z = 0; z < models_.size(); ++z) {
        fallback_[z] = true;
        if (!window || in.mode != cfg_.mode) continue;
        try {
          const auto sol = plan(models_[z], *window, history_, cfg_);
          duty_[z] = std::clamp(sol.u.front(), 0.0, 1.0);
          step_time_ += sol.solve_time_s;
          iterations_ += sol.iterations;
          solve_times_.push_back(sol.solve_time_s);
          fallback_[z] = false;
        } catch (const Error &) {
          ++failures_;
        }
      }
    }
    double fb = 0.0;
    for (std::size_t z = 0; z < models_.size(); ++z) {
      const double h = hyst_[z].update(in.measured[z]);
      if (fallback_[z]) {
        valves[z] = h;
        fb += 1.0;
      } else {
        const auto on = static_cast<std::size_t>(std::lround(duty_[z] * static_cast<double>(r)));
        valves[z] = offset < on ? 1.0 : 0.0;
      }
    }
    std::size_t e = 0;
    extra[e++] = static_cast<double>(iterations_);
    extra[e++] = fb / static_cast<double>(models_.size());
    for (std::size_t z = 0; z < models_.size(); ++z) extra[e++] = fallback_[z] ? valves[z] : duty_[z];
    if (log_timing_) extra[e++] = offset == 0 ? step_time_ : 0.0;
  }

  [[nodiscard]] std::vector<std::pair<std::string, Unit>> extra_channels() const override
  {
    std::vector<std::pair<std::string, Unit>> out{{"mpc_iterations", Unit::Dimensionless}, {"mpc_fallback", Unit::Fraction}};
    for (std::size_t z = 0; z < models_.size(); ++z) out.emplace_back("u_" + std::to_string(z + 1), Unit::Fraction);
    if (log_timing_) out.emplace_back("mpc_solve_s", Unit::Seconds);
    return out;
  }

  /// Wall time of every successful zone solve, in order.
  [[nodiscard]] const std::vector<double> & solve_times() const { return solve_times_; }
  [[nodiscard]] std::size_t solves() const { return solve_times_.size(); }
  [[nodiscard]] std::size_t failures() const { return failures_; }

private:
  std::vector<ZoneModel> models_;
  MpcConfig cfg_;
  Scenario sc_;
  bool log_timing_ = false;
  std::size_t history_ = 1;
  std::vector<HysteresisController> hyst_;
  std::vector<double> duty_;
  std::vector<bool> fallback_;
  double step_time_ = 0.0;
  int iterations_ = 0;
  std::vector<double> solve_times_;
  std::size_t failures_ = 0;
};

/// One episode against the plant with the scenario's weather.
inline TimeSeries closed_loop(const PlantParams & p, Controller & ctl, const Scenario & sc)
{
  return run_simulation(p, scenario_weather(p, sc), ctl, sc);
}

}  // namespace bmpc
