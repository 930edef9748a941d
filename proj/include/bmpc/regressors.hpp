#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "bmpc/errors.hpp"
#include "bmpc/mode.hpp"
#include "bmpc/solar.hpp"
#include "bmpc/time_series.hpp"

namespace bmpc {

enum class ActuatorOption {
  MeasuredEnergy,  ///< allocated per-zone energy from the total meter
  ValveOnly,       ///< valve duty b
  ValveTimesDT,    ///< b * (T_sup - last measured room temperature)
};

inline std::string_view to_string(ActuatorOption o)
{
  switch (o) {
    case ActuatorOption::MeasuredEnergy: return "measured_energy";
    case ActuatorOption::ValveOnly: return "valve_only";
    case ActuatorOption::ValveTimesDT: return "valve_times_dT";
  }
  return "?";
}

inline ActuatorOption parse_actuator(std::string_view s)
{
  if (s == "measured_energy") return ActuatorOption::MeasuredEnergy;
  if (s == "valve_only") return ActuatorOption::ValveOnly;
  if (s == "valve_times_dT") return ActuatorOption::ValveTimesDT;
  throw Error(ErrorCode::ConfigError, "unknown actuator option '" + std::string(s) + "'");
}

/// Actuator regressor. In cooling the valve-only drive is negated so that a
/// non-negative coefficient still describes heat removal.
inline double actuator_input(ActuatorOption option, double b, std::optional<double> t_sup, double t_bar,
  double energy = 0.0, ThermalMode mode = ThermalMode::Heating)
{
  if (b < 0.0 || b > 1.0) throw Error(ErrorCode::ValueOutOfRange, "valve position outside [0,1]");
  switch (option) {
    case ActuatorOption::ValveOnly: return mode == ThermalMode::Heating ? b : -b;
    case ActuatorOption::ValveTimesDT:
      if (!t_sup) throw Error(ErrorCode::MissingSupplyTemperature, "valve_times_dT needs a supply temperature");
      return b * (*t_sup - t_bar);
    case ActuatorOption::MeasuredEnergy: return energy;
  }
  return 0.0;
}

struct RegressorConfig
{
  int delta = 3;
  int tau = 9;
  ActuatorOption actuator = ActuatorOption::ValveTimesDT;
  ThermalMode mode = ThermalMode::Heating;

  std::string output = "T_1";
  std::string neighbor = "T_2";  ///< empty: no neighbour zone
  std::string ambient = "T_amb";
  std::string irradiance = "I_hor";
  std::string valve = "b_1";
  std::string supply = "T_sup";
  std::string energy = "Q_1";

  double latitude = 47.4;
  double longitude = 8.6;

  [[nodiscard]] bool has_neighbor() const { return !neighbor.empty(); }
  [[nodiscard]] std::size_t lags() const { return static_cast<std::size_t>(delta) + 1; }
  [[nodiscard]] std::size_t signals_per_lag() const
  {
    return 3 + (has_neighbor() ? 1 : 0) + static_cast<std::size_t>(tau);
  }
  /// (delta + 1)(4 + tau) with one neighbour.
  [[nodiscard]] std::size_t degrees_of_freedom() const { return lags() * signals_per_lag(); }

  void validate() const
  {
    if (delta < 0) throw Error(ErrorCode::ConfigError, "delta must be >= 0");
    if (tau < 1) throw Error(ErrorCode::ConfigError, "tau must be >= 1");
  }

  // Offsets of each block within a regression row.
  [[nodiscard]] std::size_t y_block() const { return 0; }
  [[nodiscard]] std::size_t u_block() const { return lags(); }
  [[nodiscard]] std::size_t amb_block() const { return 2 * lags(); }
  [[nodiscard]] std::size_t nb_block() const { return 3 * lags(); }
  [[nodiscard]] std::size_t solar_block() const { return (has_neighbor() ? 4 : 3) * lags(); }
};

/// Zone temperature channels are "T_" followed by a digit; they are the
/// model outputs and neighbours.
inline bool is_zone_temperature(std::string_view name)
{
  return name.size() > 2 && name[0] == 'T' && name[1] == '_' && name[2] >= '0' && name[2] <= '9';
}

/// Default boundary window for model_samples, in raw samples.
inline constexpr std::size_t kBoundaryWindow = 5;

/// Model view of a fine record at `step`. Inputs and disturbances are
/// interval aggregates as in resample(); zone temperatures are instead
/// sampled at the start of each interval (mean of the `window` raw samples
/// just before it), so y[k+1] depends on u[k] and not on u[k+1].
inline TimeSeries model_samples(const TimeSeries & raw, Seconds step, std::size_t window = kBoundaryWindow)
{
  if (raw.step() == step) return raw;
  auto r = resample(raw, step);
  const auto ratio = static_cast<std::size_t>(step / raw.step());
  window = std::clamp<std::size_t>(window, 1, ratio);
  std::vector<Channel> out;
  for (const auto & c : r.channels()) {
    Channel ch = c;
    if (is_zone_temperature(c.name)) {
      const auto v = raw[c.name];
      for (std::size_t k = 0; k < r.length(); ++k) {
        std::size_t e = k * ratio;
        std::size_t a = 0;
        if (e < window) e = window;
        else a = e - window;
        double acc = 0.0;
        for (std::size_t j = a; j < e; ++j) acc += v[j];
        ch.values[k] = acc / static_cast<double>(e - a);
      }
    }
    out.push_back(std::move(ch));
  }
  return TimeSeries(r.start(), r.step(), std::move(out));
}

/// Per-sample regressor signals of one zone, before lag stacking.
struct RegressorSignals
{
  std::vector<double> y, u, ambient, neighbor;
  std::vector<double> valve, supply;  ///< raw, kept for re-deriving future drives
  Eigen::MatrixXd solar;  ///< length x tau one-hot vertical irradiance

  [[nodiscard]] std::size_t length() const { return y.size(); }
};

/// Vertical irradiance and solar bin are evaluated at the interval midpoint.
inline Eigen::VectorXd solar_features(Timestamp interval_start, Seconds step, double i_hor, const RegressorConfig & c)
{
  const Timestamp mid = interval_start + step / 2;
  const auto geo = solar_position(mid, c.latitude, c.longitude);
  const double iv = vertical_irradiance(i_hor, geo.beta);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(c.tau);
  out(static_cast<Eigen::Index>(onehot_bin(hour_of_day(mid), c.tau))) = iv;
  return out;
}

/// With `t_bar` set, the output channel is not read (y is NaN) and the
/// valve_times_dT drive uses that fixed last-measured temperature.
inline RegressorSignals compute_signals(const TimeSeries & ts, const RegressorConfig & c,
  std::optional<double> t_bar = std::nullopt)
{
  c.validate();
  auto need = [&](const std::string & name) {
    if (!ts.has(name)) throw Error(ErrorCode::MissingChannel, "missing channel '" + name + "'");
    return ts[name];
  };
  const std::size_t n = ts.length();
  std::vector<double> y_fill;
  std::span<const double> y;
  if (t_bar) {
    y_fill.assign(n, std::numeric_limits<double>::quiet_NaN());
    y = y_fill;
  } else {
    y = need(c.output);
  }
  const auto amb = need(c.ambient);
  const auto ihor = need(c.irradiance);
  std::span<const double> nb;
  if (c.has_neighbor()) nb = need(c.neighbor);

  RegressorSignals s;
  s.y.assign(y.begin(), y.end());
  s.ambient.assign(amb.begin(), amb.end());
  if (c.has_neighbor()) s.neighbor.assign(nb.begin(), nb.end());
  s.u.resize(n);
  switch (c.actuator) {
    case ActuatorOption::MeasuredEnergy: {
      const auto q = need(c.energy);
      s.u.assign(q.begin(), q.end());
      break;
    }
    case ActuatorOption::ValveOnly: {
      const auto b = need(c.valve);
      s.valve.assign(b.begin(), b.end());
      // The logged season, where present, decides the sign per sample.
      std::span<const double> md;
      if (ts.has("hc_mode")) md = ts["hc_mode"];
      for (std::size_t k = 0; k < n; ++k) {
        const ThermalMode mk = md.empty() ? c.mode : (md[k] < 0.0 ? ThermalMode::Cooling : ThermalMode::Heating);
        s.u[k] = actuator_input(c.actuator, b[k], std::nullopt, 0.0, 0.0, mk);
      }
      break;
    }
    case ActuatorOption::ValveTimesDT: {
      const auto b = need(c.valve);
      if (!ts.has(c.supply)) throw Error(ErrorCode::MissingSupplyTemperature, "missing channel '" + c.supply + "'");
      const auto sup = ts[c.supply];
      s.valve.assign(b.begin(), b.end());
      s.supply.assign(sup.begin(), sup.end());
      for (std::size_t k = 0; k < n; ++k)
        s.u[k] = actuator_input(c.actuator, b[k], sup[k], t_bar ? *t_bar : y[k], 0.0, c.mode);
      break;
    }
  }
  s.solar.resize(static_cast<Eigen::Index>(n), c.tau);
  for (std::size_t k = 0; k < n; ++k)
    s.solar.row(static_cast<Eigen::Index>(k)) = solar_features(ts.time_at(k), ts.step(), ihor[k], c).transpose();
  return s;
}

/// Row predicting y[k+1] from samples k, k-1, ..., k-delta.
inline void stack_row(const RegressorSignals & s, std::size_t k, const RegressorConfig & c, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row)
{
  const std::size_t L = c.lags();
  for (std::size_t j = 0; j < L; ++j) {
    const std::size_t i = k - j;
    const auto jj = static_cast<Eigen::Index>(j);
    row(static_cast<Eigen::Index>(c.y_block()) + jj) = s.y[i];
    row(static_cast<Eigen::Index>(c.u_block()) + jj) = s.u[i];
    row(static_cast<Eigen::Index>(c.amb_block()) + jj) = s.ambient[i];
    if (c.has_neighbor()) row(static_cast<Eigen::Index>(c.nb_block()) + jj) = s.neighbor[i];
    row.segment(static_cast<Eigen::Index>(c.solar_block() + j * static_cast<std::size_t>(c.tau)), c.tau) =
      s.solar.row(static_cast<Eigen::Index>(i));
  }
}

struct RegressionData
{
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

/// Lagged regression rows; row count = length - delta - 1.
inline RegressionData build_regression_rows(const TimeSeries & ts, const RegressorConfig & c)
{
  c.validate();
  const std::size_t n = ts.length();
  if (n < c.lags() + 1)
    throw Error(ErrorCode::TooShort, "series of length " + std::to_string(n) + " too short for delta=" + std::to_string(c.delta));
  const auto s = compute_signals(ts, c);
  const std::size_t rows = n - c.lags();
  RegressionData out;
  out.X.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(c.degrees_of_freedom()));
  out.y.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t k = r + c.lags() - 1;
    stack_row(s, k, c, out.X.row(static_cast<Eigen::Index>(r)));
    out.y(static_cast<Eigen::Index>(r)) = s.y[k + 1];
  }
  return out;
}

/// Rows from several disjoint segments; lags never straddle segments.
inline RegressionData build_regression_rows(std::span<const TimeSeries> segments, const RegressorConfig & c)
{
  std::vector<RegressionData> parts;
  Eigen::Index rows = 0;
  for (const auto & seg : segments) {
    if (seg.length() < c.lags() + 1) continue;
    parts.push_back(build_regression_rows(seg, c));
    rows += parts.back().X.rows();
  }
  if (parts.empty()) throw Error(ErrorCode::TooShort, "no segment long enough");
  RegressionData out;
  out.X.resize(rows, static_cast<Eigen::Index>(c.degrees_of_freedom()));
  out.y.resize(rows);
  Eigen::Index at = 0;
  for (const auto & p : parts) {
    out.X.middleRows(at, p.X.rows()) = p.X;
    out.y.segment(at, p.y.size()) = p.y;
    at += p.X.rows();
  }
  return out;
}

inline void to_json(nlohmann::json & j, const RegressorConfig & c)
{
  j = nlohmann::json{{"delta", c.delta}, {"tau", c.tau}, {"actuator", to_string(c.actuator)},
    {"mode", to_string(c.mode)}, {"output", c.output}, {"neighbor", c.neighbor}, {"ambient", c.ambient},
    {"irradiance", c.irradiance}, {"valve", c.valve}, {"supply", c.supply}, {"energy", c.energy},
    {"latitude", c.latitude}, {"longitude", c.longitude}};
}

inline void from_json(const nlohmann::json & j, RegressorConfig & c)
{
  c.delta = j.value("delta", c.delta);
  c.tau = j.value("tau", c.tau);
  if (j.contains("actuator")) c.actuator = parse_actuator(j.at("actuator").get<std::string>());
  if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
  c.output = j.value("output", c.output);
  c.neighbor = j.value("neighbor", c.neighbor);
  c.ambient = j.value("ambient", c.ambient);
  c.irradiance = j.value("irradiance", c.irradiance);
  c.valve = j.value("valve", c.valve);
  c.supply = j.value("supply", c.supply);
  c.energy = j.value("energy", c.energy);
  c.latitude = j.value("latitude", c.latitude);
  c.longitude = j.value("longitude", c.longitude);
  c.validate();
}

}  // namespace bmpc
