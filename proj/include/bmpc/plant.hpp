#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bmpc/errors.hpp"
#include "bmpc/mode.hpp"
#include "bmpc/solar.hpp"
#include "bmpc/time_series.hpp"

namespace bmpc {

/// One zone of the 2R2C network: air node coupled to a wall node, the wall
/// coupled to the outside (ambient, or the neighbour zone when the zone has
/// no exterior wall), and the air node coupled directly to the neighbour.
struct ZoneParams
{
  double C_zone = 1.2e6;          ///< J/K
  double C_wall = 1.5e6;          ///< J/K
  double R_zone_wall = 0.008;     ///< K/W
  double R_wall_amb = 0.04;       ///< K/W
  double R_zone_neighbor = 0.05;  ///< K/W
  double A_win = 0.7;             ///< m2, effective (transmittance folded in)
  double alpha0 = 90.0;           ///< deg, window reference azimuth
  double panel_UA = 100.0;        ///< W/K
  double design_flow = 0.1;       ///< kg/s
  bool exterior_wall = true;

  void validate(const std::string & where) const
  {
    auto pos = [&](double v, const char * name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw Error(ErrorCode::ConfigError, where + "." + name + " must be positive");
    };
    auto nonneg = [&](double v, const char * name) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw Error(ErrorCode::ConfigError, where + "." + name + " must be non-negative");
    };
    pos(C_zone, "C_zone");
    pos(C_wall, "C_wall");
    pos(R_zone_wall, "R_zone_wall");
    pos(R_wall_amb, "R_wall_amb");
    pos(R_zone_neighbor, "R_zone_neighbor");
    nonneg(A_win, "A_win");
    nonneg(panel_UA, "panel_UA");
    pos(design_flow, "design_flow");
    if (!std::isfinite(alpha0)) throw Error(ErrorCode::ConfigError, where + ".alpha0 must be finite");
  }
};

/// Synthetic weather generator settings.
struct WeatherParams
{
  double mean = 9.5;                ///< degC, annual mean
  double seasonal_amplitude = 9.0;  ///< K
  double diurnal_amplitude = 4.0;   ///< K
  double noise_sigma = 2.0;         ///< K, stationary std of the AR(1) term
  double noise_corr_hours = 36.0;   ///< AR(1) correlation time
  int coldest_day = 15;             ///< day of year of the seasonal minimum
  double cloud_min = 0.2;
  double cloud_max = 1.0;
};

struct PlantParams
{
  std::vector<ZoneParams> zones;
  double latitude = 47.4;
  double longitude = 8.6;
  double T_sup_heating = 35.0;  ///< degC
  double T_sup_cooling = 18.0;  ///< degC
  double noise_sigma = 0.05;    ///< K, measurement noise on logged room temperatures
  double max_dt = 60.0;         ///< s, inner Euler step
  WeatherParams weather;

  [[nodiscard]] std::size_t size() const { return zones.size(); }
  [[nodiscard]] double supply(ThermalMode m) const { return m == ThermalMode::Heating ? T_sup_heating : T_sup_cooling; }

  /// Zone coupled to `i`; none for a single zone.
  [[nodiscard]] std::ptrdiff_t neighbor(std::size_t i) const
  {
    if (zones.size() < 2) return -1;
    return static_cast<std::ptrdiff_t>((i + 1) % zones.size());
  }

  void validate() const
  {
    if (zones.empty()) throw Error(ErrorCode::ConfigError, "plant needs at least one zone");
    for (std::size_t i = 0; i < zones.size(); ++i) {
      zones[i].validate("zones[" + std::to_string(i) + "]");
      if (!zones[i].exterior_wall && zones.size() < 2)
        throw Error(ErrorCode::ConfigError, "zones[" + std::to_string(i) + "] has no exterior wall and no neighbour");
    }
    if (!(max_dt > 0.0) || max_dt > 60.0) throw Error(ErrorCode::ConfigError, "max_dt must be in (0, 60] s");
    if (noise_sigma < 0.0) throw Error(ErrorCode::ConfigError, "noise_sigma must be non-negative");
  }
};

/// Two bedrooms: zone 1 with an exterior wall, zone 2 better shielded (its
/// wall backs onto another unit) and a west-leaning window.
inline PlantParams default_plant()
{
  PlantParams p;
  ZoneParams z1;
  ZoneParams z2;
  z2.R_wall_amb = 0.08;
  z2.alpha0 = 120.0;
  z2.A_win = 0.5;
  z2.design_flow = 0.08;
  z2.panel_UA = 80.0;
  p.zones = {z1, z2};
  return p;
}

inline void to_json(nlohmann::json & j, const ZoneParams & z)
{
  j = nlohmann::json{{"C_zone", z.C_zone}, {"C_wall", z.C_wall}, {"R_zone_wall", z.R_zone_wall},
    {"R_wall_amb", z.R_wall_amb}, {"R_zone_neighbor", z.R_zone_neighbor}, {"A_win", z.A_win}, {"alpha0", z.alpha0},
    {"panel_UA", z.panel_UA}, {"design_flow", z.design_flow}, {"exterior_wall", z.exterior_wall}};
}

inline void from_json(const nlohmann::json & j, ZoneParams & z)
{
  z.C_zone = j.at("C_zone").get<double>();
  z.C_wall = j.at("C_wall").get<double>();
  z.R_zone_wall = j.at("R_zone_wall").get<double>();
  z.R_wall_amb = j.at("R_wall_amb").get<double>();
  z.R_zone_neighbor = j.at("R_zone_neighbor").get<double>();
  z.A_win = j.at("A_win").get<double>();
  z.alpha0 = j.at("alpha0").get<double>();
  z.panel_UA = j.at("panel_UA").get<double>();
  z.design_flow = j.at("design_flow").get<double>();
  z.exterior_wall = j.value("exterior_wall", true);
}

inline void to_json(nlohmann::json & j, const WeatherParams & w)
{
  j = nlohmann::json{{"mean", w.mean}, {"seasonal_amplitude", w.seasonal_amplitude},
    {"diurnal_amplitude", w.diurnal_amplitude}, {"noise_sigma", w.noise_sigma},
    {"noise_corr_hours", w.noise_corr_hours}, {"coldest_day", w.coldest_day}, {"cloud_min", w.cloud_min},
    {"cloud_max", w.cloud_max}};
}

inline void from_json(const nlohmann::json & j, WeatherParams & w)
{
  w.mean = j.value("mean", w.mean);
  w.seasonal_amplitude = j.value("seasonal_amplitude", w.seasonal_amplitude);
  w.diurnal_amplitude = j.value("diurnal_amplitude", w.diurnal_amplitude);
  w.noise_sigma = j.value("noise_sigma", w.noise_sigma);
  w.noise_corr_hours = j.value("noise_corr_hours", w.noise_corr_hours);
  w.coldest_day = j.value("coldest_day", w.coldest_day);
  w.cloud_min = j.value("cloud_min", w.cloud_min);
  w.cloud_max = j.value("cloud_max", w.cloud_max);
}

inline void to_json(nlohmann::json & j, const PlantParams & p)
{
  j = nlohmann::json{{"zones", p.zones}, {"latitude", p.latitude}, {"longitude", p.longitude},
    {"T_sup_heating", p.T_sup_heating}, {"T_sup_cooling", p.T_sup_cooling}, {"noise_sigma", p.noise_sigma},
    {"max_dt", p.max_dt}, {"weather", p.weather}};
}

inline void from_json(const nlohmann::json & j, PlantParams & p)
{
  p.zones = j.at("zones").get<std::vector<ZoneParams>>();
  p.latitude = j.value("latitude", p.latitude);
  p.longitude = j.value("longitude", p.longitude);
  p.T_sup_heating = j.value("T_sup_heating", p.T_sup_heating);
  p.T_sup_cooling = j.value("T_sup_cooling", p.T_sup_cooling);
  p.noise_sigma = j.value("noise_sigma", p.noise_sigma);
  p.max_dt = j.value("max_dt", p.max_dt);
  if (j.contains("weather")) p.weather = j.at("weather").get<WeatherParams>();
  p.validate();
}

// ---------------------------------------------------------------------------

inline constexpr double kMinSaneTemperature = -20.0;
inline constexpr double kMaxSaneTemperature = 60.0;

struct PlantState
{
  std::vector<double> T_zone;     ///< degC
  std::vector<double> T_wall;     ///< degC, hidden
  std::vector<double> energy_Wh;  ///< accumulated actuator energy per zone, signed
  Timestamp time{};
};

/// Zones at `t_zone`, walls at their steady state between zone and outside.
inline PlantState initial_state(const PlantParams & p, Timestamp t, double t_zone, double t_amb)
{
  PlantState s;
  s.time = t;
  s.T_zone.assign(p.size(), t_zone);
  s.energy_Wh.assign(p.size(), 0.0);
  for (const auto & z : p.zones) {
    const double outside = z.exterior_wall ? t_amb : t_zone;
    const double g1 = 1.0 / z.R_zone_wall, g2 = 1.0 / z.R_wall_amb;
    s.T_wall.push_back((g1 * t_zone + g2 * outside) / (g1 + g2));
  }
  return s;
}

struct WeatherSample
{
  double T_amb = 0.0;
  double I_hor = 0.0;
};

/// Heat flows into each node over one Euler sub-step, in W.
struct ZoneFlows
{
  double wall_to_zone = 0.0;
  double neighbor_to_zone = 0.0;
  double solar = 0.0;
  double actuator = 0.0;
  double zone_to_wall = 0.0;
  double outside_to_wall = 0.0;
};

inline ZoneFlows zone_flows(const PlantParams & p, const PlantState & s, std::size_t i, double valve, double t_sup,
  const WeatherSample & w, const SolarGeometry & geo)
{
  const auto & z = p.zones[i];
  const auto nb = p.neighbor(i);
  ZoneFlows f;
  f.wall_to_zone = (s.T_wall[i] - s.T_zone[i]) / z.R_zone_wall;
  if (nb >= 0) f.neighbor_to_zone = (s.T_zone[static_cast<std::size_t>(nb)] - s.T_zone[i]) / z.R_zone_neighbor;
  f.solar = z.A_win > 0.0 ? window_gain(w.I_hor, geo, z.A_win, z.alpha0) : 0.0;
  f.actuator = z.panel_UA * valve * (t_sup - s.T_zone[i]);
  const double outside = z.exterior_wall || nb < 0 ? w.T_amb : s.T_zone[static_cast<std::size_t>(nb)];
  f.zone_to_wall = -f.wall_to_zone;
  f.outside_to_wall = (outside - s.T_wall[i]) / z.R_wall_amb;
  return f;
}

/// Advances the plant by `dt` seconds with explicit Euler, sub-stepping at
/// params.max_dt. Weather and valves are held over the interval.
inline PlantState step(const PlantParams & p, const PlantState & s, std::span<const double> valves, double t_sup,
  const WeatherSample & w, double dt)
{
  if (valves.size() != p.size()) throw Error(ErrorCode::DimensionMismatch, "one valve per zone expected");
  if (!(dt > 0.0)) throw Error(ErrorCode::ConfigError, "dt must be positive");
  for (double b : valves)
    if (b < 0.0 || b > 1.0) throw Error(ErrorCode::ValueOutOfRange, "valve position outside [0,1]");
  const int n_sub = static_cast<int>(std::ceil(dt / p.max_dt - 1e-9));
  const double h = dt / n_sub;
  PlantState cur = s;
  PlantState next = s;
  for (int sub = 0; sub < n_sub; ++sub) {
    const Timestamp t = s.time + std::chrono::duration_cast<Seconds>(std::chrono::duration<double>(sub * h));
    const auto geo = solar_position(t, p.latitude, p.longitude);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto f = zone_flows(p, cur, i, valves[i], t_sup, w, geo);
      const auto & z = p.zones[i];
      next.T_zone[i] = cur.T_zone[i] + h / z.C_zone * (f.wall_to_zone + f.neighbor_to_zone + f.solar + f.actuator);
      next.T_wall[i] = cur.T_wall[i] + h / z.C_wall * (f.zone_to_wall + f.outside_to_wall);
      next.energy_Wh[i] = cur.energy_Wh[i] + f.actuator * h / 3600.0;
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (double T : {next.T_zone[i], next.T_wall[i]})
        if (!(T >= kMinSaneTemperature && T <= kMaxSaneTemperature))
          throw Error(ErrorCode::UnstableStep, "zone " + std::to_string(i + 1) + " temperature left the sanity band");
    }
    cur = next;
  }
  cur.time = s.time + std::chrono::duration_cast<Seconds>(std::chrono::duration<double>(dt));
  return cur;
}

/// Splits a metered total over the zones in proportion to flow times valve.
inline std::vector<double> allocate_energy(double q_total, std::span<const double> valves, std::span<const double> flows)
{
  if (valves.size() != flows.size()) throw Error(ErrorCode::DimensionMismatch, "valves and flows differ in length");
  double den = 0.0;
  for (std::size_t i = 0; i < valves.size(); ++i) den += flows[i] * valves[i];
  std::vector<double> out(valves.size(), 0.0);
  if (den <= 0.0) return out;
  for (std::size_t i = 0; i < valves.size(); ++i) out[i] = q_total * flows[i] * valves[i] / den;
  return out;
}

// ---------------------------------------------------------------------------

struct HysteresisConfig
{
  double setpoint = 22.0;
  double band = 1.0;
  ThermalMode mode = ThermalMode::Heating;

  void validate() const
  {
    if (!(band > 0.0)) throw Error(ErrorCode::ConfigError, "hysteresis band must be positive");
  }
};

/// Two-threshold on/off controller; holds its previous output inside the band.
class HysteresisController
{
public:
  explicit HysteresisController(HysteresisConfig cfg = {}, bool open = false) : cfg_(cfg), open_(open) { cfg_.validate(); }

  double update(double t_zone)
  {
    if (cfg_.mode == ThermalMode::Heating) {
      if (t_zone < cfg_.setpoint - cfg_.band) open_ = true;
      else if (t_zone > cfg_.setpoint) open_ = false;
    } else {
      if (t_zone > cfg_.setpoint + cfg_.band) open_ = true;
      else if (t_zone < cfg_.setpoint) open_ = false;
    }
    return open_ ? 1.0 : 0.0;
  }

  [[nodiscard]] bool is_open() const noexcept { return open_; }
  [[nodiscard]] const HysteresisConfig & config() const noexcept { return cfg_; }
  void reset(HysteresisConfig cfg)
  {
    cfg.validate();
    cfg_ = cfg;
    open_ = false;
  }

private:
  HysteresisConfig cfg_;
  bool open_ = false;
};

/// Stateless form of the controller for a given previous valve state.
inline double hysteresis_control(double t_zone, const HysteresisConfig & cfg, bool previously_open)
{
  HysteresisController c(cfg, previously_open);
  return c.update(t_zone);
}

}  // namespace bmpc
