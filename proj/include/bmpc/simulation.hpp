#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bmpc/errors.hpp"
#include "bmpc/mode.hpp"
#include "bmpc/plant.hpp"
#include "bmpc/random.hpp"
#include "bmpc/time_series.hpp"
#include "bmpc/weather.hpp"

namespace bmpc {

enum class Season { Heating, Cooling, Auto };

inline std::string_view to_string(Season s)
{
  switch (s) {
    case Season::Heating: return "heating";
    case Season::Cooling: return "cooling";
    case Season::Auto: return "auto";
  }
  return "?";
}

inline Season parse_season(std::string_view s)
{
  if (s == "heating") return Season::Heating;
  if (s == "cooling") return Season::Cooling;
  if (s == "auto") return Season::Auto;
  throw Error(ErrorCode::ConfigError, "season must be heating, cooling or auto, got '" + std::string(s) + "'");
}

/// Everything about a simulated episode except the plant and the controller.
struct Scenario
{
  Timestamp start = make_time(2019, 1, 7);
  std::size_t days = 7;
  std::size_t warmup_days = 2;  ///< simulated under the same controller, not logged
  std::uint64_t seed = 1;
  Season season = Season::Auto;
  double heating_setpoint = 22.0;
  double cooling_setpoint = 24.0;
  double band = 1.0;
  /// Auto season: switch at midnight on the previous day's mean ambient.
  double heat_below = 12.0;
  double cool_above = 15.0;
  Seconds control_step{1800};
  std::size_t prbs_hold = 1;   ///< PRBS hold time in control steps
  double guard_low = 17.0;     ///< PRBS safety override, degC
  double guard_high = 29.0;

  [[nodiscard]] HysteresisConfig hysteresis(ThermalMode m) const
  {
    return m == ThermalMode::Heating ? HysteresisConfig{heating_setpoint, band, m} : HysteresisConfig{cooling_setpoint, band, m};
  }

  void validate() const
  {
    if (days < 1) throw Error(ErrorCode::ConfigError, "days must be >= 1");
    if (control_step.count() <= 0 || control_step.count() % 60 != 0)
      throw Error(ErrorCode::ConfigError, "control_step must be a positive multiple of 60 s");
    if (!(band > 0.0)) throw Error(ErrorCode::ConfigError, "band must be positive");
    if (prbs_hold < 1) throw Error(ErrorCode::ConfigError, "prbs_hold must be >= 1");
  }
};

/// Minute-resolution record of a run, filled as the simulation advances.
struct SimulationLog
{
  std::size_t zones = 0;
  std::vector<std::vector<double>> T, b, Q;  ///< per zone: measured temperature, valve, allocated energy (Wh)
  std::vector<double> Q_total, T_sup, T_amb, I_hor, mode;
  std::vector<std::pair<std::string, Unit>> extra_names;
  std::vector<std::vector<double>> extra;

  [[nodiscard]] std::size_t length() const { return Q_total.size(); }
};

struct ControlInput
{
  std::size_t minute = 0;  ///< index from the start of the warm-up
  Timestamp time{};
  ThermalMode mode = ThermalMode::Heating;
  std::span<const double> measured;  ///< current measured zone temperatures
  const SimulationLog * log = nullptr;    ///< samples before `minute`
  const TimeSeries * weather = nullptr;  ///< the full trace; forecasts are drawn from it
  const PlantParams * plant = nullptr;
};

class Controller
{
public:
  virtual ~Controller() = default;
  /// Writes one valve position per zone and values for extra_channels().
  virtual void act(const ControlInput & in, std::span<double> valves, std::span<double> extra) = 0;
  [[nodiscard]] virtual std::vector<std::pair<std::string, Unit>> extra_channels() const { return {}; }
};

/// Per-zone hysteresis; the configuration follows the season.
class HysteresisPolicy final : public Controller
{
public:
  explicit HysteresisPolicy(const Scenario & sc) : sc_(sc) {}

  void act(const ControlInput & in, std::span<double> valves, std::span<double>) override
  {
    if (ctl_.size() != valves.size() || in.mode != mode_) {
      mode_ = in.mode;
      ctl_.assign(valves.size(), HysteresisController(sc_.hysteresis(mode_)));
    }
    for (std::size_t i = 0; i < valves.size(); ++i) valves[i] = ctl_[i].update(in.measured[i]);
  }

private:
  Scenario sc_;
  ThermalMode mode_ = ThermalMode::Heating;
  std::vector<HysteresisController> ctl_;
};

/// Maximal-length 15-bit LFSR (x^15 + x^14 + 1).
class Prbs15
{
public:
  explicit Prbs15(std::uint64_t seed) : state_(static_cast<std::uint16_t>((splitmix64(seed) & 0x7FFF) | 1)) {}

  bool next()
  {
    const unsigned bit = ((state_ >> 14) ^ (state_ >> 13)) & 1u;
    state_ = static_cast<std::uint16_t>(((state_ << 1) | bit) & 0x7FFF);
    return bit != 0;
  }

private:
  std::uint16_t state_;
};

/// Valves follow independent PRBS sequences held for prbs_hold control
/// steps; a comfort guard overrides the sequence outside [guard_low, guard_high].
class PrbsPolicy final : public Controller
{
public:
  PrbsPolicy(const Scenario & sc, std::size_t zones) : sc_(sc)
  {
    for (std::size_t i = 0; i < zones; ++i) gen_.emplace_back(derive_seed(sc.seed, 3, i));
    bits_.assign(zones, 0.0);
  }

  void act(const ControlInput & in, std::span<double> valves, std::span<double>) override
  {
    const auto hold_min = static_cast<std::size_t>(sc_.control_step.count() / 60) * sc_.prbs_hold;
    if (in.minute % hold_min == 0)
      for (std::size_t i = 0; i < valves.size(); ++i) bits_[i] = gen_[i].next() ? 1.0 : 0.0;
    for (std::size_t i = 0; i < valves.size(); ++i) {
      double b = bits_[i];
      const double T = in.measured[i];
      if (in.mode == ThermalMode::Heating) {
        if (T > sc_.guard_high) b = 0.0;
        if (T < sc_.guard_low) b = 1.0;
      } else {
        if (T < sc_.guard_low) b = 0.0;
        if (T > sc_.guard_high) b = 1.0;
      }
      valves[i] = b;
    }
  }

private:
  Scenario sc_;
  std::vector<Prbs15> gen_;
  std::vector<double> bits_;
};

namespace detail {

inline double day_mean(std::span<const double> v, std::size_t day)
{
  const std::size_t a = day * 1440, e = std::min(v.size(), a + 1440);
  double s = 0.0;
  for (std::size_t k = a; k < e; ++k) s += v[k];
  return e > a ? s / static_cast<double>(e - a) : 0.0;
}

}  // namespace detail

/// Weather for a scenario, warm-up included.
inline TimeSeries scenario_weather(const PlantParams & p, const Scenario & sc)
{
  const auto begin = sc.start - std::chrono::days{static_cast<int>(sc.warmup_days)};
  // One spare day so that forecasts near the end stay inside the trace.
  return synth_weather(sc.days + sc.warmup_days + 1, begin, derive_seed(sc.seed, 1), p.latitude, p.longitude, p.weather);
}

/// Runs `ctl` against the plant at one-minute resolution and returns the
/// logged record after the warm-up. Allocated per-zone energies come from
/// the metered total, as a building would measure them.
inline TimeSeries run_simulation(const PlantParams & p, const TimeSeries & weather, Controller & ctl, const Scenario & sc)
{
  p.validate();
  sc.validate();
  const std::size_t nz = p.size();
  const std::size_t total = (sc.days + sc.warmup_days) * 1440;
  if (weather.length() < total || weather.step() != Seconds{60})
    throw Error(ErrorCode::ForecastTooShort, "weather trace does not cover the scenario at 1-minute resolution");
  const auto t_amb = weather["T_amb"];
  const auto i_hor = weather["I_hor"];

  auto season_mode = [&](std::size_t day, ThermalMode prev) {
    if (sc.season == Season::Heating) return ThermalMode::Heating;
    if (sc.season == Season::Cooling) return ThermalMode::Cooling;
    const double m = detail::day_mean(t_amb, day == 0 ? 0 : day - 1);
    if (m < sc.heat_below) return ThermalMode::Heating;
    if (m > sc.cool_above) return ThermalMode::Cooling;
    if (day == 0) return m < 0.5 * (sc.heat_below + sc.cool_above) ? ThermalMode::Heating : ThermalMode::Cooling;
    return prev;
  };

  ThermalMode mode = season_mode(0, ThermalMode::Heating);
  const double t0 = mode == ThermalMode::Heating ? sc.heating_setpoint - 0.5 * sc.band : sc.cooling_setpoint + 0.5 * sc.band;
  PlantState state = initial_state(p, weather.start(), t0, t_amb[0]);

  SimulationLog log;
  log.zones = nz;
  log.T.assign(nz, {});
  log.b.assign(nz, {});
  log.Q.assign(nz, {});
  log.extra_names = ctl.extra_channels();
  log.extra.assign(log.extra_names.size(), {});
  for (auto * v : {&log.Q_total, &log.T_sup, &log.T_amb, &log.I_hor, &log.mode}) v->reserve(total);

  std::vector<double> flows;
  for (const auto & z : p.zones) flows.push_back(z.design_flow);
  Rng noise(derive_seed(sc.seed, 2));
  std::vector<double> measured(nz), valves(nz), extra(log.extra_names.size());

  for (std::size_t k = 0; k < total; ++k) {
    if (k % 1440 == 0) mode = season_mode(k / 1440, mode);
    for (std::size_t i = 0; i < nz; ++i) measured[i] = state.T_zone[i] + p.noise_sigma * noise.normal();
    std::fill(valves.begin(), valves.end(), 0.0);
    std::fill(extra.begin(), extra.end(), 0.0);
    ControlInput in{k, state.time, mode, measured, &log, &weather, &p};
    ctl.act(in, valves, extra);
    for (auto & v : valves) v = std::clamp(v, 0.0, 1.0);

    const double t_sup = p.supply(mode);
    const auto before = state.energy_Wh;
    state = step(p, state, valves, t_sup, {t_amb[k], i_hor[k]}, 60.0);
    double q_total = 0.0;
    for (std::size_t i = 0; i < nz; ++i) q_total += state.energy_Wh[i] - before[i];
    const auto alloc = allocate_energy(q_total, valves, flows);

    for (std::size_t i = 0; i < nz; ++i) {
      log.T[i].push_back(measured[i]);
      log.b[i].push_back(valves[i]);
      log.Q[i].push_back(alloc[i]);
    }
    log.Q_total.push_back(q_total);
    log.T_sup.push_back(t_sup);
    log.T_amb.push_back(t_amb[k]);
    log.I_hor.push_back(i_hor[k]);
    log.mode.push_back(mode == ThermalMode::Heating ? 1.0 : -1.0);
    for (std::size_t e = 0; e < extra.size(); ++e) log.extra[e].push_back(extra[e]);
  }

  const std::size_t skip = sc.warmup_days * 1440;
  auto tail = [&](const std::vector<double> & v) { return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(skip), v.end()); };
  std::vector<Channel> ch;
  for (std::size_t i = 0; i < nz; ++i) ch.push_back({"T_" + std::to_string(i + 1), Unit::Celsius, tail(log.T[i])});
  for (std::size_t i = 0; i < nz; ++i) ch.push_back({"b_" + std::to_string(i + 1), Unit::Fraction, tail(log.b[i])});
  for (std::size_t i = 0; i < nz; ++i) ch.push_back({"Q_" + std::to_string(i + 1), Unit::Energy, tail(log.Q[i])});
  ch.push_back({"Q_total", Unit::Energy, tail(log.Q_total)});
  ch.push_back({"T_sup", Unit::Celsius, tail(log.T_sup)});
  ch.push_back({"T_amb", Unit::Celsius, tail(log.T_amb)});
  ch.push_back({"I_hor", Unit::Irradiance, tail(log.I_hor)});
  ch.push_back({"hc_mode", Unit::Dimensionless, tail(log.mode)});
  for (std::size_t e = 0; e < log.extra.size(); ++e)
    ch.push_back({log.extra_names[e].first, log.extra_names[e].second, tail(log.extra[e])});
  return TimeSeries(sc.start, Seconds{60}, std::move(ch));
}

enum class DatasetController { Hysteresis, Prbs };

inline DatasetController parse_dataset_controller(std::string_view s)
{
  if (s == "hysteresis") return DatasetController::Hysteresis;
  if (s == "prbs") return DatasetController::Prbs;
  throw Error(ErrorCode::ConfigError, "dataset controller must be hysteresis or prbs, got '" + std::string(s) + "'");
}

/// Closed-loop training data at one-minute resolution. MPC episodes go
/// through run_simulation with an MPC controller instead.
inline TimeSeries generate_dataset(const PlantParams & p, DatasetController kind, const Scenario & sc)
{
  const auto weather = scenario_weather(p, sc);
  if (kind == DatasetController::Hysteresis) {
    HysteresisPolicy ctl(sc);
    return run_simulation(p, weather, ctl, sc);
  }
  PrbsPolicy ctl(sc, p.size());
  return run_simulation(p, weather, ctl, sc);
}

inline void to_json(nlohmann::json & j, const Scenario & s)
{
  j = nlohmann::json{{"start", format_rfc3339(s.start)}, {"days", s.days}, {"warmup_days", s.warmup_days},
    {"seed", s.seed}, {"season", to_string(s.season)}, {"heating_setpoint", s.heating_setpoint},
    {"cooling_setpoint", s.cooling_setpoint}, {"band", s.band}, {"heat_below", s.heat_below},
    {"cool_above", s.cool_above}, {"control_step_s", s.control_step.count()}, {"prbs_hold", s.prbs_hold},
    {"guard_low", s.guard_low}, {"guard_high", s.guard_high}};
}

inline void from_json(const nlohmann::json & j, Scenario & s)
{
  if (j.contains("start")) s.start = parse_rfc3339(j.at("start").get<std::string>());
  s.days = j.value("days", s.days);
  s.warmup_days = j.value("warmup_days", s.warmup_days);
  s.seed = j.value("seed", s.seed);
  if (j.contains("season")) s.season = parse_season(j.at("season").get<std::string>());
  s.heating_setpoint = j.value("heating_setpoint", s.heating_setpoint);
  s.cooling_setpoint = j.value("cooling_setpoint", s.cooling_setpoint);
  s.band = j.value("band", s.band);
  s.heat_below = j.value("heat_below", s.heat_below);
  s.cool_above = j.value("cool_above", s.cool_above);
  if (j.contains("control_step_s")) s.control_step = Seconds{j.at("control_step_s").get<std::int64_t>()};
  s.prbs_hold = j.value("prbs_hold", s.prbs_hold);
  s.guard_low = j.value("guard_low", s.guard_low);
  s.guard_high = j.value("guard_high", s.guard_high);
  s.validate();
}

}  // namespace bmpc
