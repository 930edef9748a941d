#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "bmpc/errors.hpp"
#include "bmpc/time_series.hpp"

namespace bmpc {

inline constexpr double kDeg = std::numbers::pi / 180.0;

/// Sun elevations below this are treated as zero vertical irradiance; the
/// cotangent diverges at the horizon.
inline constexpr double kMinElevationDeg = 5.0;

/// Solar constant; upper clamp on vertical irradiance.
inline constexpr double kSolarConstant = 1367.0;

struct SolarGeometry
{
  double latitude = 0.0;
  double longitude = 0.0;
  double alpha = 0.0;  ///< azimuth, degrees clockwise from north, [0, 360)
  double beta = 0.0;   ///< elevation, degrees above horizon, [-90, 90]
};

/// Declination / hour-angle approximation (Spencer series with equation of
/// time). Good to a fraction of a degree for current epochs.
inline SolarGeometry solar_position(Timestamp t, double latitude, double longitude)
{
  if (std::abs(latitude) > 90.0) throw Error(ErrorCode::ConfigError, "latitude outside [-90, 90]");
  const double hours = hour_of_day(t);
  const double g = 2.0 * std::numbers::pi / days_in_year(t) * (day_of_year(t) - 1 + (hours - 12.0) / 24.0);

  const double eqtime = 229.18 * (0.000075 + 0.001868 * std::cos(g) - 0.032077 * std::sin(g) -
                                   0.014615 * std::cos(2 * g) - 0.040849 * std::sin(2 * g));
  const double decl = 0.006918 - 0.399912 * std::cos(g) + 0.070257 * std::sin(g) - 0.006758 * std::cos(2 * g) +
                      0.000907 * std::sin(2 * g) - 0.002697 * std::cos(3 * g) + 0.00148 * std::sin(3 * g);

  const double true_solar_min = hours * 60.0 + eqtime + 4.0 * longitude;
  const double ha = (true_solar_min / 4.0 - 180.0) * kDeg;
  const double lat = latitude * kDeg;

  const double sin_elev = std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(ha);
  const double elev = std::asin(std::clamp(sin_elev, -1.0, 1.0));

  // Azimuth from south (westward positive), shifted to north-clockwise.
  const double az_south = std::atan2(std::sin(ha), std::cos(ha) * std::sin(lat) - std::tan(decl) * std::cos(lat));
  double az = az_south / kDeg + 180.0;
  az = std::fmod(az, 360.0);
  if (az < 0.0) az += 360.0;

  return {latitude, longitude, az, elev / kDeg};
}

/// Irradiance on a vertical surface facing the sun, cot(beta) * I_hor.
inline double vertical_irradiance(double i_hor, double beta_deg)
{
  if (beta_deg < kMinElevationDeg || i_hor <= 0.0) return 0.0;
  const double b = beta_deg * kDeg;
  return std::min(std::cos(b) / std::sin(b) * i_hor, kSolarConstant);
}

/// Physical window gain in W; ground truth for the plant simulator.
inline double window_gain(double i_hor, const SolarGeometry & geometry, double a_win, double alpha0_deg)
{
  const double facing = std::max(0.0, std::sin((geometry.alpha - alpha0_deg) * kDeg));
  return a_win * facing * vertical_irradiance(i_hor, geometry.beta);
}

struct OneHotSolarConfig
{
  int tau = 9;  ///< equal-length bins over [00:00, 24:00), bin 0 starts at midnight

  void validate() const
  {
    if (tau < 1) throw Error(ErrorCode::ConfigError, "tau must be >= 1");
  }
};

inline std::size_t onehot_bin(double hour_of_day, int tau)
{
  const double h = std::clamp(hour_of_day, 0.0, 24.0);
  const auto bin = static_cast<std::size_t>(std::floor(h / 24.0 * tau));
  return std::min(bin, static_cast<std::size_t>(tau - 1));
}

inline std::vector<double> onehot_encode(double i_vert, double hour_of_day, const OneHotSolarConfig & config)
{
  config.validate();
  std::vector<double> out(static_cast<std::size_t>(config.tau), 0.0);
  out[onehot_bin(hour_of_day, config.tau)] = i_vert;
  return out;
}

}  // namespace bmpc
