#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "bmpc/errors.hpp"
#include "bmpc/plant.hpp"
#include "bmpc/random.hpp"
#include "bmpc/solar.hpp"
#include "bmpc/time_series.hpp"

namespace bmpc {

/// Haurwitz clear-sky global horizontal irradiance, W/m2.
inline double clear_sky_ghi(double beta_deg)
{
  if (beta_deg <= 0.0) return 0.0;
  const double s = std::sin(beta_deg * kDeg);
  return 1098.0 * s * std::exp(-0.057 / s);
}

/// One-minute trace of T_amb and I_hor. Ambient is a seasonal plus diurnal
/// sinusoid plus an hourly AR(1) term (linearly interpolated); irradiance
/// is the clear-sky envelope times a daily cloudiness factor.
inline TimeSeries synth_weather(std::size_t days, Timestamp start, std::uint64_t seed, double latitude,
  double longitude, const WeatherParams & wp = {})
{
  if (days < 1) throw Error(ErrorCode::ConfigError, "days must be >= 1");
  const std::size_t n = days * 24 * 60;
  const std::size_t hours = days * 24 + 1;
  // Separate streams keep a longer trace's prefix identical to a shorter one.
  Rng rng(derive_seed(seed, 1));
  Rng sky(derive_seed(seed, 2));

  const double phi = std::exp(-1.0 / wp.noise_corr_hours);
  const double innov = wp.noise_sigma * std::sqrt(1.0 - phi * phi);
  std::vector<double> ar(hours);
  ar[0] = wp.noise_sigma * rng.normal();
  for (std::size_t h = 1; h < hours; ++h) ar[h] = phi * ar[h - 1] + innov * rng.normal();

  std::vector<double> cloud(days + 1);
  for (auto & c : cloud) c = sky.uniform(wp.cloud_min, wp.cloud_max);

  std::vector<double> t_amb(n), i_hor(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Timestamp t = start + Seconds{60 * static_cast<std::int64_t>(k)};
    const double doy = day_of_year(t) - 1 + hour_of_day(t) / 24.0;
    const double year_len = days_in_year(t);
    const double seasonal = -wp.seasonal_amplitude * std::cos(2.0 * std::numbers::pi * (doy - (wp.coldest_day - 1)) / year_len);
    // Warmest at 15:00, coldest at 03:00.
    const double diurnal = wp.diurnal_amplitude * std::cos(2.0 * std::numbers::pi * (hour_of_day(t) - 15.0) / 24.0);
    const std::size_t h = k / 60;
    const double frac = static_cast<double>(k % 60) / 60.0;
    const double noise = ar[h] * (1.0 - frac) + ar[h + 1] * frac;
    t_amb[k] = wp.mean + seasonal + diurnal + noise;

    const auto geo = solar_position(t, latitude, longitude);
    i_hor[k] = geo.beta > 0.0 ? clear_sky_ghi(geo.beta) * cloud[k / 1440] : 0.0;
  }
  return TimeSeries(start, Seconds{60},
    {{"T_amb", Unit::Celsius, std::move(t_amb)}, {"I_hor", Unit::Irradiance, std::move(i_hor)}});
}

}  // namespace bmpc
