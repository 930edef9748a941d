#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "bmpc/plant.hpp"
#include "bmpc/regressors.hpp"
#include "bmpc/weather.hpp"

using namespace bmpc;

namespace {

// Minute of maximum elevation on a given day, by scanning.
Timestamp solar_noon(int y, unsigned m, unsigned d, double lat, double lon)
{
  Timestamp best = make_time(y, m, d);
  double hi = -100.0;
  for (int k = 0; k < 1440; ++k) {
    const auto t = make_time(y, m, d) + Seconds{60 * k};
    const double b = solar_position(t, lat, lon).beta;
    if (b > hi) hi = b, best = t;
  }
  return best;
}

}  // namespace

TEST(SolarPosition, EquinoxNoonElevation)
{
  const auto t = solar_noon(2019, 3, 20, 47.4, 8.6);
  EXPECT_NEAR(solar_position(t, 47.4, 8.6).beta, 42.6, 1.0);
  // Noon lands near 12:00 minus 4 min per degree of longitude.
  EXPECT_NEAR(hour_of_day(t), 12.0 - 8.6 / 15.0, 0.25);
}

TEST(SolarPosition, MidnightBelowHorizon)
{
  for (unsigned m = 1; m <= 12; ++m) {
    const auto t = make_time(2020, m, 15, 23, 25);  // local solar midnight at 8.6 E
    EXPECT_LT(solar_position(t, 47.4, 8.6).beta, 0.0) << m;
  }
}

TEST(SolarPosition, EquinoxSunriseAzimuth)
{
  Timestamp rise{};
  for (int k = 0; k < 1440; ++k) {
    const auto t = make_time(2019, 3, 20) + Seconds{60 * k};
    if (solar_position(t, 47.4, 8.6).beta >= 0.0) {
      rise = t;
      break;
    }
  }
  EXPECT_NEAR(solar_position(rise, 47.4, 8.6).alpha, 90.0, 3.0);
}

TEST(SolarPosition, Ranges)
{
  for (int h = 0; h < 24 * 365; h += 7) {
    const auto g = solar_position(make_time(2019, 1, 1) + Seconds{3600 * h}, -33.9, 151.2);
    EXPECT_GE(g.alpha, 0.0);
    EXPECT_LT(g.alpha, 360.0);
    EXPECT_LE(std::abs(g.beta), 90.0);
  }
  EXPECT_THROW((void)solar_position(make_time(2019, 1, 1), 91.0, 0.0), Error);
}

TEST(VerticalIrradiance, Examples)
{
  EXPECT_NEAR(vertical_irradiance(100.0, 45.0), 100.0, 1e-12);
  EXPECT_EQ(vertical_irradiance(500.0, 2.0), 0.0);
  EXPECT_NEAR(vertical_irradiance(100.0, 30.0), 100.0 * std::cos(std::numbers::pi / 6) / std::sin(std::numbers::pi / 6), 1e-12);
  EXPECT_NEAR(vertical_irradiance(100.0, 30.0), 173.205, 1e-3);
  EXPECT_EQ(vertical_irradiance(1000.0, 6.0), kSolarConstant);
}

TEST(VerticalIrradiance, MonotoneInIrradiance)
{
  for (double beta : {5.0, 10.0, 40.0, 80.0}) {
    double prev = -1.0;
    for (double i = 0.0; i <= 1000.0; i += 10.0) {
      const double v = vertical_irradiance(i, beta);
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(WindowGain, Examples)
{
  SolarGeometry g{47.4, 8.6, 270.0, 45.0};
  EXPECT_NEAR(window_gain(100.0, g, 2.0, 90.0), 0.0, 1e-12);  // sun behind the window
  g.beta = 3.0;
  g.alpha = 180.0;
  EXPECT_EQ(window_gain(100.0, g, 2.0, 90.0), 0.0);
  g.beta = 45.0;
  EXPECT_NEAR(window_gain(100.0, g, 2.0, 90.0), 200.0, 1e-9);
}

TEST(OneHot, Examples)
{
  const OneHotSolarConfig c{4};
  EXPECT_EQ(onehot_encode(50.0, 3.0, c), (std::vector<double>{50, 0, 0, 0}));
  EXPECT_EQ(onehot_encode(80.0, 7.0, c), (std::vector<double>{0, 80, 0, 0}));
  EXPECT_EQ(onehot_encode(0.0, 13.0, c), (std::vector<double>{0, 0, 0, 0}));
  EXPECT_EQ(onehot_encode(9.0, 23.99, c), (std::vector<double>{0, 0, 0, 9}));
  EXPECT_THROW((void)onehot_encode(1.0, 1.0, OneHotSolarConfig{0}), Error);
}

TEST(OneHot, SingleNonzeroSummingToInput)
{
  for (int tau : {1, 3, 9, 24})
    for (double h = 0.0; h < 24.0; h += 0.37) {
      const auto v = onehot_encode(123.0, h, OneHotSolarConfig{tau});
      int nz = 0;
      double sum = 0.0;
      for (double x : v) nz += x != 0.0, sum += x;
      EXPECT_EQ(nz, 1);
      EXPECT_EQ(sum, 123.0);
      EXPECT_EQ(v[static_cast<std::size_t>(h * tau / 24.0)], 123.0);
    }
}

TEST(Actuator, Examples)
{
  EXPECT_EQ(actuator_input(ActuatorOption::ValveOnly, 0.5, std::nullopt, 0.0), 0.5);
  EXPECT_EQ(actuator_input(ActuatorOption::ValveTimesDT, 1.0, 35.0, 22.0), 13.0);
  EXPECT_EQ(actuator_input(ActuatorOption::ValveTimesDT, 1.0, 18.0, 24.0, 0.0, ThermalMode::Cooling), -6.0);
  EXPECT_EQ(actuator_input(ActuatorOption::MeasuredEnergy, 0.3, std::nullopt, 0.0, 42.0), 42.0);
  try {
    (void)actuator_input(ActuatorOption::ValveTimesDT, 1.0, std::nullopt, 22.0);
    FAIL();
  } catch (const Error & e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingSupplyTemperature);
  }
}

namespace {

TimeSeries constant_series(std::size_t n, double v)
{
  std::vector<Channel> ch;
  for (const char * name : {"T_1", "T_2", "T_amb", "T_sup"}) ch.push_back({name, Unit::Celsius, std::vector<double>(n, v)});
  ch.push_back({"b_1", Unit::Fraction, std::vector<double>(n, 0.5)});
  ch.push_back({"Q_1", Unit::Energy, std::vector<double>(n, 10.0)});
  ch.push_back({"I_hor", Unit::Irradiance, std::vector<double>(n, 0.0)});
  return TimeSeries(make_time(2019, 1, 7), Seconds{1800}, std::move(ch));
}

}  // namespace

TEST(RegressionRows, Widths)
{
  RegressorConfig c;
  const auto d = build_regression_rows(constant_series(20, 21.0), c);
  EXPECT_EQ(d.X.cols(), 52);
  EXPECT_EQ(d.X.rows(), 20 - 3 - 1);
  c.delta = 0;
  c.tau = 1;
  EXPECT_EQ(build_regression_rows(constant_series(20, 21.0), c).X.cols(), 5);
  c.neighbor.clear();
  EXPECT_EQ(build_regression_rows(constant_series(20, 21.0), c).X.cols(), 4);
}

TEST(RegressionRows, ConstantSeries)
{
  const auto d = build_regression_rows(constant_series(30, 21.0), RegressorConfig{});
  for (Eigen::Index r = 1; r < d.X.rows(); ++r) EXPECT_TRUE(d.X.row(r) == d.X.row(0));
  for (Eigen::Index r = 0; r < d.y.size(); ++r) EXPECT_EQ(d.y(r), 21.0);
  // valve_times_dT drive: 0.5 * (21 - 21)
  EXPECT_EQ(d.X(0, 4), 0.0);
}

TEST(RegressionRows, LagLayout)
{
  auto ts = constant_series(10, 21.0);
  std::vector<double> y(10);
  for (std::size_t k = 0; k < 10; ++k) y[k] = static_cast<double>(k);
  ts = ts.with_channel({"T_1", Unit::Celsius, y});
  RegressorConfig c;
  c.actuator = ActuatorOption::MeasuredEnergy;
  const auto d = build_regression_rows(ts, c);
  // Row r predicts y[r + 4] from y[r + 3], ..., y[r].
  for (Eigen::Index r = 0; r < d.X.rows(); ++r) {
    EXPECT_EQ(d.y(r), static_cast<double>(r + 4));
    for (int j = 0; j < 4; ++j) EXPECT_EQ(d.X(r, j), static_cast<double>(r + 3 - j));
    EXPECT_EQ(d.X(r, 4), 10.0);
  }
}

TEST(RegressionRows, Errors)
{
  RegressorConfig c;
  try {
    (void)build_regression_rows(constant_series(4, 21.0), c);
    FAIL();
  } catch (const Error & e) {
    EXPECT_EQ(e.code(), ErrorCode::TooShort);
  }
  c.neighbor = "T_9";
  try {
    (void)build_regression_rows(constant_series(20, 21.0), c);
    FAIL();
  } catch (const Error & e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingChannel);
  }
}

// One-hot features explain the physical window gain well over a year.
TEST(SolarFit, OneHotExplainsWindowGain)
{
  const auto p = default_plant();
  const Seconds step{1800};
  const auto w = resample(synth_weather(365, make_time(2019, 1, 1), 11, p.latitude, p.longitude, p.weather), step);
  const RegressorConfig c;
  const auto n = static_cast<Eigen::Index>(w.length());
  for (const auto & z : p.zones) {
    Eigen::MatrixXd X(n, c.tau + 1);
    Eigen::VectorXd y(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto t = w.time_at(static_cast<std::size_t>(k));
      const double ih = w["I_hor"][static_cast<std::size_t>(k)];
      X.row(k).head(c.tau) = solar_features(t, step, ih, c).transpose();
      X(k, c.tau) = 1.0;
      y(k) = window_gain(ih, solar_position(t + step / 2, p.latitude, p.longitude), z.A_win, z.alpha0);
    }
    // Train on even days, test on odd days.
    std::vector<Eigen::Index> tr, te;
    for (Eigen::Index k = 0; k < n; ++k) ((k / 48) % 2 ? te : tr).push_back(k);
    const Eigen::MatrixXd Xt = X(tr, Eigen::all);
    const Eigen::VectorXd theta = Xt.colPivHouseholderQr().solve(y(tr));
    const Eigen::VectorXd res = y(te) - X(te, Eigen::all) * theta;
    const double r2 = 1.0 - res.squaredNorm() / (y(te).array() - y(te).mean()).square().sum();
    EXPECT_GE(r2, 0.90) << "alpha0 " << z.alpha0;
  }
}
