#include <gtest/gtest.h>

#include "bmpc/armax.hpp"
#include "bmpc/nnls.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace bmpc;
using bmpc::test_support::linear_armax_series;
using bmpc::test_support::planted_theta;

namespace {

RegressorConfig valve_config()
{
  RegressorConfig c;
  c.actuator = ActuatorOption::ValveOnly;
  return c;
}

}  // namespace

TEST(Nnls, Examples)
{
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_TRUE(nnls(I, Eigen::Vector2d(1, -2)).x.isApprox(Eigen::Vector2d(1, 0)));
  EXPECT_TRUE(nnls(I, Eigen::Vector2d(3, 4)).x.isApprox(Eigen::Vector2d(3, 4)));
  EXPECT_EQ(nnls(I, Eigen::Vector2d(-1, -2)).x, Eigen::Vector2d::Zero());
}

TEST(Nnls, MatchesExhaustiveOracle)
{
  Rng rng(2024);
  for (int t = 0; t < 300; ++t) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(6));
    const auto m = static_cast<Eigen::Index>(n + rng.below(static_cast<std::uint64_t>(13 - n)));
    Eigen::MatrixXd A(m, n);
    Eigen::VectorXd b(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      b(i) = rng.normal();
      for (Eigen::Index j = 0; j < n; ++j) A(i, j) = rng.normal();
    }
    const auto r = nnls(A, b);
    ASSERT_TRUE((r.x.array() >= 0.0).all());
    EXPECT_NEAR((A * r.x - b).squaredNorm(), oracle::nnls_objective(A, b), 1e-9) << "trial " << t;
    const Eigen::VectorXd g = A.transpose() * (A * r.x - b);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (r.x(j) > 0.0) EXPECT_LE(std::abs(g(j)), 1e-8);
      else EXPECT_GE(g(j), -1e-8);
    }
  }
}

TEST(Nnls, RankDeficient)
{
  Eigen::MatrixXd A(4, 3);
  A << 1, 1, 0, 2, 2, 0, 3, 3, 0, 4, 4, 0;
  const Eigen::VectorXd b = Eigen::Vector4d(1, 2, 3, 4);
  const auto r = nnls(A, b);
  EXPECT_NEAR((A * r.x - b).norm(), 0.0, 1e-10);
  EXPECT_EQ(r.x(2), 0.0);
}

TEST(Armax, CoefficientCount)
{
  const RegressorConfig c;
  const auto ts = linear_armax_series(valve_config(), planted_theta(valve_config()), 400, 1);
  EXPECT_EQ(fit_armax(ts, c, true).theta.size(), 52);
}

TEST(Armax, RecoversPlantedCoefficients)
{
  const auto c = valve_config();
  const auto theta = planted_theta(c);
  const auto ts = linear_armax_series(c, theta, 2000, 3);
  for (bool nonneg : {true, false}) {
    const auto m = fit_armax(ts, c, nonneg);
    EXPECT_LE((m.theta - theta).cwiseAbs().maxCoeff(), 1e-6) << "nonneg " << nonneg;
    EXPECT_LT(m.stats.rmse, 1e-8);
  }
}

TEST(Armax, NonnegCoefficients)
{
  const auto c = valve_config();
  const auto ts = linear_armax_series(c, planted_theta(c), 800, 4, 0.2);
  const auto m = fit_armax(ts, c, true);
  EXPECT_TRUE((m.theta.array() >= 0.0).all());
  EXPECT_TRUE(m.nonneg);
}

TEST(Armax, ConstantDataReproducesConstant)
{
  const std::size_t n = 200;
  std::vector<Channel> ch;
  for (const char * name : {"T_1", "T_2", "T_amb", "T_sup"}) ch.push_back({name, Unit::Celsius, std::vector<double>(n, 21.0)});
  ch.push_back({"b_1", Unit::Fraction, std::vector<double>(n, 0.0)});
  ch.push_back({"I_hor", Unit::Irradiance, std::vector<double>(n, 0.0)});
  const TimeSeries ts(make_time(2019, 1, 7), Seconds{1800}, std::move(ch));
  const auto m = fit_armax(ts, RegressorConfig{}, true);
  const auto p = predict_openloop(m, ts.slice(0, 10), ts.slice(10, 40), 30);
  for (double v : p) EXPECT_NEAR(v, 21.0, 1e-9);
}

TEST(Armax, ZeroSteps)
{
  const auto c = valve_config();
  const auto ts = linear_armax_series(c, planted_theta(c), 50, 5);
  const auto m = fit_armax(ts, c, true);
  EXPECT_TRUE(predict_openloop(m, ts.slice(0, 10), ts.slice(10, 20), 0).empty());
}

TEST(Armax, RandomWalkModel)
{
  const auto c = valve_config();
  const auto ts = linear_armax_series(c, planted_theta(c), 60, 6);
  ArmaxModel m;
  m.config = c;
  m.theta = Eigen::VectorXd::Zero(52);
  m.theta(0) = 1.0;
  const auto p = predict_openloop(m, ts.slice(0, 20), ts.slice(20, 40), 12);
  ASSERT_EQ(p.size(), 12u);
  for (double v : p) EXPECT_EQ(v, ts["T_1"][19]);
}

// Two-step prediction rebuilt by hand from two one-step predictions.
TEST(Armax, TwoStepComposition)
{
  RegressorConfig c;  // valve_times_dT: future drive uses the anchor temperature
  const auto ts = linear_armax_series(valve_config(), planted_theta(valve_config()), 120, 7, 0.05);
  const auto m = fit_armax(ts, c, true);
  const std::size_t a = 50;
  const auto hist = ts.slice(0, a + 1);
  const auto fut = ts.slice(a + 1, a + 3);
  const auto p = predict_openloop(m, hist, fut, 2);

  const auto s = compute_signals(ts.slice(0, a + 3), c);
  auto row_at = [&](std::size_t k, const std::vector<double> & y, const std::vector<double> & u) {
    Eigen::RowVectorXd r(52);
    for (std::size_t j = 0; j < 4; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      r(jj) = y[k - j];
      r(4 + jj) = u[k - j];
      r(8 + jj) = s.ambient[k - j];
      r(12 + jj) = s.neighbor[k - j];
      r.segment(16 + 9 * jj, 9) = s.solar.row(static_cast<Eigen::Index>(k - j));
    }
    return r;
  };
  std::vector<double> y = s.y, u = s.u;
  const double t_bar = y[a];
  const auto b1 = ts["b_1"];
  const auto sup = ts["T_sup"];
  u[a + 1] = b1[a + 1] * (sup[a + 1] - t_bar);
  const double y1 = row_at(a, y, u).dot(m.theta);
  EXPECT_NEAR(p[0], y1, 1e-12);
  y[a + 1] = y1;
  EXPECT_NEAR(p[1], row_at(a + 1, y, u).dot(m.theta), 1e-12);
}

// Raising any disturbance never lowers a prediction of a non-negative model.
TEST(Armax, MonotoneInDisturbances)
{
  const auto c = valve_config();
  const auto ts = linear_armax_series(c, planted_theta(c), 300, 8, 0.1);
  const auto m = fit_armax(ts, c, true);
  const std::size_t a = 150, steps = 8;
  const auto base = predict_openloop(m, ts.slice(0, a + 1), ts.slice(a + 1, a + 1 + steps), steps);
  for (const char * ch : {"T_amb", "T_2", "I_hor", "b_1"}) {
    for (std::size_t k = a - 3; k < a + steps; ++k) {
      std::vector<double> v(ts[ch].begin(), ts[ch].end());
      v[k] = std::string_view(ch) == "b_1" ? std::min(1.0, v[k] + 0.5) : v[k] + 50.0;
      const auto bumped = ts.with_channel({ch, ts.channel_info(ch).unit, v});
      const auto p = predict_openloop(m, bumped.slice(0, a + 1), bumped.slice(a + 1, a + 1 + steps), steps);
      for (std::size_t i = 0; i < steps; ++i) ASSERT_GE(p[i], base[i] - 1e-12) << ch << " at " << k;
    }
  }
}

TEST(Armax, JsonRoundTrip)
{
  const auto c = valve_config();
  const auto m = fit_armax(linear_armax_series(c, planted_theta(c), 200, 9), c, false);
  const auto back = nlohmann::json(m).get<ArmaxModel>();
  EXPECT_EQ(back.theta, m.theta);
  EXPECT_EQ(back.nonneg, m.nonneg);
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(m));
}
