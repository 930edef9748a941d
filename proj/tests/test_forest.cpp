#include <sstream>

#include <gtest/gtest.h>

#include "bmpc/forest.hpp"
#include "test_util.hpp"

using namespace bmpc;

namespace {

// Target 2*u + noise; X_d is irrelevant noise.
StepDataset slope_dataset(std::size_t rows, double noise, std::uint64_t seed, const StepFeatureSpec & spec)
{
  Rng rng(seed);
  StepDataset d;
  d.Xd.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(spec.n_d()));
  d.Xc.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(spec.n_c()));
  d.y.resize(static_cast<Eigen::Index>(rows));
  for (Eigen::Index r = 0; r < d.y.size(); ++r) {
    for (Eigen::Index j = 0; j < d.Xd.cols(); ++j) d.Xd(r, j) = rng.normal();
    double acc = 1.0;
    for (Eigen::Index j = 0; j < d.Xc.cols(); ++j) {
      d.Xc(r, j) = rng.uniform();
      acc += 2.0 * d.Xc(r, j);
    }
    d.y(r) = acc + noise * rng.normal();
  }
  return d;
}

// Target depends on X_d so that trees actually split.
StepDataset split_dataset(std::size_t rows, std::uint64_t seed, const StepFeatureSpec & spec)
{
  auto d = slope_dataset(rows, 0.01, seed, spec);
  for (Eigen::Index r = 0; r < d.y.size(); ++r)
    d.y(r) += (d.Xd(r, 0) > 0.0 ? 3.0 : -1.0) * d.Xc(r, 0) + 0.5 * d.Xd(r, 1);
  return d;
}

ForestModel hand_model(std::vector<std::pair<double, double>> leaves)
{
  ForestModel m;
  m.spec = StepFeatureSpec{1, 0};
  for (auto [w, b] : leaves) {
    Tree t;
    t.nodes.push_back(TreeNode{-1, 0.0, -1, -1, 0});
    t.leaves.push_back(LeafModel{Eigen::VectorXd::Constant(1, w), b, 1});
    m.trees.push_back(t);
  }
  return m;
}

std::vector<double> row(const Eigen::MatrixXd & X, Eigen::Index r)
{
  std::vector<double> v(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index j = 0; j < X.cols(); ++j) v[static_cast<std::size_t>(j)] = X(r, j);
  return v;
}

}  // namespace

TEST(Forest, LearnsSlope)
{
  const StepFeatureSpec spec{1, 3};
  const auto d = slope_dataset(2000, 0.01, 1, spec);
  const auto m = fit_step_model(d, spec, ForestHyper{20, 200, 7, 1});
  for (const auto & t : m.trees)
    for (const auto & l : t.leaves) EXPECT_NEAR(l.w(0), 2.0, 0.05);
}

TEST(Forest, SingleLeafIsGlobalOls)
{
  const StepFeatureSpec spec{2, 1};
  const auto d = slope_dataset(500, 0.0, 2, spec);
  const auto m = fit_step_model(d, spec, ForestHyper{5, 500, 3, 1});
  for (const auto & t : m.trees) EXPECT_EQ(t.leaves.size(), 1u);
  // Noiseless target: every bootstrap OLS is the global OLS (w = 2, 2; b = 1).
  Eigen::MatrixXd A(d.y.size(), 3);
  A << d.Xc, Eigen::VectorXd::Ones(d.y.size());
  const Eigen::VectorXd ols = A.colPivHouseholderQr().solve(d.y);
  const auto xd = row(d.Xd, 0);
  const auto f = extract_affine(m, xd);
  EXPECT_NEAR(f.w(0), ols(0), 1e-9);
  EXPECT_NEAR(f.w(1), ols(1), 1e-9);
  EXPECT_NEAR(f.b, ols(2), 1e-9);
}

TEST(Forest, DeterministicAcrossJobs)
{
  const StepFeatureSpec spec{1, 3};
  const auto d = split_dataset(1500, 3, spec);
  const auto a = fit_step_model(d, spec, ForestHyper{12, 50, 11, 1});
  const auto b = fit_step_model(d, spec, ForestHyper{12, 50, 11, 3});
  RfModel ra, rb;
  ra.steps = {a};
  rb.steps = {b};
  std::ostringstream sa, sb;
  write_forest_binary(sa, ra);
  write_forest_binary(sb, rb);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Forest, HandModels)
{
  const std::vector<double> xd(StepFeatureSpec{1, 0}.n_d(), 0.0);
  const auto one = hand_model({{0.5, 0.1}});
  EXPECT_NEAR(predict(one, xd, std::vector<double>{1.0}), 0.6, 1e-15);
  const auto two = hand_model({{1.0, 0.0}, {3.0, 2.0}});
  const auto f = extract_affine(two, xd);
  EXPECT_EQ(f.w(0), 2.0);
  EXPECT_EQ(f.b, 1.0);
  EXPECT_EQ(predict(two, xd, std::vector<double>{0.0}), 1.0);
  EXPECT_THROW((void)predict(two, xd, std::vector<double>{0.0, 1.0}), Error);
  EXPECT_THROW((void)extract_affine(two, std::vector<double>{0.0, 1.0}), Error);
  EXPECT_EQ(xd.size(), 12u);
}

TEST(Forest, PredictEqualsExtractedMap)
{
  const StepFeatureSpec spec{3, 3};
  const auto d = split_dataset(3000, 4, spec);
  const auto m = fit_step_model(d, spec, ForestHyper{25, 60, 5, 1});
  Rng rng(9);
  for (int p = 0; p < 100; ++p) {
    std::vector<double> xd(spec.n_d()), xc(spec.n_c());
    for (auto & x : xd) x = rng.normal();
    for (auto & x : xc) x = rng.uniform(-1.0, 2.0);
    const auto f = extract_affine(m, xd);
    EXPECT_EQ(predict(m, xd, xc), f(xc));
  }
}

TEST(Forest, LeafSizeAudit)
{
  const StepFeatureSpec spec{1, 3};
  const auto d = split_dataset(4000, 5, spec);
  const auto m = fit_step_model(d, spec, ForestHyper{10, 150, 6, 1});
  std::size_t leaves = 0;
  for (const auto & t : m.trees)
    for (const auto & l : t.leaves) {
      EXPECT_GE(l.rows, 150u);
      ++leaves;
    }
  EXPECT_GT(leaves, m.trees.size());  // trees did split
}

TEST(Forest, ZeroWeightsIgnoreControls)
{
  const StepFeatureSpec spec{1, 3};
  auto d = split_dataset(1000, 6, spec);
  d.Xc.setZero();
  const auto m = fit_step_model(d, spec, ForestHyper{5, 100, 1, 1});
  const auto xd = row(d.Xd, 3);
  const double base = predict(m, xd, std::vector<double>{0.0});
  if (extract_affine(m, xd).w.isZero(0.0))
    EXPECT_EQ(predict(m, xd, std::vector<double>{5.0}), base);
}

TEST(Forest, NotEnoughData)
{
  const StepFeatureSpec spec{1, 3};
  try {
    (void)fit_step_model(slope_dataset(100, 0.0, 1, spec), spec, ForestHyper{2, 200, 0, 1});
    FAIL();
  } catch (const Error & e) {
    EXPECT_EQ(e.code(), ErrorCode::NotEnoughData);
  }
}

namespace {

TimeSeries plant_like(std::size_t n)
{
  RegressorConfig c;
  c.actuator = ActuatorOption::ValveOnly;
  return test_support::linear_armax_series(c, test_support::planted_theta(c), n, 12, 0.05);
}

}  // namespace

// The k = 2 features never see y at time 1.
TEST(ForestFeatures, NoPredictedOutputs)
{
  const auto ts = plant_like(40);
  RegressorConfig c;
  auto s = step_signals(ts, c);
  const StepFeatureSpec spec{2, 3};
  std::vector<double> a(spec.n_d()), b(spec.n_d());
  step_features_d(s, 10, spec, a);
  s.y[11] += 100.0;
  s.y[12] += 100.0;
  step_features_d(s, 10, spec, b);
  EXPECT_EQ(a, b);
  for (const auto & n : spec.d_names()) EXPECT_NE(n, "y_1");
  EXPECT_EQ(spec.d_names().size(), spec.n_d());
}

TEST(ForestHorizon, StepsShareRows)
{
  const auto ts = plant_like(900);
  RegressorConfig c;
  const std::vector<TimeSeries> segs{ts.slice(0, 450), ts.slice(450, 900)};
  const auto m = fit_horizon(segs, c, 4, ForestHyper{3, 100, 2, 1});
  ASSERT_EQ(m.horizon(), 4);
  for (const auto & f : m.steps) EXPECT_EQ(f.training_rows, 2u * (450u - 3u - 4u));
  const auto one = fit_horizon(segs, c, 1, ForestHyper{3, 100, 2, 1});
  EXPECT_EQ(one.steps.size(), 1u);
  EXPECT_EQ(one.steps[0].spec.d_names()[0], "y_-0");
}

TEST(ForestHorizon, BinaryRoundTrip)
{
  const auto ts = plant_like(600);
  RegressorConfig c;
  const std::vector<TimeSeries> segs{ts};
  const auto m = fit_horizon(segs, c, 3, ForestHyper{4, 80, 3, 1});
  std::stringstream io;
  write_forest_binary(io, m);
  RfModel back;
  back.config = m.config;
  back.hyper = m.hyper;
  read_forest_binary(io, back);
  std::ostringstream again;
  write_forest_binary(again, back);
  EXPECT_EQ(io.str(), again.str());
  const auto s = step_signals(ts, c);
  for (int k = 1; k <= 3; ++k)
    for (std::size_t a = 3; a < 500; a += 37) EXPECT_EQ(rf_predict_at(m, s, a, k), rf_predict_at(back, s, a, k));

  std::istringstream junk("not a forest");
  EXPECT_THROW(read_forest_binary(junk, back), Error);
  const auto j = forest_manifest(m, "x.rfbin");
  EXPECT_EQ(j["steps"].size(), 3u);
  EXPECT_EQ(j["sidecar"], "x.rfbin");
}
