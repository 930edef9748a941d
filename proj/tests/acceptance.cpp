// Acceptance runner: one PASS/FAIL line per criterion. Criteria listed in
// --known-red still print FAIL when they fail but do not set the exit code.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <sys/wait.h>

#include "CLI11.hpp"

#include "bmpc/bmpc.hpp"
#include "bmpc/model_io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace bmpc;

namespace {

const std::string kCli = BMPC_CLI;
const std::string kData = BMPC_DATA_DIR;

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(const char * f, auto... args)
{
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome solar_fit()
{
  const auto t0 = std::chrono::steady_clock::now();
  const auto p = default_plant();
  const Seconds step{1800};
  const auto w = resample(synth_weather(365, make_time(2019, 1, 1), 11, p.latitude, p.longitude, p.weather), step);
  RegressorConfig c;
  c.tau = 9;
  const auto n = static_cast<Eigen::Index>(w.length());
  const long per_day = 86400 / step.count();
  std::vector<Eigen::Index> train, test;
  for (Eigen::Index k = 0; k < n; ++k) ((k / per_day) % 2 ? test : train).push_back(k);

  double worst = 1.0;
  std::string zones;
  for (const auto & z : p.zones) {
    Eigen::MatrixXd X(n, c.tau + 1);
    Eigen::VectorXd y(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto t = w.time_at(static_cast<std::size_t>(k));
      const double ih = w["I_hor"][static_cast<std::size_t>(k)];
      X.row(k).head(c.tau) = solar_features(t, step, ih, c).transpose();
      X(k, c.tau) = 1.0;
      // Ground truth at the interval midpoint, where the features are centred.
      y(k) = window_gain(ih, solar_position(t + step / 2, p.latitude, p.longitude), z.A_win, z.alpha0);
    }
    const Eigen::VectorXd theta = X(train, Eigen::all).colPivHouseholderQr().solve(y(train));
    const Eigen::VectorXd res = y(test) - X(test, Eigen::all) * theta;
    const double r2 = 1.0 - res.squaredNorm() / (y(test).array() - y(test).mean()).square().sum();
    worst = std::min(worst, r2);
    zones += fmt(" %.3f", r2);
  }
  const double el = seconds_since(t0);
  return {worst >= 0.90 && el < 10.0,
    fmt("held-out R2 per zone%s (need >= 0.90) in %.1f s", zones.c_str(), el)};
}

Outcome nnls_oracle()
{
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2);
  double worst_obj = 0.0, worst_cs = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(6));
    const auto m = static_cast<Eigen::Index>(n + rng.below(static_cast<std::uint64_t>(13 - n)));
    Eigen::MatrixXd A(m, n);
    Eigen::VectorXd b(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      b(i) = rng.normal();
      for (Eigen::Index j = 0; j < n; ++j) A(i, j) = rng.normal();
    }
    const auto r = nnls(A, b);
    worst_obj = std::max(worst_obj, std::abs((A * r.x - b).squaredNorm() - oracle::nnls_objective(A, b)));
    // Stationarity on the support, dual feasibility off it, x >= 0.
    const Eigen::VectorXd g = A.transpose() * (A * r.x - b);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double cs = r.x(j) > 0.0 ? std::abs(g(j)) : std::max(0.0, -g(j));
      worst_cs = std::max({worst_cs, cs, -r.x(j)});
    }
  }
  const double el = seconds_since(t0);
  return {worst_obj <= 1e-9 && worst_cs <= 1e-8 && el < 30.0,
    fmt("1000 problems: max objective gap %.1e (<= 1e-9), max slackness residual %.1e (<= 1e-8) in %.1f s", worst_obj,
      worst_cs, el)};
}

Outcome armax_identification()
{
  const auto t0 = std::chrono::steady_clock::now();
  RegressorConfig c;
  c.actuator = ActuatorOption::ValveOnly;
  const auto theta = test_support::planted_theta(c);
  const auto planted = test_support::linear_armax_series(c, theta, 3000, 5);
  const double coef_err = (fit_armax(planted, c, true).theta - theta).cwiseAbs().maxCoeff();

  const auto p = default_plant();
  Scenario train;
  train.days = 56;
  train.season = Season::Heating;
  train.start = make_time(2018, 11, 5);
  train.seed = 4;
  Scenario val = train;
  val.days = 14;
  val.start = make_time(2019, 1, 7);
  val.seed = 5;
  const std::vector<TimeSeries> tr{model_samples(generate_dataset(p, DatasetController::Prbs, train), Seconds{1800})};
  const std::vector<TimeSeries> va{model_samples(generate_dataset(p, DatasetController::Prbs, val), Seconds{1800})};
  double worst = 0.0;
  std::string zones;
  for (std::size_t z = 0; z < p.size(); ++z) {
    const auto cz = zone_config(z, p.size(), ThermalMode::Heating, p);
    const ZoneModel m = fit_armax(tr, cz, true);
    const double mse = mse_openloop(m, va, 2, static_cast<std::size_t>(cz.delta)).mse;
    worst = std::max(worst, mse);
    zones += fmt(" %.4f", mse);
  }
  const double el = seconds_since(t0);
  return {coef_err <= 1e-6 && worst <= 0.05 && el < 120.0,
    fmt("planted max |dTheta| %.1e (<= 1e-6); PRBS 1-h MSE per zone%s K^2 (<= 0.05) in %.1f s", coef_err,
      zones.c_str(), el)};
}

std::vector<double> draw(Rng & rng, std::size_t n, double s)
{
  std::vector<double> v(n);
  for (auto & x : v) x = s * rng.normal();
  return v;
}

std::vector<double> mix(const std::vector<double> & a, const std::vector<double> & b, double l)
{
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[i] = l * a[i] + (1 - l) * b[i];
  return v;
}

Outcome convexity_suite()
{
  Rng rng(4);
  // Single step: the network output in its convex inputs, context fixed.
  double single = -kInf;
  for (int t = 0; t < 1000; ++t) {
    const auto kind = t % 2 ? IcnnKind::Ficnn : IcnnKind::Picnn;
    const auto m = init_icnn(thermal_arch(kind), static_cast<std::uint64_t>(t / 10));
    const auto v = draw(rng, m.arch.n_ncvx, 1.0);
    const auto a = draw(rng, m.arch.n_cvx, 2.0), b = draw(rng, m.arch.n_cvx, 2.0);
    const double l = rng.uniform();
    single = std::max(single, forward(m, mix(a, b, l), v) - (l * forward(m, a, v) + (1 - l) * forward(m, b, v)));
  }

  // Three steps: every predicted output in the joint input sequence.
  double multi = -kInf;
  RegressorConfig c;
  c.actuator = ActuatorOption::ValveOnly;
  c.mode = ThermalMode::Cooling;
  MpcConfig cfg;
  cfg.N = 3;
  cfg.mode = ThermalMode::Cooling;
  cfg.comfort = {-100.0, 100.0, {}};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    IcnnThermalModel m;
    m.config = c;
    m.net = init_icnn(thermal_arch(seed % 2 ? IcnnKind::Ficnn : IcnnKind::Picnn), seed);
    const auto ts = test_support::linear_armax_series(c, test_support::planted_theta(c), 40, seed);
    const detail::IcnnHorizon H(m, ts, 20, cfg, false);
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd a(3), b(3);
      for (int k = 0; k < 3; ++k) a(k) = rng.uniform(-1.0, 2.0), b(k) = rng.uniform(-1.0, 2.0);
      const double l = rng.uniform();
      const Eigen::VectorXd gap = H.predict(l * a + (1 - l) * b) - (l * H.predict(a) + (1 - l) * H.predict(b));
      multi = std::max(multi, gap.maxCoeff());
    }
  }

  // Gradient against central differences at kink-free points.
  int checked = 0;
  double grad_rel = 0.0;
  for (int t = 0; checked < 100 && t < 1000; ++t) {
    const auto m = init_icnn(thermal_arch(t % 2 ? IcnnKind::Ficnn : IcnnKind::Picnn), 1000 + static_cast<std::uint64_t>(t));
    const auto x = draw(rng, m.arch.n_cvx, 1.0), v = draw(rng, m.arch.n_ncvx, 1.0);
    const auto g = gradient(m, x, v);
    const double h = 1e-5, f0 = forward(m, x, v);
    Eigen::VectorXd fd(g.size());
    bool kink = false;
    for (std::size_t j = 0; j < x.size(); ++j) {
      auto xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fp = forward(m, xp, v), fm = forward(m, xm, v);
      kink |= std::abs((fp - f0) - (f0 - fm)) > 1e-9;
      fd(static_cast<Eigen::Index>(j)) = (fp - fm) / (2 * h);
    }
    if (kink) continue;
    ++checked;
    grad_rel = std::max(grad_rel, (g - fd).norm() / std::max(fd.norm(), 1e-3));
  }

  // Forest: prediction is the extracted affine map, bit for bit.
  const StepFeatureSpec spec{3, 3};
  const auto nd = static_cast<Eigen::Index>(spec.n_d()), nc = static_cast<Eigen::Index>(spec.n_c());
  StepDataset d;
  d.Xd.resize(3000, nd);
  d.Xc.resize(3000, nc);
  d.y.resize(3000);
  for (Eigen::Index r = 0; r < 3000; ++r) {
    for (Eigen::Index j = 0; j < nd; ++j) d.Xd(r, j) = rng.normal();
    for (Eigen::Index j = 0; j < nc; ++j) d.Xc(r, j) = rng.uniform();
    d.y(r) = 1.0 + 2.0 * d.Xc.row(r).sum() + (d.Xd(r, 0) > 0.0 ? 3.0 : -1.0) * d.Xc(r, 0) + 0.5 * d.Xd(r, 1);
  }
  const auto forest = fit_step_model(d, spec, ForestHyper{25, 60, 5, 1});
  int exact = 0;
  for (int t = 0; t < 100; ++t) {
    const auto xd = draw(rng, spec.n_d(), 1.0);
    std::vector<double> xc(spec.n_c());
    for (auto & x : xc) x = rng.uniform(-1.0, 2.0);
    exact += predict(forest, xd, xc) == extract_affine(forest, xd)(xc);
  }

  return {single <= 1e-9 && multi <= 1e-9 && checked == 100 && grad_rel <= 1e-4 && exact == 100,
    fmt("max convexity gap single %.1e, 3-step %.1e (<= 1e-9); gradient rel err %.1e at %d points (<= 1e-4); "
        "RF exact %d/100",
      single, multi, grad_rel, checked, exact)};
}

Outcome qp_oracle()
{
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(5);
  double worst = 0.0;
  for (int t = 0; t < 500; ++t) {
    const auto qp = oracle::random_box_qp(rng, 1 + static_cast<int>(rng.below(6)));
    worst = std::max(worst, (solve_qp(qp).x - oracle::box_qp(qp)).cwiseAbs().maxCoeff());
  }

  double icnn_gap = -kInf;
  int active = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RegressorConfig c;
    c.actuator = ActuatorOption::ValveOnly;
    c.mode = ThermalMode::Cooling;
    const auto ts = test_support::linear_armax_series(c, test_support::planted_theta(c), 40, seed);
    IcnnThermalModel m;
    m.config = c;
    m.net = init_icnn(thermal_arch(IcnnKind::Picnn, {8, 8}), seed);
    MpcConfig cfg;
    cfg.N = 3;
    cfg.mode = ThermalMode::Cooling;
    cfg.seed = seed;
    cfg.comfort = {-100.0, 100.0, {}};
    // Upper bound halfway between the open and closed predictions.
    const detail::IcnnHorizon probe(m, ts, 20, cfg, false);
    cfg.comfort.y_max =
      0.5 * (probe.predict(Eigen::VectorXd::Zero(3)).maxCoeff() + probe.predict(Eigen::VectorXd::Ones(3)).maxCoeff());
    const detail::IcnnHorizon H(m, ts, 20, cfg, false);
    const double ref = oracle::grid_minimum([&](const Eigen::VectorXd & u) { return H.exact(u); }, 3);
    icnn_gap = std::max(icnn_gap, solve_icnn_mpc(m, ts, 20, cfg).objective - ref);
    active += ref > 1e-6;
  }
  const double el = seconds_since(t0);
  return {worst <= 1e-6 && icnn_gap <= 1e-3 && el < 120.0,
    fmt("500 box QPs max |x - x*| %.1e (<= 1e-6); ICNN N=3 objective above grid oracle by at most %.1e "
        "(<= 1e-3, %d/10 with active bounds) in %.1f s",
      worst, icnn_gap, active, el)};
}

struct ModeResult
{
  double saving = 0.0, violation = 0.0, dT = 0.0, seconds = 0.0;
  std::size_t failures = 0;
};

ModeResult closed_loop_mode(ThermalMode mode)
{
  const auto t0 = std::chrono::steady_clock::now();
  const bool heat = mode == ThermalMode::Heating;
  const auto p = load_plant(kData + (heat ? "/default_plant.json" : "/cooling_plant.json"));
  const auto cfg = load_mpc_config(kData + (heat ? "/mpc_heating.json" : "/mpc_cooling.json"));
  auto sc = load_scenario(kData + (heat ? "/scenario_heating.json" : "/scenario_cooling.json"));
  sc.control_step = cfg.step;

  // Identification data: eight weeks of the building's own controller
  // leading into the test month.
  Scenario tr = sc;
  tr.days = 56;
  tr.seed = 2;
  tr.start = heat ? make_time(2018, 11, 5) : make_time(2019, 5, 6);
  const std::vector<TimeSeries> segs{model_samples(generate_dataset(p, DatasetController::Hysteresis, tr), cfg.step)};
  std::vector<ZoneModel> models;
  for (std::size_t z = 0; z < p.size(); ++z) models.emplace_back(fit_armax(segs, zone_config(z, p.size(), mode, p), true));

  MpcPolicy mpc(std::move(models), cfg, sc);
  const auto a = summarize_episode(closed_loop(p, mpc, sc), cfg.comfort, cfg.step);
  HysteresisPolicy base(sc);
  const auto b = summarize_episode(closed_loop(p, base, sc), cfg.comfort, cfg.step);
  ModeResult r;
  r.saving = 1.0 - a.energy_Wh / b.energy_Wh;
  r.violation = a.violation.integral_Kh;
  r.dT = a.mean_T - b.mean_T;
  r.failures = mpc.failures();
  r.seconds = seconds_since(t0);
  return r;
}

Outcome closed_loop_savings()
{
  bool pass = true;
  std::string detail;
  for (auto mode : {ThermalMode::Heating, ThermalMode::Cooling}) {
    const auto r = closed_loop_mode(mode);
    const bool ok = r.saving >= 0.20 && r.violation <= 2.0 && std::abs(r.dT) <= 0.5 && r.seconds < 300.0;
    pass = pass && ok;
    detail += fmt("%s%s %s: saving %.1f%% (>= 20%%), violation %.2f K*h (<= 2), dT %+.3f K (|.| <= 0.5), %zu solver "
                  "fallbacks, %.0f s",
      detail.empty() ? "" : "; ", std::string(to_string(mode)).c_str(), ok ? "ok" : "short", 100 * r.saving,
      r.violation, r.dT, r.failures, r.seconds);
  }
  return {pass, detail};
}

/// One simulated year of hysteresis data at the model step, shared by the
/// sample-efficiency criteria.
const TimeSeries & year_data()
{
  static const TimeSeries ts = [] {
    Scenario sc;
    sc.days = 364;
    sc.season = Season::Auto;
    sc.seed = 3;
    return model_samples(generate_dataset(default_plant(), DatasetController::Hysteresis, sc), Seconds{1800});
  }();
  return ts;
}

RegressorConfig year_zone()
{
  const auto p = default_plant();
  return zone_config(0, p.size(), ThermalMode::Heating, p);
}

ModelVariant variant(const std::string & name, ModelFamily f, ActuatorOption a = ActuatorOption::ValveTimesDT,
  bool nonneg = true)
{
  ModelVariant v;
  v.name = name;
  v.family = f;
  v.actuator = a;
  v.nonneg = nonneg;
  return v;
}

Outcome sample_efficiency_order(int jobs)
{
  const auto t0 = std::chrono::steady_clock::now();
  SampleEffOptions opt;
  opt.weeks = {1, 2, 8};
  opt.reps = 25;
  opt.jobs = jobs;
  const auto r = sample_efficiency(year_data(), year_zone(),
    {variant("armax", ModelFamily::Armax), variant("armax_ls", ModelFamily::Armax, ActuatorOption::ValveTimesDT, false),
      variant("rf", ModelFamily::Rf), variant("icnn", ModelFamily::Picnn)},
    opt);
  auto med = [&](const char * m, int w) { return r.cell(m, w).median; };
  auto band = [&](const char * m, int w) { return r.cell(m, w).p84 - r.cell(m, w).p16; };
  bool order = true;
  for (int w : {1, 2}) order = order && med("armax", w) <= med("rf", w) && med("armax", w) <= med("icnn", w);
  const double gain = med("icnn", 1) / med("icnn", 8);
  const bool narrow = band("armax", 2) <= band("armax_ls", 2);
  const double el = seconds_since(t0);
  return {order && gain >= 2.0 && narrow && el < 1800.0,
    fmt("(i) %s median MSE 1w armax %.4f rf %.4f icnn %.4f, 2w armax %.4f rf %.4f icnn %.4f; "
        "(ii) %s icnn 1w/8w %.1fx (>= 2); (iii) %s p84-p16 at 2w nonneg %.4f vs unconstrained %.4f; %.0f s",
      order ? "ok" : "short", med("armax", 1), med("rf", 1), med("icnn", 1), med("armax", 2), med("rf", 2),
      med("icnn", 2), gain >= 2.0 ? "ok" : "short", gain, narrow ? "ok" : "short", band("armax", 2),
      band("armax_ls", 2), el)};
}

Outcome actuator_ablation(int jobs)
{
  SampleEffOptions opt;
  opt.weeks = {8};
  opt.reps = 25;
  opt.jobs = jobs;
  const auto r = sample_efficiency(year_data(), year_zone(),
    {variant("valve", ModelFamily::Armax, ActuatorOption::ValveOnly),
      variant("valve_dT", ModelFamily::Armax, ActuatorOption::ValveTimesDT),
      variant("energy", ModelFamily::Armax, ActuatorOption::MeasuredEnergy)},
    opt);
  const double ref = r.cell("energy", 8).median;
  const double dv = r.cell("valve", 8).median / ref - 1.0, dd = r.cell("valve_dT", 8).median / ref - 1.0;
  return {std::abs(dv) <= 0.25 && std::abs(dd) <= 0.25,
    fmt("8w median MSE energy %.4f, valve-only %+.0f%%, valve*dT %+.0f%% (within 25%%)", ref, 100 * dv, 100 * dd)};
}

Outcome degree_days()
{
  Rng rng(9);
  auto planted = [&](ThermalMode mode, double T_ref) {
    std::vector<DailyAggregate> days;
    for (int i = 0; i < 60; ++i) {
      DailyAggregate d;
      d.day = make_time(2019, 1, 1) + std::chrono::days(i);
      d.T_amb = rng.uniform(-5.0, 30.0);
      d.I_hor = rng.uniform(20.0, 300.0);
      const double deg = mode == ThermalMode::Heating ? T_ref - d.T_amb : d.T_amb - T_ref;
      d.energy_Wh = 850.0 * deg - 4.5 * d.I_hor + 1200.0;
      d.T_room = 22.0;
      days.push_back(d);
    }
    return days;
  };
  double rec = 0.0;
  for (auto mode : {ThermalMode::Heating, ThermalMode::Cooling}) {
    const auto r = degree_day_regression(planted(mode, 20.0), mode);
    rec = std::max({rec, std::abs(r.theta_dd - 850.0), std::abs(r.theta_sol + 4.5), std::abs(r.c - 1200.0)});
  }
  auto noisy = planted(ThermalMode::Heating, 20.0);
  for (auto & d : noisy) d.energy_Wh += 300.0 * rng.normal();
  const auto a = degree_day_regression(noisy, ThermalMode::Heating, 20.0);
  const auto b = degree_day_regression(noisy, ThermalMode::Heating, 17.0);
  double shift = std::max(std::abs(a.theta_dd - b.theta_dd), std::abs(a.theta_sol - b.theta_sol)) / std::abs(a.theta_dd);
  for (const auto & d : noisy)
    shift = std::max(shift, std::abs(a.predict(d.T_amb, d.I_hor) - b.predict(d.T_amb, d.I_hor)) /
        std::abs(a.predict(d.T_amb, d.I_hor)));
  return {rec <= 1e-8 && shift <= 1e-9,
    fmt("planted max error %.1e (<= 1e-8); base shift 20->17 C relative change %.1e (<= 1e-9)", rec, shift)};
}

Outcome solver_resources()
{
  const auto p = load_plant(kData + "/cooling_plant.json");
  const auto cfg = load_mpc_config(kData + "/mpc_cooling.json");
  Scenario tr;
  tr.days = 56;
  tr.start = make_time(2019, 5, 6);
  tr.seed = 2;
  tr.season = Season::Cooling;
  const auto data = model_samples(generate_dataset(p, DatasetController::Hysteresis, tr), cfg.step);
  const std::vector<TimeSeries> segs{data};
  const auto c = zone_config(0, p.size(), cfg.mode, p);
  std::vector<ZoneModel> ms;
  ms.emplace_back(fit_armax(segs, c, true));
  ms.emplace_back(fit_horizon(segs, c, cfg.N, ForestHyper{}));
  ms.emplace_back(fit_icnn(segs, c, IcnnKind::Picnn, TrainConfig{}));

  // The hottest logged instant, so the upper bound is in play.
  const auto T = data[c.output];
  std::size_t anchor = 8;
  for (std::size_t k = 8; k + static_cast<std::size_t>(cfg.N) < data.length(); ++k)
    if (T[k] > T[anchor]) anchor = k;
  const auto window = data.slice(anchor - 3, anchor + static_cast<std::size_t>(cfg.N));
  std::vector<double> t;
  std::string detail;
  for (const auto & m : ms) {
    const auto b = bench_solver(m, window, 3, cfg, 5);
    t.push_back(b.mean_s);
    detail += fmt("%s%s %.4f s", detail.empty() ? "" : ", ", b.model.c_str(), b.mean_s);
  }
  return {t[0] < t[1] && t[1] < t[2] && t[0] < 1.0,
    "mean solve " + detail + " (need armax < rf < icnn, armax < 1 s)"};
}

// ---------------------------------------------------------------------------

int run_cli(const std::string & args)
{
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const std::filesystem::path & p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Runs every subcommand's pipeline into `dir`; false on any nonzero exit.
bool cli_pipelines(const std::filesystem::path & dir, int jobs)
{
  const auto f = [&](const char * name) { return (dir / name).string(); };
  const auto heat = kData + "/mpc_heating.json";
  const std::string jobs_s = std::to_string(jobs);
  const std::vector<std::string> steps{
    "simulate --controller prbs --season heating --days 14 --seed 7 --out " + f("train.csv"),
    "simulate --scenario " + kData + "/scenario_heating.json --days 12 --out " + f("baseline.csv"),
    "train --model armax --data " + f("train.csv") + " --out " + f("armax.json"),
    "train --model rf --trees 20 --min-leaf 100 --seed 3 --jobs " + jobs_s + " --data " + f("train.csv") + " --out " +
      f("rf.json"),
    "train --model picnn --epochs 20 --hidden 8,8 --seed 3 --data " + f("train.csv") + " --out " + f("picnn.json"),
    "evaluate --model " + f("armax.json") + " --data " + f("baseline.csv") + " --out " + f("eval_armax.json"),
    "evaluate --model " + f("picnn.json") + " --data " + f("baseline.csv") + " --out " + f("eval_picnn.json"),
    "mpc-run --model " + f("armax.json") + " --config " + heat + " --scenario " + kData +
      "/scenario_heating.json --days 12 --out " + f("mpc_armax.csv") + " --summary " + f("mpc_armax.json"),
    "mpc-run --model " + f("rf.json") + " --config " + heat + " --scenario " + kData +
      "/scenario_heating.json --days 1 --forecast-sigma 0.5 --out " + f("mpc_rf.csv"),
    "evaluate --episode " + f("mpc_armax.csv") + " --baseline " + f("baseline.csv") + " --config " + heat + " --out " +
      f("compare.json") + " --svg " + f("compare.svg"),
    "sample-efficiency --models armax,armax:unconstrained,rf,picnn --trees 10 --min-leaf 100 --epochs 10 --weeks 1 "
    "--reps 2 --seed 4 --jobs " +
      jobs_s + " --data " + f("train.csv") + " --out " + f("se.csv") + " --svg " + f("se.svg"),
  };
  for (const auto & s : steps)
    if (run_cli(s) != 0) {
      std::cerr << "failed: bmpc " << s << '\n';
      return false;
    }
  return true;
}

Outcome determinism(int jobs)
{
  const test_support::TempDir a("acc_a"), b("acc_b");
  if (!cli_pipelines(a.path(), 1) || !cli_pipelines(b.path(), std::max(2, jobs))) return {false, "a pipeline step failed"};
  std::size_t files = 0;
  std::vector<std::string> differing;
  for (const auto & e : std::filesystem::directory_iterator(a.path())) {
    ++files;
    const auto name = e.path().filename();
    if (slurp(e.path()) != slurp(b.path() / name)) differing.push_back(name.string());
  }
  std::string d = fmt("%zu output files from simulate, train (armax, rf, picnn), evaluate, mpc-run and "
                      "sample-efficiency, thread counts 1 vs %d",
    files, std::max(2, jobs));
  for (const auto & n : differing) d += "; differs: " + n;
  return {differing.empty() && files >= 15, d};
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Acceptance criteria A1-A11"};
  int jobs = 1;
  std::string known_red_list, only_list;
  app.add_option("--jobs", jobs, "worker threads for the sample-efficiency runs")->check(CLI::PositiveNumber);
  app.add_option("--known-red", known_red_list, "comma list of criteria expected to fail");
  app.add_option("--only", only_list, "comma list of criteria to run");
  CLI11_PARSE(app, argc, argv);

  auto to_set = [](const std::string & s) {
    std::set<std::string> out;
    std::stringstream in(s);
    for (std::string t; std::getline(in, t, ',');)
      if (!t.empty()) out.insert(t);
    return out;
  };
  const auto known_red = to_set(known_red_list), only = to_set(only_list);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
    {"A1", solar_fit},
    {"A2", nnls_oracle},
    {"A3", armax_identification},
    {"A4", convexity_suite},
    {"A5", qp_oracle},
    {"A6", closed_loop_savings},
    {"A7", [&] { return sample_efficiency_order(jobs); }},
    {"A8", [&] { return actuator_ablation(jobs); }},
    {"A9", degree_days},
    {"A10", solver_resources},
    {"A11", [&] { return determinism(jobs); }},
  };

  int unexpected = 0;
  for (const auto & [id, check] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception & e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool red = known_red.count(id) > 0;
    if (!o.pass && !red) ++unexpected;
    std::cout << id << (o.pass ? " PASS " : " FAIL ") << o.detail << (!o.pass && red ? " [known red]" : "") << std::endl;
  }
  return unexpected == 0 ? 0 : 1;
}
