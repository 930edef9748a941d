#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "bmpc/armax.hpp"
#include "bmpc/errors.hpp"
#include "bmpc/forest.hpp"
#include "bmpc/icnn.hpp"
#include "bmpc/mpc.hpp"
#include "bmpc/random.hpp"
#include "bmpc/regressors.hpp"
#include "bmpc/time_series.hpp"

namespace bmpc {

// ---------------------------------------------------------------------------
// Open-loop error

/// Predicts y[a + steps] from anchor a of a segment.
using Predictor = std::function<double(const TimeSeries & seg, std::size_t a, std::size_t steps)>;

struct MseResult
{
  double mse = 0.0;
  std::size_t count = 0;
};

/// Error of the final predicted step only, pooled over every admissible
/// anchor of every segment.
inline MseResult mse_openloop(std::span<const TimeSeries> segments, const std::string & output, std::size_t steps,
  std::size_t first_anchor, const Predictor & predict)
{
  if (steps == 0) throw Error(ErrorCode::ConfigError, "horizon must be at least one step");
  MseResult r;
  double se = 0.0;
  for (const auto & seg : segments) {
    if (seg.length() < first_anchor + steps + 1) continue;
    const auto y = seg[output];
    for (std::size_t a = first_anchor; a + steps < seg.length(); ++a) {
      const double e = predict(seg, a, steps) - y[a + steps];
      se += e * e;
      ++r.count;
    }
  }
  if (r.count == 0) throw Error(ErrorCode::TooShort, "validation data shorter than horizon plus lags");
  r.mse = se / static_cast<double>(r.count);
  return r;
}

/// Same, for a trained model; signals are computed once per segment.
inline MseResult mse_openloop(const ZoneModel & model, std::span<const TimeSeries> segments, std::size_t steps,
  std::size_t first_anchor = 0)
{
  const auto & c = model_config(model);
  first_anchor = std::max(first_anchor, model_history(model));
  MseResult r;
  double se = 0.0;
  for (const auto & seg : segments) {
    if (seg.length() < first_anchor + steps + 1) continue;
    const auto y = seg[c.output];
    auto add = [&](std::size_t a, double pred) {
      const double e = pred - y[a + steps];
      se += e * e;
      ++r.count;
    };
    if (const auto * m = std::get_if<ArmaxModel>(&model)) {
      const auto s = compute_signals(seg, c);
      for (std::size_t a = first_anchor; a + steps < seg.length(); ++a) add(a, armax_rollout(*m, s, a, steps).back());
    } else if (const auto * f = std::get_if<RfModel>(&model)) {
      const auto s = step_signals(seg, c);
      for (std::size_t a = first_anchor; a + steps < seg.length(); ++a) add(a, rf_predict_at(*f, s, a, static_cast<int>(steps)));
    } else {
      const auto & n = std::get<IcnnThermalModel>(model);
      const auto s = icnn_signals(seg, c);
      for (std::size_t a = first_anchor; a + steps < seg.length(); ++a) add(a, predict_recursive(n, s, a, steps).back());
    }
  }
  if (r.count == 0) throw Error(ErrorCode::TooShort, "validation data shorter than horizon plus lags");
  r.mse = se / static_cast<double>(r.count);
  return r;
}

// ---------------------------------------------------------------------------
// Sample efficiency

enum class ModelFamily { Armax, Rf, Picnn, Ficnn };

inline std::string_view to_string(ModelFamily f)
{
  switch (f) {
    case ModelFamily::Armax: return "armax";
    case ModelFamily::Rf: return "rf";
    case ModelFamily::Picnn: return "picnn";
    case ModelFamily::Ficnn: return "ficnn";
  }
  return "?";
}

inline ModelFamily parse_family(std::string_view s)
{
  if (s == "armax") return ModelFamily::Armax;
  if (s == "rf") return ModelFamily::Rf;
  if (s == "picnn" || s == "icnn") return ModelFamily::Picnn;
  if (s == "ficnn") return ModelFamily::Ficnn;
  throw Error(ErrorCode::ConfigError, "model must be armax, rf, picnn or ficnn, got '" + std::string(s) + "'");
}

struct ModelVariant
{
  std::string name;
  ModelFamily family = ModelFamily::Armax;
  ActuatorOption actuator = ActuatorOption::ValveTimesDT;
  bool nonneg = true;
  ForestHyper forest;
  TrainConfig icnn;
  std::vector<int> hidden{20, 20};
};

/// Trains one variant; `steps` is the prediction horizon the forest needs.
inline ZoneModel train_variant(const ModelVariant & v, std::span<const TimeSeries> segments, RegressorConfig c,
  std::size_t steps)
{
  c.actuator = v.actuator;
  switch (v.family) {
    case ModelFamily::Armax: return fit_armax(segments, c, v.nonneg);
    case ModelFamily::Rf: return fit_horizon(segments, c, static_cast<int>(steps), v.forest, static_cast<int>(steps));
    case ModelFamily::Picnn: return fit_icnn(segments, c, IcnnKind::Picnn, v.icnn, v.hidden);
    case ModelFamily::Ficnn: return fit_icnn(segments, c, IcnnKind::Ficnn, v.icnn, v.hidden);
  }
  throw Error(ErrorCode::ConfigError, "unknown model family");
}

/// Linear interpolation between order statistics.
inline double percentile(std::vector<double> v, double p)
{
  if (v.empty()) throw Error(ErrorCode::NotEnoughData, "percentile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct SampleEffCell
{
  std::string model;
  int weeks = 0;
  std::vector<double> mse;  ///< one per repetition
  double median = 0.0, p16 = 0.0, p84 = 0.0;
};

struct SampleEffReport
{
  std::vector<int> weeks;
  std::vector<std::string> models;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  std::vector<SampleEffCell> cells;

  [[nodiscard]] const SampleEffCell & cell(const std::string & model, int w) const
  {
    for (const auto & c : cells)
      if (c.model == model && c.weeks == w) return c;
    throw Error(ErrorCode::ConfigError, "no cell for " + model + " at " + std::to_string(w) + " weeks");
  }
};

struct SampleEffOptions
{
  std::vector<int> weeks{1, 2, 4, 8};
  std::size_t reps = 100;
  std::uint64_t seed = 0;
  std::size_t steps = 2;  ///< prediction horizon in model steps
  std::size_t validation_weeks = 0;  ///< 0: every fold not used for training
  int jobs = 1;
};

/// Every repetition draws a fold split per training size from a seed derived
/// from (seed, rep, size), trains all variants on the same folds and scores
/// them on the held-out folds. Work items run on up to `jobs` threads; the
/// result does not depend on the thread count.
inline SampleEffReport sample_efficiency(const TimeSeries & ts, const RegressorConfig & base,
  const std::vector<ModelVariant> & variants, const SampleEffOptions & opt)
{
  if (variants.empty()) throw Error(ErrorCode::ConfigError, "no model variants");
  if (opt.reps == 0) throw Error(ErrorCode::ConfigError, "reps must be >= 1");
  if (opt.weeks.empty() || *std::min_element(opt.weeks.begin(), opt.weeks.end()) < 1)
    throw Error(ErrorCode::ConfigError, "training sizes must be >= 1 week");
  const std::size_t folds = fold_count(ts);
  const int max_w = *std::max_element(opt.weeks.begin(), opt.weeks.end());
  if (folds < static_cast<std::size_t>(max_w) + std::max<std::size_t>(1, opt.validation_weeks))
    throw Error(ErrorCode::NotEnoughData, "data holds " + std::to_string(folds) + " weeks, need " +
      std::to_string(max_w + static_cast<int>(std::max<std::size_t>(1, opt.validation_weeks))));

  const std::size_t nv = variants.size(), nw = opt.weeks.size();
  std::vector<double> out(opt.reps * nw * nv, 0.0);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto worker = [&] {
    for (;;) {
      const std::size_t item = next.fetch_add(1);
      if (item >= opt.reps * nw) return;
      const std::size_t rep = item / nw, wi = item % nw;
      try {
        const auto w = static_cast<std::size_t>(opt.weeks[wi]);
        const auto split = split_folds(ts, w, derive_seed(opt.seed, rep, w));
        auto val_idx = split.validation_fold_indices;
        if (opt.validation_weeks > 0 && val_idx.size() > opt.validation_weeks) val_idx.resize(opt.validation_weeks);
        const auto train = fold_slices(ts, split.train_fold_indices);
        const auto val = fold_slices(ts, val_idx);
        for (std::size_t v = 0; v < nv; ++v) {
          auto var = variants[v];
          var.forest.seed = derive_seed(opt.seed, 100 + rep, w);
          var.forest.jobs = 1;
          var.icnn.seed = derive_seed(opt.seed, 200 + rep, w);
          const auto model = train_variant(var, train, base, opt.steps);
          out[(rep * nw + wi) * nv + v] = mse_openloop(model, val, opt.steps, static_cast<std::size_t>(base.delta)).mse;
        }
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!err) err = std::current_exception();
        next.store(opt.reps * nw);
        return;
      }
    }
  };
  const int jobs = std::max(1, opt.jobs);
  if (jobs == 1) worker();
  else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (err) std::rethrow_exception(err);

  SampleEffReport rep;
  rep.weeks = opt.weeks;
  rep.reps = opt.reps;
  rep.seed = opt.seed;
  for (const auto & v : variants) rep.models.push_back(v.name);
  for (std::size_t v = 0; v < nv; ++v)
    for (std::size_t wi = 0; wi < nw; ++wi) {
      SampleEffCell c;
      c.model = variants[v].name;
      c.weeks = opt.weeks[wi];
      for (std::size_t r = 0; r < opt.reps; ++r) c.mse.push_back(out[(r * nw + wi) * nv + v]);
      c.median = percentile(c.mse, 50.0);
      c.p16 = percentile(c.mse, 16.0);
      c.p84 = percentile(c.mse, 84.0);
      rep.cells.push_back(std::move(c));
    }
  return rep;
}

inline void write_sample_eff_csv(std::ostream & o, const SampleEffReport & r)
{
  o << "model,weeks,median,p16,p84,reps\n";
  for (const auto & c : r.cells)
    o << c.model << ',' << c.weeks << ',' << format_double(c.median) << ',' << format_double(c.p16) << ','
      << format_double(c.p84) << ',' << c.mse.size() << '\n';
}

// ---------------------------------------------------------------------------
// Daily aggregates and degree-day regressions

struct DailyAggregate
{
  Timestamp day{};
  double energy_Wh = 0.0;  ///< heating or cooling energy, positive
  double T_amb = 0.0;      ///< daily mean
  double I_hor = 0.0;      ///< daily mean
  double T_room = 0.0;     ///< daily mean over the given zones
};

/// Whole days of a record. Energy comes from `energy` (summed, sign-flipped
/// in cooling so that use is positive).
inline std::vector<DailyAggregate> daily_aggregates(const TimeSeries & ts, std::span<const std::string> zones,
  ThermalMode mode, const std::string & energy = "Q_total")
{
  const auto per_day = static_cast<std::size_t>(Seconds{86400} / ts.step());
  if (per_day == 0) throw Error(ErrorCode::NonIntegerRatio, "step longer than a day");
  const auto q = ts[energy];
  const auto ta = ts["T_amb"];
  const auto ih = ts["I_hor"];
  std::vector<std::span<const double>> T;
  for (const auto & z : zones) T.push_back(ts[z]);
  std::vector<DailyAggregate> out;
  for (std::size_t d = 0; (d + 1) * per_day <= ts.length(); ++d) {
    DailyAggregate a;
    a.day = ts.time_at(d * per_day);
    for (std::size_t k = d * per_day; k < (d + 1) * per_day; ++k) {
      a.energy_Wh += q[k];
      a.T_amb += ta[k];
      a.I_hor += ih[k];
      for (const auto & t : T) a.T_room += t[k];
    }
    if (mode == ThermalMode::Cooling) a.energy_Wh = -a.energy_Wh;
    a.T_amb /= static_cast<double>(per_day);
    a.I_hor /= static_cast<double>(per_day);
    a.T_room /= static_cast<double>(per_day * std::max<std::size_t>(1, T.size()));
    out.push_back(a);
  }
  return out;
}

/// Drops days whose mean room temperature lies outside [lo, hi].
inline std::vector<DailyAggregate> comfortable_days(std::span<const DailyAggregate> days, double lo = 21.0, double hi = 27.0)
{
  std::vector<DailyAggregate> out;
  for (const auto & d : days)
    if (d.T_room >= lo && d.T_room <= hi) out.push_back(d);
  return out;
}

struct DegreeDayRegression
{
  double theta_dd = 0.0;   ///< Wh per degree-day
  double theta_sol = 0.0;  ///< Wh per W/m2 of daily mean irradiance
  double c = 0.0;          ///< Wh
  double r_squared = 0.0;
  double T_ref = 20.0;
  ThermalMode mode = ThermalMode::Heating;

  /// Degree-day term; cooling mirrors heating.
  [[nodiscard]] double degree(double t_amb) const { return mode == ThermalMode::Heating ? T_ref - t_amb : t_amb - T_ref; }
  [[nodiscard]] double predict(double t_amb, double i_hor) const { return theta_dd * degree(t_amb) + theta_sol * i_hor + c; }
  /// Solar-augmented degree days: the irradiance folded in at the fitted ratio.
  [[nodiscard]] double solar_degree(double t_amb, double i_hor) const
  {
    return degree(t_amb) + (theta_dd != 0.0 ? theta_sol / theta_dd : 0.0) * i_hor;
  }
};

inline DegreeDayRegression degree_day_regression(std::span<const DailyAggregate> days, ThermalMode mode, double T_ref = 20.0)
{
  if (days.size() < 10) throw Error(ErrorCode::NotEnoughData, "degree-day regression needs at least 10 days");
  const auto n = static_cast<Eigen::Index>(days.size());
  DegreeDayRegression r;
  r.mode = mode;
  r.T_ref = T_ref;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto & d = days[static_cast<std::size_t>(i)];
    X(i, 0) = r.degree(d.T_amb);
    X(i, 1) = d.I_hor;
    X(i, 2) = 1.0;
    y(i) = d.energy_Wh;
  }
  // Rank check on unit-norm columns so the threshold does not depend on units.
  Eigen::MatrixXd Xs = X;
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double nrm = Xs.col(j).norm();
    if (nrm == 0.0) throw Error(ErrorCode::SingularDesign, "a regressor column is identically zero");
    Xs.col(j) /= nrm;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) throw Error(ErrorCode::SingularDesign, "degree-day design matrix is rank deficient");
  const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
  r.theta_dd = beta(0);
  r.theta_sol = beta(1);
  r.c = beta(2);
  const double ss_res = (y - X * beta).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).matrix().squaredNorm();
  r.r_squared = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
  return r;
}

struct SavingsPoint
{
  double solar_degree = 0.0;  ///< baseline regression's solar degree days
  double energy_mpc = 0.0;
  double energy_baseline = 0.0;
};

struct SavingsReport
{
  DegreeDayRegression mpc, baseline;
  double ratio = 1.0;           ///< sum E_mpc / sum E_baseline over the union of weather inputs
  double mean_saving = 0.0;     ///< 1 - ratio
  std::vector<SavingsPoint> curve;
};

/// Both regressions evaluated on the union of both controllers' weather days.
inline SavingsReport compare_energy(std::span<const DailyAggregate> mpc_days, std::span<const DailyAggregate> base_days,
  ThermalMode mode, double T_ref = 20.0)
{
  SavingsReport r;
  r.mpc = degree_day_regression(mpc_days, mode, T_ref);
  r.baseline = degree_day_regression(base_days, mode, T_ref);
  double em = 0.0, eb = 0.0;
  auto add = [&](const DailyAggregate & d) {
    SavingsPoint p{r.baseline.solar_degree(d.T_amb, d.I_hor), r.mpc.predict(d.T_amb, d.I_hor), r.baseline.predict(d.T_amb, d.I_hor)};
    em += p.energy_mpc;
    eb += p.energy_baseline;
    r.curve.push_back(p);
  };
  for (const auto & d : mpc_days) add(d);
  for (const auto & d : base_days) add(d);
  std::sort(r.curve.begin(), r.curve.end(), [](const auto & a, const auto & b) { return a.solar_degree < b.solar_degree; });
  if (eb == 0.0) throw Error(ErrorCode::SingularDesign, "baseline regression predicts zero total energy");
  r.ratio = em / eb;
  r.mean_saving = 1.0 - r.ratio;
  return r;
}

// ---------------------------------------------------------------------------
// Comfort

struct ComfortViolation
{
  double integral_Kh = 0.0;
  double max_K = 0.0;
  double fraction = 0.0;  ///< share of the span spent in violation
};

/// Exceedance of a linearly interpolated trajectory over the schedule; bounds
/// are taken at the start of each sample interval. Positive parts are
/// integrated exactly, so the result equals the trapezoidal rule whenever
/// the sign does not change inside an interval.
inline ComfortViolation comfort_violation(const TimeSeries & ts, std::span<const std::string> zones, const ComfortSchedule & cs)
{
  ComfortViolation v;
  if (ts.length() < 2) return v;
  const double h = std::chrono::duration<double>(ts.step()).count() / 3600.0;
  const double span = h * static_cast<double>(ts.length() - 1);
  double time_in = 0.0;
  // Integral over [0, h] of max(0, a + (b - a) t / h).
  auto pos_int = [h](double a, double b, double & t_pos) {
    if (a >= 0.0 && b >= 0.0) {
      t_pos = (a > 0.0 || b > 0.0) ? h : 0.0;
      return 0.5 * (a + b) * h;
    }
    if (a <= 0.0 && b <= 0.0) {
      t_pos = 0.0;
      return 0.0;
    }
    const double p = std::max(a, b);
    const double frac = p / (std::abs(a) + std::abs(b));
    t_pos = frac * h;
    return 0.5 * p * t_pos;
  };
  for (const auto & z : zones) {
    const auto T = ts[z];
    for (std::size_t k = 0; k + 1 < ts.length(); ++k) {
      const auto [lo, hi] = cs.at(ts.time_at(k));
      double t_up = 0.0, t_dn = 0.0;
      const double up = pos_int(T[k] - hi, T[k + 1] - hi, t_up);
      const double dn = pos_int(lo - T[k], lo - T[k + 1], t_dn);
      v.integral_Kh += up + dn;
      time_in += std::min(h, t_up + t_dn);
      v.max_K = std::max({v.max_K, T[k] - hi, lo - T[k], T[k + 1] - hi, lo - T[k + 1]});
    }
  }
  v.fraction = span > 0.0 ? time_in / (span * static_cast<double>(zones.size())) : 0.0;
  return v;
}

// ---------------------------------------------------------------------------
// Episode summary

struct EpisodeSummary
{
  double energy_Wh = 0.0;  ///< signed metered total
  std::vector<double> zone_energy_Wh;
  double mean_T = 0.0;
  ComfortViolation violation;
  std::size_t solves = 0;          ///< control steps with at least one zone solved
  std::size_t fallback_steps = 0;  ///< control steps with at least one zone on hysteresis
  double mean_solve_s = 0.0;       ///< only with logged timing
  double max_solve_s = 0.0;
};

inline std::vector<std::string> zone_channels(const TimeSeries & ts)
{
  std::vector<std::string> out;
  for (const auto & c : ts.channels())
    if (is_zone_temperature(c.name)) out.push_back(c.name);
  return out;
}

inline EpisodeSummary summarize_episode(const TimeSeries & ts, const ComfortSchedule & cs, Seconds control_step)
{
  EpisodeSummary s;
  const auto zones = zone_channels(ts);
  for (double q : ts["Q_total"]) s.energy_Wh += q;
  for (std::size_t z = 0; z < zones.size(); ++z) {
    const std::string q = "Q_" + zones[z].substr(2);
    double e = 0.0;
    if (ts.has(q))
      for (double v : ts[q]) e += v;
    s.zone_energy_Wh.push_back(e);
    for (double t : ts[zones[z]]) s.mean_T += t;
  }
  s.mean_T /= static_cast<double>(ts.length() * std::max<std::size_t>(1, zones.size()));
  s.violation = comfort_violation(ts, zones, cs);
  if (ts.has("mpc_fallback")) {
    const auto fb = ts["mpc_fallback"];
    const auto r = static_cast<std::size_t>(control_step / ts.step());
    for (std::size_t k = 0; k < ts.length(); k += r) {
      if (fb[k] > 0.0) ++s.fallback_steps;
      if (fb[k] < 1.0) ++s.solves;
    }
  }
  if (ts.has("mpc_solve_s")) {
    const auto st = ts["mpc_solve_s"];
    std::size_t n = 0;
    for (double v : st)
      if (v > 0.0) {
        s.mean_solve_s += v;
        s.max_solve_s = std::max(s.max_solve_s, v);
        ++n;
      }
    if (n) s.mean_solve_s /= static_cast<double>(n);
  }
  return s;
}

inline nlohmann::json to_json(const EpisodeSummary & s)
{
  return {{"energy_Wh", s.energy_Wh}, {"zone_energy_Wh", s.zone_energy_Wh}, {"mean_T", s.mean_T},
    {"violation_Kh", s.violation.integral_Kh}, {"max_violation_K", s.violation.max_K},
    {"violation_fraction", s.violation.fraction}, {"control_steps_solved", s.solves},
    {"fallback_steps", s.fallback_steps}};
}

// ---------------------------------------------------------------------------
// Solver benchmark

/// Resident set size in kB, 0 where /proc is unavailable.
inline long resident_kb()
{
  std::ifstream f("/proc/self/statm");
  long pages = 0, resident = 0;
  if (!(f >> pages >> resident)) return 0;
  return resident * 4;
}

struct BenchResult
{
  std::string model;
  double mean_s = 0.0;
  double stddev_s = 0.0;
  double min_s = 0.0;
  double max_s = 0.0;
  long rss_delta_kb = 0;
  double objective = 0.0;
};

/// Warm repetitions of one optimization with fixed initial conditions and
/// forecasts; the first call is discarded.
inline BenchResult bench_solver(const ZoneModel & model, const TimeSeries & window, std::size_t anchor,
  const MpcConfig & cfg, int reps = 20)
{
  BenchResult b;
  b.model = std::string(model_kind(model));
  (void)plan(model, window, anchor, cfg);
  const long rss0 = resident_kb();
  long peak = rss0;
  std::vector<double> t;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto sol = plan(model, window, anchor, cfg);
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    b.objective = sol.objective;
    peak = std::max(peak, resident_kb());
  }
  b.mean_s = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
  double var = 0.0;
  for (double x : t) var += (x - b.mean_s) * (x - b.mean_s);
  b.stddev_s = t.size() > 1 ? std::sqrt(var / static_cast<double>(t.size() - 1)) : 0.0;
  b.min_s = *std::min_element(t.begin(), t.end());
  b.max_s = *std::max_element(t.begin(), t.end());
  b.rss_delta_kb = peak - rss0;
  return b;
}

}  // namespace bmpc
