// Command-line front end: simulate, train, mpc-run, sample-efficiency,
// evaluate and bench.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "bmpc/bmpc.hpp"
#include "bmpc/model_io.hpp"

namespace fs = std::filesystem;
using namespace bmpc;

namespace {

std::vector<std::string> split_list(const std::string & s)
{
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Options shared by every subcommand that runs the plant.
struct ScenarioFlags
{
  std::string file;
  std::optional<std::size_t> days;
  std::optional<std::uint64_t> seed;
  std::string start;
  std::string season;
  std::optional<std::size_t> warmup;

  void add(CLI::App * app)
  {
    app->add_option("--scenario", file, "scenario JSON (flags below override it)");
    app->add_option("--days", days, "logged days (default 7)")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "seed for weather and noise (default 1)");
    app->add_option("--start", start, "first logged instant, RFC 3339 UTC");
    app->add_option("--season", season, "heating, cooling or auto");
    app->add_option("--warmup-days", warmup, "unlogged days before the start");
  }

  Scenario build(std::optional<Season> default_season = {}) const
  {
    Scenario sc;
    if (!file.empty()) {
      sc = load_scenario(file);
    } else if (default_season) sc.season = *default_season;
    if (days) sc.days = *days;
    if (seed) sc.seed = *seed;
    if (!start.empty()) sc.start = parse_rfc3339(start);
    if (!season.empty()) sc.season = parse_season(season);
    if (warmup) sc.warmup_days = *warmup;
    sc.validate();
    return sc;
  }
};

void write_json(const std::string & path, const nlohmann::json & j)
{
  if (path == "-") std::cout << j.dump(2) << '\n';
  else write_text_file(path, j.dump(2) + "\n");
}

void save_series(const std::string & path, const TimeSeries & ts)
{
  if (path == "-") write_csv(std::cout, ts);
  else save_csv(path, ts);
}

void write_svg(const std::string & path, const SvgChart & ch)
{
  std::ostringstream o;
  ch.write(o);
  write_text_file(path, o.str());
}

// ---------------------------------------------------------------------------

struct SimulateCmd
{
  std::string plant, out = "-", controller = "hysteresis";
  ScenarioFlags sf;

  void add(CLI::App & root)
  {
    auto * c = root.add_subcommand("simulate", "run the plant under a rule-based controller and log it");
    c->add_option("--plant", plant, "plant JSON (default: built-in two-zone plant)");
    c->add_option("--out", out, "output CSV, '-' for stdout");
    c->add_option("--controller", controller, "hysteresis or prbs");
    sf.add(c);
    c->callback([this] { run(); });
  }

  void run() const
  {
    const auto p = load_plant(plant);
    const auto sc = sf.build();
    save_series(out, generate_dataset(p, parse_dataset_controller(controller), sc));
  }
};

struct TrainCmd
{
  std::string model = "armax", data, out, actuator = "valve_times_dT", mode = "heating", plant;
  bool unconstrained = false;
  int horizon = 14, trees = 200, min_leaf = 200, epochs = 150, jobs = 1;
  std::int64_t step_s = 1800;
  std::uint64_t seed = 0;
  std::string hidden = "20,20";

  void add(CLI::App & root)
  {
    auto * c = root.add_subcommand("train", "fit one model per zone");
    c->add_option("--model", model, "armax, rf, picnn or ficnn");
    c->add_option("--data", data, "training CSV (minute log or model-step series)")->required();
    c->add_option("--out", out, "model JSON")->required();
    c->add_option("--plant", plant, "plant JSON, for site coordinates");
    c->add_option("--actuator", actuator, "valve_only, valve_times_dT or measured_energy");
    c->add_option("--mode", mode, "heating or cooling");
    c->add_flag("--unconstrained", unconstrained, "ARMAX: plain least squares instead of NNLS");
    c->add_option("--horizon", horizon, "RF: number of step models")->check(CLI::PositiveNumber);
    c->add_option("--trees", trees, "RF: trees per step model")->check(CLI::PositiveNumber);
    c->add_option("--min-leaf", min_leaf, "RF: minimum samples per leaf")->check(CLI::PositiveNumber);
    c->add_option("--epochs", epochs, "ICNN: training epochs")->check(CLI::NonNegativeNumber);
    c->add_option("--hidden", hidden, "ICNN: hidden layer widths");
    c->add_option("--step", step_s, "model step in seconds")->check(CLI::PositiveNumber);
    c->add_option("--seed", seed, "seed for forests and ICNN initialisation");
    c->add_option("--jobs", jobs, "worker threads for tree fitting")->check(CLI::PositiveNumber);
    c->callback([this] { run(); });
  }

  void run() const
  {
    const auto p = load_plant(plant);
    const auto ts = load_model_view(data, Seconds{step_s});
    const std::vector<TimeSeries> segs{ts};
    const auto zones = zone_channels(ts);
    if (zones.empty()) throw Error(ErrorCode::MissingChannel, data + ": no zone temperature channels T_<i>");
    ModelVariant v;
    v.family = parse_family(model);
    v.actuator = parse_actuator(actuator);
    v.nonneg = !unconstrained;
    v.forest = ForestHyper{trees, min_leaf, seed, jobs};
    v.icnn.epochs = epochs;
    v.icnn.seed = seed;
    v.hidden.clear();
    for (const auto & h : split_list(hidden)) v.hidden.push_back(std::stoi(h));
    ModelFile mf;
    mf.kind = std::string(to_string(v.family));
    mf.step = Seconds{step_s};
    for (std::size_t z = 0; z < zones.size(); ++z) {
      auto c = zone_config(z, zones.size(), parse_mode(mode), p);
      c.actuator = v.actuator;
      if (v.family == ModelFamily::Rf) mf.zones.emplace_back(fit_horizon(segs, c, horizon, v.forest));
      else mf.zones.push_back(train_variant(v, segs, c, 1));
    }
    save_model_file(out, mf);
  }
};

struct MpcRunCmd
{
  std::string model, plant, config, out = "-", summary, timing;
  bool allow_lb = false;
  std::optional<double> forecast_sigma;
  ScenarioFlags sf;

  void add(CLI::App & root)
  {
    auto * c = root.add_subcommand("mpc-run", "closed-loop episode under MPC");
    c->add_option("--model", model, "model JSON from train")->required();
    c->add_option("--plant", plant, "plant JSON");
    c->add_option("--config", config, "MPC config JSON");
    c->add_option("--out", out, "episode CSV, '-' for stdout");
    c->add_option("--summary", summary, "episode summary JSON");
    c->add_option("--timing", timing, "solve-time JSON (wall clock, not reproducible)");
    c->add_flag("--allow-nonconvex-lower-bound", allow_lb, "ICNN: keep lower comfort bounds");
    c->add_option("--forecast-sigma", forecast_sigma, "K, noise on the ambient forecast");
    sf.add(c);
    c->callback([this] { run(); });
  }

  void run() const
  {
    const auto p = load_plant(plant);
    auto cfg = load_mpc_config(config);
    if (allow_lb) cfg.allow_nonconvex_lower_bound = true;
    if (forecast_sigma) cfg.forecast_sigma = *forecast_sigma;
    cfg.validate();
    auto mf = load_model_file(model);
    if (mf.zones.size() != p.size())
      throw Error(ErrorCode::DimensionMismatch, model + ": " + std::to_string(mf.zones.size()) + " zone models for a " +
        std::to_string(p.size()) + "-zone plant");
    if (mf.step != cfg.step) throw Error(ErrorCode::ConfigError, "model step differs from control_step_s");
    auto sc = sf.build(cfg.mode == ThermalMode::Heating ? Season::Heating : Season::Cooling);
    sc.control_step = cfg.step;
    MpcPolicy mpc(std::move(mf.zones), cfg, sc);
    const auto ts = closed_loop(p, mpc, sc);
    save_series(out, ts);
    if (!summary.empty()) write_json(summary, to_json(summarize_episode(ts, cfg.comfort, cfg.step)));
    if (!timing.empty()) {
      const auto & t = mpc.solve_times();
      double mean = 0.0, mx = 0.0;
      for (double v : t) {
        mean += v;
        mx = std::max(mx, v);
      }
      if (!t.empty()) mean /= static_cast<double>(t.size());
      write_json(timing, {{"solves", t.size()}, {"failures", mpc.failures()}, {"mean_solve_s", mean}, {"max_solve_s", mx}});
    }
  }
};

/// Variant syntax: family[:option...] with options nonneg, unconstrained and
/// the actuator names, e.g. armax:valve_only:unconstrained.
ModelVariant parse_variant(const std::string & spec, const ForestHyper & forest, const TrainConfig & icnn)
{
  std::vector<std::string> parts;
  std::stringstream in(spec);
  for (std::string t; std::getline(in, t, ':');) parts.push_back(t);
  if (parts.empty()) throw Error(ErrorCode::ConfigError, "empty model variant");
  ModelVariant v;
  v.name = spec;
  v.family = parse_family(parts[0]);
  v.forest = forest;
  v.icnn = icnn;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i] == "unconstrained") v.nonneg = false;
    else if (parts[i] == "nonneg") v.nonneg = true;
    else v.actuator = parse_actuator(parts[i]);
  }
  return v;
}

struct SampleEffCmd
{
  std::string data, models = "armax,rf,picnn", weeks = "1,2,4,8", out = "-", svg, mode = "heating", plant;
  std::size_t reps = 100, steps = 2, validation_weeks = 0;
  std::uint64_t seed = 0;
  int jobs = 1, zone = 1, trees = 200, min_leaf = 200, epochs = 150;
  std::int64_t step_s = 1800;
  bool ablation = false;

  void add(CLI::App & root)
  {
    auto * c = root.add_subcommand("sample-efficiency", "open-loop MSE against training-set size");
    c->add_option("--data", data, "CSV with at least max(weeks)+1 whole weeks")->required();
    c->add_option("--models", models, "comma list of family[:option...]");
    c->add_flag("--ablation", ablation, "use the actuator/positivity ablation set instead of --models");
    c->add_option("--weeks", weeks, "comma list of training weeks");
    c->add_option("--reps", reps, "repetitions")->check(CLI::PositiveNumber);
    c->add_option("--seed", seed, "master seed");
    c->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    c->add_option("--zone", zone, "zone index (1-based)")->check(CLI::PositiveNumber);
    c->add_option("--steps", steps, "prediction horizon in model steps")->check(CLI::PositiveNumber);
    c->add_option("--validation-weeks", validation_weeks, "cap on validation folds, 0 for all");
    c->add_option("--mode", mode, "heating or cooling");
    c->add_option("--plant", plant, "plant JSON, for site coordinates");
    c->add_option("--trees", trees)->check(CLI::PositiveNumber);
    c->add_option("--min-leaf", min_leaf)->check(CLI::PositiveNumber);
    c->add_option("--epochs", epochs)->check(CLI::NonNegativeNumber);
    c->add_option("--step", step_s, "model step in seconds")->check(CLI::PositiveNumber);
    c->add_option("--out", out, "report CSV, '-' for stdout");
    c->add_option("--svg", svg, "MSE chart");
    c->callback([this] { run(); });
  }

  void run() const
  {
    const auto p = load_plant(plant);
    const auto ts = load_model_view(data, Seconds{step_s});
    const auto zones = zone_channels(ts);
    if (static_cast<std::size_t>(zone) > zones.size()) throw Error(ErrorCode::ConfigError, "--zone exceeds the zones in the data");
    const auto base = zone_config(static_cast<std::size_t>(zone - 1), zones.size(), parse_mode(mode), p);
    ForestHyper fh{trees, min_leaf, 0, 1};
    TrainConfig tc;
    tc.epochs = epochs;
    std::vector<ModelVariant> vs;
    const auto names = ablation ? std::vector<std::string>{"armax:valve_only", "armax:valve_times_dT", "armax:measured_energy",
                                    "armax:valve_times_dT:unconstrained"}
                                : split_list(models);
    for (const auto & n : names) vs.push_back(parse_variant(n, fh, tc));
    SampleEffOptions opt;
    opt.weeks.clear();
    for (const auto & w : split_list(weeks)) opt.weeks.push_back(std::stoi(w));
    opt.reps = reps;
    opt.seed = seed;
    opt.steps = steps;
    opt.validation_weeks = validation_weeks;
    opt.jobs = jobs;
    const auto rep = sample_efficiency(ts, base, vs, opt);
    std::ostringstream o;
    write_sample_eff_csv(o, rep);
    if (out == "-") std::cout << o.str();
    else write_text_file(out, o.str());
    if (!svg.empty()) write_svg(svg, sample_eff_chart(rep));
  }
};

struct EvaluateCmd
{
  std::string model, data, episode, baseline, config, mode, out = "-", svg;
  std::size_t steps = 2;

  void add(CLI::App & root)
  {
    auto * c = root.add_subcommand("evaluate",
      "open-loop MSE of a model (--model --data) or energy comparison of two episodes (--episode --baseline)");
    c->add_option("--model", model, "model JSON");
    c->add_option("--data", data, "validation CSV");
    c->add_option("--steps", steps, "prediction horizon in model steps")->check(CLI::PositiveNumber);
    c->add_option("--episode", episode, "controller episode CSV");
    c->add_option("--baseline", baseline, "baseline episode CSV");
    c->add_option("--config", config, "MPC config JSON, for mode and comfort bounds");
    c->add_option("--mode", mode, "heating or cooling (overrides the config)");
    c->add_option("--out", out, "report JSON, '-' for stdout");
    c->add_option("--svg", svg, "degree-day chart (episode comparison only)");
    c->callback([this] { run(); });
  }

  void run() const
  {
    const bool mse = !model.empty() || !data.empty();
    const bool cmp = !episode.empty() || !baseline.empty();
    if (mse == cmp) throw Error(ErrorCode::ConfigError, "give either --model and --data or --episode and --baseline");
    if (mse) run_mse();
    else run_compare();
  }

  void run_mse() const
  {
    if (model.empty() || data.empty()) throw Error(ErrorCode::ConfigError, "--model and --data are both required");
    const auto mf = load_model_file(model);
    const std::vector<TimeSeries> segs{load_model_view(data, mf.step)};
    nlohmann::json zones = nlohmann::json::array();
    for (const auto & z : mf.zones) {
      const auto r = mse_openloop(z, segs, steps, static_cast<std::size_t>(model_config(z).delta));
      zones.push_back({{"output", model_config(z).output}, {"mse_K2", r.mse}, {"count", r.count}});
    }
    write_json(out, {{"kind", mf.kind}, {"steps", steps}, {"zones", zones}});
  }

  void run_compare() const
  {
    if (episode.empty() || baseline.empty()) throw Error(ErrorCode::ConfigError, "--episode and --baseline are both required");
    auto cfg = load_mpc_config(config);
    if (!mode.empty()) cfg.mode = parse_mode(mode);
    const auto a = load_csv(episode);
    const auto b = load_csv(baseline);
    const auto za = zone_channels(a), zb = zone_channels(b);
    const auto da = daily_aggregates(a, za, cfg.mode), db = daily_aggregates(b, zb, cfg.mode);
    const auto ca = comfortable_days(da), cb = comfortable_days(db);
    const auto rep = compare_energy(ca, cb, cfg.mode);
    const auto sa = summarize_episode(a, cfg.comfort, cfg.step), sb = summarize_episode(b, cfg.comfort, cfg.step);
    const double sign = cfg.mode == ThermalMode::Heating ? 1.0 : -1.0;
    auto reg = [](const DegreeDayRegression & r) {
      return nlohmann::json{{"theta_dd", r.theta_dd}, {"theta_sol", r.theta_sol}, {"c", r.c}, {"r_squared", r.r_squared}};
    };
    nlohmann::json j{{"mode", to_string(cfg.mode)},
      {"energy_Wh", {{"episode", sign * sa.energy_Wh}, {"baseline", sign * sb.energy_Wh}}},
      {"measured_saving", sb.energy_Wh != 0.0 ? 1.0 - sa.energy_Wh / sb.energy_Wh : 0.0},
      {"regression_saving", rep.mean_saving}, {"regression_ratio", rep.ratio},
      {"days_used", {{"episode", ca.size()}, {"baseline", cb.size()}}},
      {"regression", {{"episode", reg(rep.mpc)}, {"baseline", reg(rep.baseline)}}},
      {"mean_T", {{"episode", sa.mean_T}, {"baseline", sb.mean_T}}}, {"mean_T_difference", sa.mean_T - sb.mean_T},
      {"violation_Kh", {{"episode", sa.violation.integral_Kh}, {"baseline", sb.violation.integral_Kh}}}};
    write_json(out, j);
    if (!svg.empty()) write_svg(svg, degree_day_chart({{"episode", ca}, {"baseline", cb}}, {rep.mpc, rep.baseline}, rep.baseline));
  }
};

struct BenchCmd
{
  std::string models, data, config, out = "-";
  int reps = 20, zone = 1;
  std::optional<std::size_t> anchor;

  void add(CLI::App & root)
  {
    auto * c = root.add_subcommand("bench", "time single MPC solves on a fixed instant");
    c->add_option("--model", models, "comma list of model JSON files")->required();
    c->add_option("--data", data, "CSV supplying initial conditions and forecasts")->required();
    c->add_option("--config", config, "MPC config JSON");
    c->add_option("--reps", reps, "timed repetitions after one warm-up")->check(CLI::PositiveNumber);
    c->add_option("--zone", zone, "zone index (1-based)")->check(CLI::PositiveNumber);
    c->add_option("--anchor", anchor, "model-step index of the instant (default: the most constrained one)");
    c->add_option("--out", out, "CSV, '-' for stdout");
    c->callback([this] { run(); });
  }

  void run() const
  {
    const auto cfg = load_mpc_config(config);
    std::vector<std::pair<std::string, ZoneModel>> ms;
    std::size_t history = 1;
    for (const auto & path : split_list(models)) {
      auto mf = load_model_file(path);
      if (static_cast<std::size_t>(zone) > mf.zones.size()) throw Error(ErrorCode::ConfigError, path + ": --zone out of range");
      if (mf.step != cfg.step) throw Error(ErrorCode::ConfigError, path + ": model step differs from control_step_s");
      auto z = std::move(mf.zones[static_cast<std::size_t>(zone - 1)]);
      history = std::max(history, model_history(z));
      ms.emplace_back(path, std::move(z));
    }
    const auto ts = load_model_view(data, cfg.step);
    const auto N = static_cast<std::size_t>(cfg.N);
    if (ts.length() < history + N + 1) throw Error(ErrorCode::TooShort, data + ": shorter than history plus horizon");
    std::size_t a = history;
    if (anchor) a = *anchor;
    else {
      // Closest approach to the binding comfort bound.
      const auto y = ts[model_config(ms.front().second).output];
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = history; k + N < ts.length(); ++k) {
        const auto [lo, hi] = cfg.comfort.at(ts.time_at(k));
        const double s = cfg.mode == ThermalMode::Heating ? lo - y[k] : y[k] - hi;
        if (s > best) best = s, a = k;
      }
    }
    if (a < history || a + N > ts.length()) throw Error(ErrorCode::ConfigError, "--anchor leaves no room for history and horizon");
    const auto window = ts.slice(a - history, a + N);
    std::ostringstream o;
    o << "model,kind,anchor,mean_s,stddev_s,min_s,max_s,rss_delta_kb,objective\n";
    for (const auto & [path, m] : ms) {
      const auto b = bench_solver(m, window, history, cfg, reps);
      o << fs::path(path).filename().string() << ',' << b.model << ',' << a << ',' << format_double(b.mean_s) << ','
        << format_double(b.stddev_s) << ',' << format_double(b.min_s) << ',' << format_double(b.max_s) << ','
        << b.rss_delta_kb << ',' << format_double(b.objective) << '\n';
    }
    if (out == "-") std::cout << o.str();
    else write_text_file(out, o.str());
  }
};

int exit_code(ErrorCode c)
{
  switch (c) {
    case ErrorCode::UnstableStep:
    case ErrorCode::MaxIterationsExceeded:
    case ErrorCode::Diverged:
    case ErrorCode::SingularDesign: return 2;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Building thermal models and MPC on a simulated plant"};
  app.require_subcommand(1);
  SimulateCmd simulate;
  TrainCmd train;
  MpcRunCmd mpc_run;
  SampleEffCmd sample_eff;
  EvaluateCmd evaluate;
  BenchCmd bench;
  simulate.add(app);
  train.add(app);
  mpc_run.add(app);
  sample_eff.add(app);
  evaluate.add(app);
  bench.add(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp & e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp & e) {
    return app.exit(e);
  } catch (const CLI::ParseError & e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  } catch (const Error & e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::invalid_argument & e) {
    std::cerr << "error: bad number: " << e.what() << '\n';
    return 1;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
