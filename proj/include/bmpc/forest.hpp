#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "bmpc/errors.hpp"
#include "bmpc/random.hpp"
#include "bmpc/regressors.hpp"
#include "bmpc/time_series.hpp"

namespace bmpc {

struct ForestHyper
{
  int n_trees = 200;
  int min_samples_leaf = 200;
  std::uint64_t seed = 0;
  int jobs = 1;  ///< worker threads for tree fitting; results do not depend on it
};

/// Which inputs feed the forest (X_d) and the leaf regressions (X_c) for a
/// model predicting k steps ahead from anchor time 0.
///   X_d: y_0..y_-delta, b_-1..b_-delta, neighbour_0, T_sup_0, T_amb_0,
///        mean T_amb over steps 0..k-1, mean and last I_hor over 0..k-1,
///        sin/cos of the target time of day, sin/cos of the day of year.
///   X_c: b_0..b_{k-1}.
/// Only measured quantities and forecasts appear in X_d, never predictions.
struct StepFeatureSpec
{
  int k = 1;
  int delta = 3;

  [[nodiscard]] std::size_t n_d() const { return static_cast<std::size_t>(2 * delta + 1) + 11; }
  [[nodiscard]] std::size_t n_c() const { return static_cast<std::size_t>(k); }

  [[nodiscard]] std::vector<std::string> d_names() const
  {
    std::vector<std::string> n;
    for (int j = 0; j <= delta; ++j) n.push_back("y_-" + std::to_string(j));
    for (int j = 1; j <= delta; ++j) n.push_back("b_-" + std::to_string(j));
    for (const char * s : {"neighbor_0", "T_sup_0", "T_amb_0", "T_amb_mean", "I_hor_mean", "I_hor_last", "tod_sin",
           "tod_cos", "doy_sin", "doy_cos", "mode"})
      n.emplace_back(s);
    return n;
  }
};

struct LeafModel
{
  Eigen::VectorXd w;  ///< weights over X_c
  double b = 0.0;
  std::size_t rows = 0;
};

struct TreeNode
{
  std::int32_t feature = -1;  ///< -1 for a leaf
  double threshold = 0.0;     ///< go left when x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t leaf = -1;  ///< index into Tree::leaves
};

struct Tree
{
  std::vector<TreeNode> nodes;
  std::vector<LeafModel> leaves;

  [[nodiscard]] const LeafModel & lookup(std::span<const double> x_d) const
  {
    std::int32_t i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto & n = nodes[static_cast<std::size_t>(i)];
      i = x_d[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return leaves[static_cast<std::size_t>(nodes[static_cast<std::size_t>(i)].leaf)];
  }
};

struct ForestModel
{
  StepFeatureSpec spec;
  ForestHyper hyper;
  std::vector<Tree> trees;
  std::size_t training_rows = 0;
};

/// Training rows for one horizon step.
struct StepDataset
{
  Eigen::MatrixXd Xd;  ///< rows x n_d
  Eigen::MatrixXd Xc;  ///< rows x n_c
  Eigen::VectorXd y;   ///< y_k - y_0
};

// ---------------------------------------------------------------------------
// Features

/// Raw per-sample signals needed by the step features.
struct StepSignals
{
  std::vector<double> y, b, neighbor, supply, ambient, irradiance, mode;
  std::vector<Timestamp> time;
  Seconds step{1800};

  [[nodiscard]] std::size_t length() const { return y.size(); }
};

inline StepSignals step_signals(const TimeSeries & ts, const RegressorConfig & c)
{
  auto need = [&](const std::string & name) {
    if (!ts.has(name)) throw Error(ErrorCode::MissingChannel, "missing channel '" + name + "'");
    const auto v = ts[name];
    return std::vector<double>(v.begin(), v.end());
  };
  StepSignals s;
  s.y = need(c.output);
  s.b = need(c.valve);
  s.neighbor = c.has_neighbor() ? need(c.neighbor) : std::vector<double>(ts.length(), 0.0);
  s.supply = ts.has(c.supply) ? need(c.supply) : std::vector<double>(ts.length(), 0.0);
  s.ambient = need(c.ambient);
  s.irradiance = need(c.irradiance);
  s.mode = ts.has("hc_mode") ? need("hc_mode")
                             : std::vector<double>(ts.length(), c.mode == ThermalMode::Heating ? 1.0 : -1.0);
  s.step = ts.step();
  for (std::size_t k = 0; k < ts.length(); ++k) s.time.push_back(ts.time_at(k));
  return s;
}

/// Fills the X_d vector for anchor `a`; disturbances are read at a..a+k-1.
inline void step_features_d(const StepSignals & s, std::size_t a, const StepFeatureSpec & spec, std::span<double> out)
{
  if (out.size() != spec.n_d()) throw Error(ErrorCode::FeatureDimensionMismatch, "X_d size");
  std::size_t i = 0;
  const auto delta = static_cast<std::size_t>(spec.delta);
  const auto k = static_cast<std::size_t>(spec.k);
  for (std::size_t j = 0; j <= delta; ++j) out[i++] = s.y[a - j];
  for (std::size_t j = 1; j <= delta; ++j) out[i++] = s.b[a - j];
  out[i++] = s.neighbor[a];
  out[i++] = s.supply[a];
  out[i++] = s.ambient[a];
  double ta = 0.0, ih = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    ta += s.ambient[a + j];
    ih += s.irradiance[a + j];
  }
  out[i++] = ta / static_cast<double>(k);
  out[i++] = ih / static_cast<double>(k);
  out[i++] = s.irradiance[a + k - 1];
  const Timestamp target = s.time[a] + s.step * static_cast<std::int64_t>(k);
  const double tod = 2.0 * std::numbers::pi * hour_of_day(target) / 24.0;
  const double doy = 2.0 * std::numbers::pi * (day_of_year(s.time[a]) - 1) / days_in_year(s.time[a]);
  out[i++] = std::sin(tod);
  out[i++] = std::cos(tod);
  out[i++] = std::sin(doy);
  out[i++] = std::cos(doy);
  out[i++] = s.mode[a];
}

/// Rows for every anchor with delta lags behind and k steps ahead.
inline StepDataset build_step_dataset(std::span<const TimeSeries> segments, const RegressorConfig & c,
  const StepFeatureSpec & spec)
{
  std::vector<StepSignals> sigs;
  std::size_t rows = 0;
  const auto delta = static_cast<std::size_t>(spec.delta);
  const auto k = static_cast<std::size_t>(spec.k);
  for (const auto & seg : segments) {
    if (seg.length() < delta + k + 1) continue;
    sigs.push_back(step_signals(seg, c));
    rows += seg.length() - delta - k;
  }
  StepDataset d;
  d.Xd.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(spec.n_d()));
  d.Xc.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(spec.n_c()));
  d.y.resize(static_cast<Eigen::Index>(rows));
  std::vector<double> xd(spec.n_d());
  Eigen::Index r = 0;
  for (const auto & s : sigs) {
    for (std::size_t a = delta; a + k < s.length(); ++a, ++r) {
      step_features_d(s, a, spec, xd);
      for (std::size_t j = 0; j < xd.size(); ++j) d.Xd(r, static_cast<Eigen::Index>(j)) = xd[j];
      for (std::size_t j = 0; j < k; ++j) d.Xc(r, static_cast<Eigen::Index>(j)) = s.b[a + j];
      d.y(r) = s.y[a + k] - s.y[a];
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Fitting

namespace detail {

/// OLS of y on [Xc, 1]; ridge 1e-6 when the leaf design is rank deficient.
inline LeafModel fit_leaf(const Eigen::MatrixXd & Xc, const Eigen::VectorXd & y, std::span<const std::size_t> rows)
{
  const auto p = Xc.cols();
  Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), p + 1);
  Eigen::VectorXd t(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto ri = static_cast<Eigen::Index>(rows[i]);
    A.row(static_cast<Eigen::Index>(i)).head(p) = Xc.row(ri);
    A(static_cast<Eigen::Index>(i), p) = 1.0;
    t(static_cast<Eigen::Index>(i)) = y(ri);
  }
  Eigen::VectorXd sol;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() == A.cols()) {
    sol = qr.solve(t);
  } else {
    Eigen::MatrixXd G = A.transpose() * A;
    G.diagonal().array() += 1e-6;
    sol = G.ldlt().solve(A.transpose() * t);
  }
  LeafModel m;
  m.w = sol.head(p);
  m.b = sol(p);
  m.rows = rows.size();
  return m;
}

struct SplitChoice
{
  std::int32_t feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  std::size_t n_left = 0;
};

/// Grows one CART tree on a bootstrap sample. `sorted[f]` holds the node's
/// rows ordered by feature f; partitions keep that order stable.
class TreeBuilder
{
public:
  TreeBuilder(const StepDataset & d, int min_leaf) : d_(d), min_leaf_(static_cast<std::size_t>(min_leaf)) {}

  Tree build(std::vector<std::size_t> sample)
  {
    const auto nf = static_cast<std::size_t>(d_.Xd.cols());
    std::vector<std::vector<std::size_t>> sorted(nf, sample);
    for (std::size_t f = 0; f < nf; ++f) {
      const auto fi = static_cast<Eigen::Index>(f);
      std::stable_sort(sorted[f].begin(), sorted[f].end(),
        [&](std::size_t a, std::size_t b) { return d_.Xd(static_cast<Eigen::Index>(a), fi) < d_.Xd(static_cast<Eigen::Index>(b), fi); });
    }
    tree_ = Tree{};
    grow(std::move(sorted));
    return std::move(tree_);
  }

private:
  std::int32_t grow(std::vector<std::vector<std::size_t>> sorted)
  {
    const auto id = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const std::size_t n = sorted[0].size();
    const auto split = n >= 2 * min_leaf_ ? best_split(sorted) : SplitChoice{};
    if (split.feature < 0) {
      tree_.nodes[static_cast<std::size_t>(id)].leaf = static_cast<std::int32_t>(tree_.leaves.size());
      tree_.leaves.push_back(fit_leaf(d_.Xc, d_.y, sorted[0]));
      return id;
    }
    // Membership from the split feature's order: the first n_left rows go left.
    const auto sf = static_cast<std::size_t>(split.feature);
    std::vector<char> goes_left(static_cast<std::size_t>(d_.Xd.rows()), 0);
    // Rows can repeat in a bootstrap sample; all copies of a row share a side
    // because the split is on a threshold between distinct values.
    for (std::size_t i = 0; i < split.n_left; ++i) goes_left[sorted[sf][i]] = 1;
    std::vector<std::vector<std::size_t>> L(sorted.size()), R(sorted.size());
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      L[f].reserve(split.n_left);
      R[f].reserve(n - split.n_left);
      for (auto r : sorted[f]) (goes_left[r] ? L[f] : R[f]).push_back(r);
    }
    sorted.clear();
    sorted.shrink_to_fit();
    const auto l = grow(std::move(L));
    const auto r = grow(std::move(R));
    auto & node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  SplitChoice best_split(const std::vector<std::vector<std::size_t>> & sorted) const
  {
    const std::size_t n = sorted[0].size();
    double sum = 0.0, sq = 0.0;
    for (auto r : sorted[0]) {
      const double v = d_.y(static_cast<Eigen::Index>(r));
      sum += v;
      sq += v * v;
    }
    const double parent = sq - sum * sum / static_cast<double>(n);
    SplitChoice best;
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      const auto fi = static_cast<Eigen::Index>(f);
      const auto & order = sorted[f];
      double ls = 0.0, lq = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double v = d_.y(static_cast<Eigen::Index>(order[i]));
        ls += v;
        lq += v * v;
        const std::size_t nl = i + 1;
        if (nl < min_leaf_) continue;
        if (n - nl < min_leaf_) break;
        const double x0 = d_.Xd(static_cast<Eigen::Index>(order[i]), fi);
        const double x1 = d_.Xd(static_cast<Eigen::Index>(order[i + 1]), fi);
        if (!(x0 < x1)) continue;
        const double rs = sum - ls, rq = sq - lq;
        const double sse = (lq - ls * ls / static_cast<double>(nl)) + (rq - rs * rs / static_cast<double>(n - nl));
        const double gain = parent - sse;
        if (gain > best.gain + 1e-12 * std::max(1.0, parent)) {
          best.feature = static_cast<std::int32_t>(f);
          best.threshold = 0.5 * (x0 + x1);
          if (!(best.threshold < x1) || !(best.threshold >= x0)) best.threshold = x0;
          best.gain = gain;
          best.n_left = nl;
        }
      }
    }
    return best;
  }

  const StepDataset & d_;
  std::size_t min_leaf_;
  Tree tree_;
};

}  // namespace detail

/// Bootstrap forest of CART trees on X_d with affine leaves over X_c.
inline ForestModel fit_step_model(const StepDataset & d, const StepFeatureSpec & spec, const ForestHyper & hyper)
{
  const auto rows = static_cast<std::size_t>(d.y.size());
  if (hyper.n_trees < 1 || hyper.min_samples_leaf < 1) throw Error(ErrorCode::ConfigError, "n_trees and min_samples_leaf must be >= 1");
  if (rows < static_cast<std::size_t>(hyper.min_samples_leaf))
    throw Error(ErrorCode::NotEnoughData, std::to_string(rows) + " rows, min_samples_leaf " + std::to_string(hyper.min_samples_leaf));
  if (static_cast<std::size_t>(d.Xd.cols()) != spec.n_d() || static_cast<std::size_t>(d.Xc.cols()) != spec.n_c())
    throw Error(ErrorCode::FeatureDimensionMismatch, "dataset does not match the step spec");

  ForestModel m;
  m.spec = spec;
  m.hyper = hyper;
  m.training_rows = rows;
  m.trees.resize(static_cast<std::size_t>(hyper.n_trees));

  auto fit_tree = [&](std::size_t t) {
    Rng rng(derive_seed(hyper.seed, static_cast<std::uint64_t>(spec.k), t));
    std::vector<std::size_t> sample(rows);
    for (auto & s : sample) s = rng.below(rows);
    detail::TreeBuilder builder(d, hyper.min_samples_leaf);
    m.trees[t] = builder.build(std::move(sample));
  };
  const auto jobs = static_cast<std::size_t>(std::max(1, hyper.jobs));
  if (jobs == 1) {
    for (std::size_t t = 0; t < m.trees.size(); ++t) fit_tree(t);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < jobs; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < m.trees.size(); t += jobs) fit_tree(t);
      });
  }
  return m;
}

inline ForestModel fit_step_model(std::span<const TimeSeries> segments, const RegressorConfig & c,
  const StepFeatureSpec & spec, const ForestHyper & hyper)
{
  return fit_step_model(build_step_dataset(segments, c, spec), spec, hyper);
}

struct AffineMap
{
  Eigen::VectorXd w;
  double b = 0.0;

  [[nodiscard]] double operator()(std::span<const double> x_c) const
  {
    double acc = b;
    for (std::size_t j = 0; j < x_c.size(); ++j) acc += w(static_cast<Eigen::Index>(j)) * x_c[j];
    return acc;
  }
};

/// Averaged leaf maps for this x_d; affine in x_c by construction.
inline AffineMap extract_affine(const ForestModel & m, std::span<const double> x_d)
{
  if (x_d.size() != m.spec.n_d()) throw Error(ErrorCode::FeatureDimensionMismatch, "x_d has the wrong length");
  AffineMap out{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.spec.n_c())), 0.0};
  for (const auto & t : m.trees) {
    const auto & leaf = t.lookup(x_d);
    out.w += leaf.w;
    out.b += leaf.b;
  }
  const double n = static_cast<double>(m.trees.size());
  out.w /= n;
  out.b /= n;
  return out;
}

inline double predict(const ForestModel & m, std::span<const double> x_d, std::span<const double> x_c)
{
  if (x_c.size() != m.spec.n_c()) throw Error(ErrorCode::FeatureDimensionMismatch, "x_c has the wrong length");
  return extract_affine(m, x_d)(x_c);
}

/// One forest per horizon step.
struct RfModel
{
  RegressorConfig config;  ///< channel roles and delta; tau unused
  ForestHyper hyper;
  std::vector<ForestModel> steps;

  [[nodiscard]] int horizon() const { return static_cast<int>(steps.size()); }
};

inline RfModel fit_horizon(std::span<const TimeSeries> segments, const RegressorConfig & c, int N,
  const ForestHyper & hyper, int first_step = 1)
{
  if (N < 1) throw Error(ErrorCode::ConfigError, "horizon must be >= 1");
  RfModel m;
  m.config = c;
  m.hyper = hyper;
  // Every step model uses the anchors admissible for the longest step, so
  // all of them see the same rows.
  for (int k = 1; k <= N; ++k) {
    const StepFeatureSpec spec{k, c.delta};
    if (k < first_step) {
      m.steps.push_back(ForestModel{spec, hyper, {}, 0});
      continue;
    }
    auto d = build_step_dataset(segments, c, spec);
    // Drop anchors that the longest step cannot use (the last N-k per segment).
    if (k < N) {
      std::vector<Eigen::Index> keep;
      Eigen::Index r = 0;
      for (const auto & seg : segments) {
        const auto delta = static_cast<std::size_t>(c.delta);
        if (seg.length() < delta + static_cast<std::size_t>(k) + 1) continue;
        const std::size_t n_k = seg.length() - delta - static_cast<std::size_t>(k);
        const std::size_t n_N = seg.length() >= delta + static_cast<std::size_t>(N) + 1 ? seg.length() - delta - static_cast<std::size_t>(N) : 0;
        for (std::size_t i = 0; i < n_k; ++i, ++r)
          if (i < n_N) keep.push_back(r);
      }
      StepDataset e;
      e.Xd.resize(static_cast<Eigen::Index>(keep.size()), d.Xd.cols());
      e.Xc.resize(static_cast<Eigen::Index>(keep.size()), d.Xc.cols());
      e.y.resize(static_cast<Eigen::Index>(keep.size()));
      for (std::size_t i = 0; i < keep.size(); ++i) {
        e.Xd.row(static_cast<Eigen::Index>(i)) = d.Xd.row(keep[i]);
        e.Xc.row(static_cast<Eigen::Index>(i)) = d.Xc.row(keep[i]);
        e.y(static_cast<Eigen::Index>(i)) = d.y(keep[i]);
      }
      d = std::move(e);
    }
    m.steps.push_back(fit_step_model(d, spec, hyper));
  }
  return m;
}

/// Open-loop k-step prediction from anchor `a` of precomputed signals using
/// the recorded valve sequence as X_c.
inline double rf_predict_at(const RfModel & m, const StepSignals & s, std::size_t a, int k)
{
  const auto & f = m.steps.at(static_cast<std::size_t>(k - 1));
  if (f.trees.empty()) throw Error(ErrorCode::ConfigError, "step model " + std::to_string(k) + " was not fitted");
  std::vector<double> xd(f.spec.n_d()), xc(f.spec.n_c());
  step_features_d(s, a, f.spec, xd);
  for (std::size_t j = 0; j < xc.size(); ++j) xc[j] = s.b[a + j];
  return s.y[a] + predict(f, xd, xc);
}

// ---------------------------------------------------------------------------
// Serialization: JSON manifest plus a little-endian binary sidecar holding
// the node and leaf arrays.

namespace detail {

inline constexpr char kRfMagic[8] = {'B', 'M', 'P', 'C', 'R', 'F', '0', '1'};

template <class T>
void put(std::ostream & o, T v)
{
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  o.write(buf, sizeof(T));
}

template <class T>
T get(std::istream & in)
{
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw Error(ErrorCode::IoError, "truncated forest sidecar");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_forest_binary(std::ostream & o, const RfModel & m)
{
  o.write(detail::kRfMagic, sizeof detail::kRfMagic);
  detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(m.steps.size()));
  for (const auto & f : m.steps) {
    detail::put<std::int32_t>(o, f.spec.k);
    detail::put<std::int32_t>(o, f.spec.delta);
    detail::put<std::uint64_t>(o, f.training_rows);
    detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(f.trees.size()));
    for (const auto & t : f.trees) {
      detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(t.nodes.size()));
      for (const auto & n : t.nodes) {
        detail::put<std::int32_t>(o, n.feature);
        detail::put<double>(o, n.threshold);
        detail::put<std::int32_t>(o, n.left);
        detail::put<std::int32_t>(o, n.right);
        detail::put<std::int32_t>(o, n.leaf);
      }
      detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(t.leaves.size()));
      for (const auto & l : t.leaves) {
        detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(l.w.size()));
        for (Eigen::Index j = 0; j < l.w.size(); ++j) detail::put<double>(o, l.w(j));
        detail::put<double>(o, l.b);
        detail::put<std::uint64_t>(o, l.rows);
      }
    }
  }
}

inline void read_forest_binary(std::istream & in, RfModel & m)
{
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, detail::kRfMagic, sizeof magic) != 0)
    throw Error(ErrorCode::SchemaMismatch, "not a forest sidecar");
  const auto n_steps = detail::get<std::uint32_t>(in);
  m.steps.assign(n_steps, {});
  for (auto & f : m.steps) {
    f.spec.k = detail::get<std::int32_t>(in);
    f.spec.delta = detail::get<std::int32_t>(in);
    f.training_rows = detail::get<std::uint64_t>(in);
    f.hyper = m.hyper;
    f.trees.resize(detail::get<std::uint32_t>(in));
    for (auto & t : f.trees) {
      t.nodes.resize(detail::get<std::uint32_t>(in));
      for (auto & n : t.nodes) {
        n.feature = detail::get<std::int32_t>(in);
        n.threshold = detail::get<double>(in);
        n.left = detail::get<std::int32_t>(in);
        n.right = detail::get<std::int32_t>(in);
        n.leaf = detail::get<std::int32_t>(in);
      }
      t.leaves.resize(detail::get<std::uint32_t>(in));
      for (auto & l : t.leaves) {
        l.w.resize(detail::get<std::uint32_t>(in));
        for (Eigen::Index j = 0; j < l.w.size(); ++j) l.w(j) = detail::get<double>(in);
        l.b = detail::get<double>(in);
        l.rows = detail::get<std::uint64_t>(in);
      }
    }
  }
}

/// Manifest for a forest saved next to `sidecar` (a file name relative to
/// the manifest's directory).
inline nlohmann::json forest_manifest(const RfModel & m, const std::string & sidecar)
{
  nlohmann::json steps = nlohmann::json::array();
  for (const auto & f : m.steps) {
    std::size_t leaves = 0;
    for (const auto & t : f.trees) leaves += t.leaves.size();
    steps.push_back({{"k", f.spec.k}, {"trees", f.trees.size()}, {"leaves", leaves}, {"training_rows", f.training_rows},
      {"x_d", f.spec.d_names()}});
  }
  return {{"kind", "rf"}, {"config", m.config}, {"n_trees", m.hyper.n_trees},
    {"min_samples_leaf", m.hyper.min_samples_leaf}, {"seed", m.hyper.seed}, {"sidecar", sidecar}, {"steps", steps}};
}

}  // namespace bmpc
