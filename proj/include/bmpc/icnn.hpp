#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "bmpc/errors.hpp"
#include "bmpc/random.hpp"
#include "bmpc/regressors.hpp"
#include "bmpc/solar.hpp"
#include "bmpc/time_series.hpp"

namespace bmpc {

enum class IcnnKind { Ficnn, Picnn };

inline std::string_view to_string(IcnnKind k) { return k == IcnnKind::Ficnn ? "ficnn" : "picnn"; }

inline IcnnKind parse_icnn_kind(std::string_view s)
{
  if (s == "ficnn") return IcnnKind::Ficnn;
  if (s == "picnn") return IcnnKind::Picnn;
  throw Error(ErrorCode::ConfigError, "icnn kind must be ficnn or picnn, got '" + std::string(s) + "'");
}

inline constexpr double kUnbounded = -std::numeric_limits<double>::infinity();

struct IcnnArch
{
  IcnnKind kind = IcnnKind::Picnn;
  std::size_t n_cvx = 1;
  std::size_t n_ncvx = 0;
  std::vector<int> hidden{20, 20};
  double relu_offset = 0.0;  ///< g(a) = max(0, a + offset)
  /// Convex inputs whose hidden-layer direct weights are kept >= 0, making
  /// the hidden part of the network non-decreasing in them.
  std::vector<char> monotone;
  /// Lower bound on the raw-unit output-layer slope per convex input
  /// (kUnbounded: free). Together with `monotone` this bounds the total
  /// derivative from below.
  std::vector<double> out_slope_min;

  [[nodiscard]] std::size_t layers() const { return hidden.size(); }
};

/// Layer l maps (z_l, x, v_l) to z_{l+1} = g(Wz z_l + Wx x + Wv v_l + b);
/// the last layer is linear and scalar. Wz >= 0 for l >= 1 makes the output
/// convex in x; the context path v_{l+1} = relu(U v_l + c) only sees the
/// non-convex inputs.
struct IcnnModel
{
  IcnnArch arch;
  std::vector<Eigen::MatrixXd> Wz;  ///< index l = 1..L (entry 0 unused, empty)
  std::vector<Eigen::MatrixXd> Wx;  ///< l = 0..L
  std::vector<Eigen::MatrixXd> Wv;  ///< l = 0..L (PICNN)
  std::vector<Eigen::VectorXd> b;   ///< l = 0..L
  std::vector<Eigen::MatrixXd> U;   ///< context, l = 0..L-1
  std::vector<Eigen::VectorXd> c;

  // Standardization kept inside the model; raw units at the interface.
  Eigen::VectorXd x_mean, x_std, v_mean, v_std;
  double t_mean = 0.0, t_std = 1.0;

  double final_loss = std::numeric_limits<double>::quiet_NaN();
  int epochs_run = 0;

  [[nodiscard]] std::size_t parameter_count() const
  {
    std::size_t n = 0;
    auto add = [&](const auto & v) {
      for (const auto & m : v) n += static_cast<std::size_t>(m.size());
    };
    add(Wz);
    add(Wx);
    add(Wv);
    add(b);
    add(U);
    add(c);
    return n;
  }
};

// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t context_width(const IcnnModel & m, std::size_t l)
{
  if (m.arch.kind == IcnnKind::Ficnn) return 0;
  return l == 0 ? m.arch.n_ncvx : static_cast<std::size_t>(m.arch.hidden[l - 1]);
}

inline std::size_t layer_width(const IcnnModel & m, std::size_t l)
{
  return l < m.arch.layers() ? static_cast<std::size_t>(m.arch.hidden[l]) : 1;
}

}  // namespace detail

/// Keeps the convexity and monotonicity constraints satisfied.
inline void project(IcnnModel & m)
{
  const std::size_t L = m.arch.layers();
  for (std::size_t l = 1; l <= L; ++l) m.Wz[l] = m.Wz[l].cwiseMax(0.0);
  for (std::size_t j = 0; j < m.arch.n_cvx; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (j < m.arch.monotone.size() && m.arch.monotone[j])
      for (std::size_t l = 0; l < L; ++l) m.Wx[l].col(jj) = m.Wx[l].col(jj).cwiseMax(0.0);
    if (j < m.arch.out_slope_min.size() && m.arch.out_slope_min[j] != kUnbounded) {
      // raw slope = t_std * w / x_std
      const double lo = m.arch.out_slope_min[j] * m.x_std(jj) / m.t_std;
      m.Wx[L](0, jj) = std::max(m.Wx[L](0, jj), lo);
    }
  }
}

inline IcnnModel init_icnn(const IcnnArch & arch, std::uint64_t seed)
{
  if (arch.hidden.empty()) throw Error(ErrorCode::ConfigError, "icnn needs at least one hidden layer");
  for (int h : arch.hidden)
    if (h < 1) throw Error(ErrorCode::ConfigError, "hidden widths must be >= 1");
  if (arch.kind == IcnnKind::Picnn && arch.n_ncvx == 0)
    throw Error(ErrorCode::ConfigError, "picnn needs non-convex inputs");
  IcnnModel m;
  m.arch = arch;
  m.arch.monotone.resize(arch.n_cvx, 0);
  m.arch.out_slope_min.resize(arch.n_cvx, kUnbounded);
  const std::size_t L = arch.layers();
  Rng rng(seed);
  auto gauss = [&](Eigen::Index r, Eigen::Index cols, double s) {
    Eigen::MatrixXd M(r, cols);
    for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = s * rng.normal();
    return M;
  };
  m.Wz.resize(L + 1);
  m.Wx.resize(L + 1);
  m.Wv.resize(L + 1);
  m.b.resize(L + 1);
  for (std::size_t l = 0; l <= L; ++l) {
    const auto out = static_cast<Eigen::Index>(detail::layer_width(m, l));
    const auto cw = static_cast<Eigen::Index>(detail::context_width(m, l));
    if (l >= 1) {
      const auto in = static_cast<Eigen::Index>(arch.hidden[l - 1]);
      m.Wz[l] = gauss(out, in, 1.0 / std::sqrt(static_cast<double>(in))).cwiseAbs() * 0.5;
    }
    m.Wx[l] = gauss(out, static_cast<Eigen::Index>(arch.n_cvx), 1.0 / std::sqrt(static_cast<double>(arch.n_cvx)));
    m.Wv[l] = cw > 0 ? gauss(out, cw, 1.0 / std::sqrt(static_cast<double>(cw))) : Eigen::MatrixXd(out, 0);
    m.b[l] = Eigen::VectorXd::Zero(out);
  }
  if (arch.kind == IcnnKind::Picnn) {
    for (std::size_t l = 0; l < L; ++l) {
      const auto in = static_cast<Eigen::Index>(detail::context_width(m, l));
      const auto out = static_cast<Eigen::Index>(arch.hidden[l]);
      m.U.push_back(gauss(out, in, 1.0 / std::sqrt(static_cast<double>(in))));
      m.c.push_back(Eigen::VectorXd::Zero(out));
    }
  }
  m.x_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.n_cvx));
  m.x_std = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(arch.n_cvx));
  m.v_mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.n_ncvx));
  m.v_std = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(arch.n_ncvx));
  project(m);
  return m;
}

/// Batched forward pass in standardized units; columns are samples. Keeps
/// the intermediate values needed for reverse mode.
struct IcnnTape
{
  Eigen::MatrixXd X;
  std::vector<Eigen::MatrixXd> V;  ///< context activations, 0..L
  std::vector<Eigen::MatrixXd> P;  ///< context pre-activations, 0..L-1
  std::vector<Eigen::MatrixXd> A;  ///< convex pre-activations, 0..L
  std::vector<Eigen::MatrixXd> Z;  ///< hidden activations, 1..L (entry 0 empty)
};

inline Eigen::RowVectorXd forward_std(const IcnnModel & m, const Eigen::MatrixXd & Xs, const Eigen::MatrixXd & Vs,
  IcnnTape * tape = nullptr)
{
  const std::size_t L = m.arch.layers();
  const bool ctx = m.arch.kind == IcnnKind::Picnn;
  std::vector<Eigen::MatrixXd> V(L + 1);
  if (ctx) {
    V[0] = Vs;
    if (tape) tape->P.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
      Eigen::MatrixXd pre = (m.U[l] * V[l]).colwise() + m.c[l];
      V[l + 1] = pre.cwiseMax(0.0);
      if (tape) tape->P[l] = std::move(pre);
    }
  }
  Eigen::MatrixXd z;
  if (tape) {
    tape->A.resize(L + 1);
    tape->Z.resize(L + 1);
  }
  Eigen::MatrixXd a;
  for (std::size_t l = 0; l <= L; ++l) {
    a = m.Wx[l] * Xs;
    if (l >= 1) a.noalias() += m.Wz[l] * z;
    if (ctx) a.noalias() += m.Wv[l] * V[l];
    a.colwise() += m.b[l];
    if (l < L) {
      Eigen::MatrixXd zn = (a.array() + m.arch.relu_offset).cwiseMax(0.0).matrix();
      if (tape) {
        tape->A[l] = a;
        tape->Z[l + 1] = zn;
      }
      z = std::move(zn);
    }
  }
  if (tape) {
    tape->A[L] = a;
    tape->X = Xs;
    tape->V = std::move(V);
  }
  return a.row(0);
}

inline void check_dims(const IcnnModel & m, std::span<const double> x, std::span<const double> v)
{
  if (x.size() != m.arch.n_cvx) throw Error(ErrorCode::DimensionMismatch, "convex input has the wrong length");
  if (m.arch.kind == IcnnKind::Picnn && v.size() != m.arch.n_ncvx)
    throw Error(ErrorCode::DimensionMismatch, "non-convex input has the wrong length");
}

/// Output in raw units. FICNN ignores x_ncvx.
inline double forward(const IcnnModel & m, std::span<const double> x_cvx, std::span<const double> x_ncvx = {})
{
  check_dims(m, x_cvx, x_ncvx);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(m.arch.n_cvx), 1);
  for (std::size_t j = 0; j < x_cvx.size(); ++j)
    X(static_cast<Eigen::Index>(j), 0) = (x_cvx[j] - m.x_mean(static_cast<Eigen::Index>(j))) / m.x_std(static_cast<Eigen::Index>(j));
  Eigen::MatrixXd V(static_cast<Eigen::Index>(m.arch.kind == IcnnKind::Picnn ? m.arch.n_ncvx : 0), 1);
  for (Eigen::Index j = 0; j < V.rows(); ++j) V(j, 0) = (x_ncvx[static_cast<std::size_t>(j)] - m.v_mean(j)) / m.v_std(j);
  return m.t_mean + m.t_std * forward_std(m, X, V)(0);
}

/// d output / d x_cvx in raw units; subgradient 0 at ReLU kinks.
inline Eigen::VectorXd gradient(const IcnnModel & m, std::span<const double> x_cvx, std::span<const double> x_ncvx = {})
{
  check_dims(m, x_cvx, x_ncvx);
  const std::size_t L = m.arch.layers();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(m.arch.n_cvx), 1);
  for (std::size_t j = 0; j < x_cvx.size(); ++j)
    X(static_cast<Eigen::Index>(j), 0) = (x_cvx[j] - m.x_mean(static_cast<Eigen::Index>(j))) / m.x_std(static_cast<Eigen::Index>(j));
  Eigen::MatrixXd V(static_cast<Eigen::Index>(m.arch.kind == IcnnKind::Picnn ? m.arch.n_ncvx : 0), 1);
  for (Eigen::Index j = 0; j < V.rows(); ++j) V(j, 0) = (x_ncvx[static_cast<std::size_t>(j)] - m.v_mean(j)) / m.v_std(j);
  IcnnTape tape;
  forward_std(m, X, V, &tape);
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.arch.n_cvx));
  Eigen::VectorXd delta = Eigen::VectorXd::Ones(1);
  for (std::size_t l = L + 1; l-- > 0;) {
    dx.noalias() += m.Wx[l].transpose() * delta;
    if (l == 0) break;
    Eigen::VectorXd dz = m.Wz[l].transpose() * delta;
    const auto & a = tape.A[l - 1];
    for (Eigen::Index i = 0; i < dz.size(); ++i) dz(i) = a(i, 0) + m.arch.relu_offset > 0.0 ? dz(i) : 0.0;
    delta = std::move(dz);
  }
  return (m.t_std * dx.array() / m.x_std.array()).matrix();
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig
{
  double step_size = 3e-3;
  int epochs = 150;
  int batch_size = 64;
  std::uint64_t seed = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void validate() const
  {
    if (!(step_size > 0.0)) throw Error(ErrorCode::ConfigError, "step size must be positive");
    if (epochs < 0 || batch_size < 1) throw Error(ErrorCode::ConfigError, "epochs >= 0 and batch_size >= 1 required");
  }
};

struct IcnnDataset
{
  Eigen::MatrixXd Xc;  ///< rows x n_cvx
  Eigen::MatrixXd Xn;  ///< rows x n_ncvx
  Eigen::VectorXd t;

  [[nodiscard]] std::size_t rows() const { return static_cast<std::size_t>(t.size()); }
};

namespace detail {

struct Grads
{
  std::vector<Eigen::MatrixXd> Wz, Wx, Wv, U;
  std::vector<Eigen::VectorXd> b, c;
};

inline Grads zero_like(const IcnnModel & m)
{
  Grads g;
  auto z = [](const auto & v) {
    auto out = v;
    for (auto & x : out) x.setZero();
    return out;
  };
  g.Wz = z(m.Wz);
  g.Wx = z(m.Wx);
  g.Wv = z(m.Wv);
  g.U = z(m.U);
  g.b = z(m.b);
  g.c = z(m.c);
  return g;
}

/// Mean squared error on a batch (standardized units) and its parameter
/// gradient.
inline double loss_and_grad(const IcnnModel & m, const Eigen::MatrixXd & X, const Eigen::MatrixXd & V,
  const Eigen::RowVectorXd & t, Grads & g)
{
  const std::size_t L = m.arch.layers();
  const bool ctx = m.arch.kind == IcnnKind::Picnn;
  IcnnTape tape;
  const Eigen::RowVectorXd out = forward_std(m, X, V, &tape);
  const double B = static_cast<double>(X.cols());
  const Eigen::RowVectorXd r = out - t;
  const double loss = r.squaredNorm() / B;

  Eigen::MatrixXd delta = (2.0 / B) * r;
  std::vector<Eigen::MatrixXd> dV(L + 1);
  if (ctx)
    for (std::size_t l = 0; l <= L; ++l) dV[l] = Eigen::MatrixXd::Zero(tape.V[l].rows(), tape.V[l].cols());
  for (std::size_t l = L + 1; l-- > 0;) {
    g.Wx[l].noalias() += delta * tape.X.transpose();
    g.b[l].noalias() += delta.rowwise().sum();
    if (ctx) {
      // dV[l+1] is complete here; push it through the context layer l.
      if (l < L) {
        const Eigen::MatrixXd G = (tape.P[l].array() > 0.0).cast<double>().matrix().cwiseProduct(dV[l + 1]);
        g.U[l].noalias() += G * tape.V[l].transpose();
        g.c[l].noalias() += G.rowwise().sum();
        dV[l].noalias() += m.U[l].transpose() * G;
      }
      g.Wv[l].noalias() += delta * tape.V[l].transpose();
      dV[l].noalias() += m.Wv[l].transpose() * delta;
    }
    if (l == 0) break;
    g.Wz[l].noalias() += delta * tape.Z[l].transpose();
    Eigen::MatrixXd dz = m.Wz[l].transpose() * delta;
    delta = ((tape.A[l - 1].array() + m.arch.relu_offset) > 0.0).cast<double>().matrix().cwiseProduct(dz);
  }
  return loss;
}

struct AdamState
{
  Grads m, v;
  int t = 0;
};

template <class P>
void adam_update(std::vector<P> & params, std::vector<P> & g, std::vector<P> & mm, std::vector<P> & vv, double lr,
  double b1, double b2, double eps, int t)
{
  const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() == 0) continue;
    mm[i] = b1 * mm[i] + (1.0 - b1) * g[i];
    vv[i] = b2 * vv[i] + (1.0 - b2) * g[i].cwiseProduct(g[i]);
    params[i].array() -= lr * (mm[i].array() / c1) / ((vv[i].array() / c2).sqrt() + eps);
  }
}

inline void standardize(const Eigen::MatrixXd & D, Eigen::VectorXd & mean, Eigen::VectorXd & sd)
{
  const auto n = static_cast<double>(D.rows());
  mean = D.colwise().mean().transpose();
  sd.resize(D.cols());
  for (Eigen::Index j = 0; j < D.cols(); ++j) {
    const double var = (D.col(j).array() - mean(j)).square().sum() / std::max(1.0, n);
    sd(j) = var > 1e-18 ? std::sqrt(var) : 1.0;
  }
}

}  // namespace detail

/// Mini-batch Adam on mean squared error; constraints re-imposed by
/// projection after every update.
inline IcnnModel train_icnn(const IcnnDataset & data, const IcnnArch & arch, const TrainConfig & cfg)
{
  cfg.validate();
  if (data.rows() == 0) throw Error(ErrorCode::NotEnoughData, "empty training set");
  if (static_cast<std::size_t>(data.Xc.cols()) != arch.n_cvx ||
      (arch.kind == IcnnKind::Picnn && static_cast<std::size_t>(data.Xn.cols()) != arch.n_ncvx))
    throw Error(ErrorCode::DimensionMismatch, "dataset does not match the architecture");

  IcnnModel m = init_icnn(arch, derive_seed(cfg.seed, 11));
  detail::standardize(data.Xc, m.x_mean, m.x_std);
  if (arch.kind == IcnnKind::Picnn) detail::standardize(data.Xn, m.v_mean, m.v_std);
  m.t_mean = data.t.mean();
  const double tvar = (data.t.array() - m.t_mean).square().mean();
  m.t_std = tvar > 1e-18 ? std::sqrt(tvar) : 1.0;
  project(m);

  const auto n = static_cast<Eigen::Index>(data.rows());
  const Eigen::MatrixXd Xs = ((data.Xc.rowwise() - m.x_mean.transpose()).array().rowwise() / m.x_std.transpose().array()).matrix().transpose();
  Eigen::MatrixXd Vs(static_cast<Eigen::Index>(arch.kind == IcnnKind::Picnn ? arch.n_ncvx : 0), n);
  if (arch.kind == IcnnKind::Picnn)
    Vs = ((data.Xn.rowwise() - m.v_mean.transpose()).array().rowwise() / m.v_std.transpose().array()).matrix().transpose();
  const Eigen::RowVectorXd Ts = ((data.t.array() - m.t_mean) / m.t_std).matrix().transpose();

  detail::AdamState st{detail::zero_like(m), detail::zero_like(m), 0};
  Rng rng(derive_seed(cfg.seed, 12));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto bs = std::min<Eigen::Index>(cfg.batch_size, n);

  double epoch_loss = 0.0;
  for (int e = 0; e < cfg.epochs; ++e) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    epoch_loss = 0.0;
    for (Eigen::Index s = 0; s < n; s += bs) {
      const Eigen::Index len = std::min(bs, n - s);
      Eigen::MatrixXd X(Xs.rows(), len), V(Vs.rows(), len);
      Eigen::RowVectorXd T(len);
      for (Eigen::Index j = 0; j < len; ++j) {
        const auto r = order[static_cast<std::size_t>(s + j)];
        X.col(j) = Xs.col(r);
        if (V.rows() > 0) V.col(j) = Vs.col(r);
        T(j) = Ts(r);
      }
      auto g = detail::zero_like(m);
      const double loss = detail::loss_and_grad(m, X, V, T, g);
      if (!std::isfinite(loss)) throw Error(ErrorCode::Diverged, "training loss is not finite");
      epoch_loss += loss * static_cast<double>(len);
      ++st.t;
      detail::adam_update(m.Wz, g.Wz, st.m.Wz, st.v.Wz, cfg.step_size, cfg.beta1, cfg.beta2, cfg.eps, st.t);
      detail::adam_update(m.Wx, g.Wx, st.m.Wx, st.v.Wx, cfg.step_size, cfg.beta1, cfg.beta2, cfg.eps, st.t);
      detail::adam_update(m.Wv, g.Wv, st.m.Wv, st.v.Wv, cfg.step_size, cfg.beta1, cfg.beta2, cfg.eps, st.t);
      detail::adam_update(m.b, g.b, st.m.b, st.v.b, cfg.step_size, cfg.beta1, cfg.beta2, cfg.eps, st.t);
      detail::adam_update(m.U, g.U, st.m.U, st.v.U, cfg.step_size, cfg.beta1, cfg.beta2, cfg.eps, st.t);
      detail::adam_update(m.c, g.c, st.m.c, st.v.c, cfg.step_size, cfg.beta1, cfg.beta2, cfg.eps, st.t);
      project(m);
    }
    epoch_loss /= static_cast<double>(n);
    m.epochs_run = e + 1;
  }
  // Final loss over the whole set in raw units.
  m.final_loss = (forward_std(m, Xs, Vs).array() - Ts.array()).square().mean() * m.t_std * m.t_std;
  if (!std::isfinite(m.final_loss)) throw Error(ErrorCode::Diverged, "training loss is not finite");
  (void)epoch_loss;
  return m;
}

// ---------------------------------------------------------------------------
// Thermal-model wrapper: convex inputs are [y_k, y_{k-1}, b_k, b_{k-1}];
// non-convex inputs are [T_amb_k, I_hor_k, I_vert_k, neighbour_0 - y_0,
// sin/cos time of day, season flag]. The output is y_{k+1} - y_k.

inline constexpr std::size_t kIcnnCvx = 4;
inline constexpr std::size_t kIcnnNcvx = 7;

struct IcnnThermalModel
{
  RegressorConfig config;  ///< channel roles; delta/tau unused
  IcnnModel net;
};

/// Architecture for the thermal wrapper: non-decreasing in both y lags, and
/// y_k + f(.) non-decreasing in y_k, so recursive predictions stay convex in
/// the inputs of earlier steps.
inline IcnnArch thermal_arch(IcnnKind kind, std::vector<int> hidden = {20, 20})
{
  IcnnArch a;
  a.kind = kind;
  a.n_cvx = kIcnnCvx;
  a.n_ncvx = kIcnnNcvx;
  a.hidden = std::move(hidden);
  a.monotone = {1, 1, 0, 0};
  a.out_slope_min = {-1.0, 0.0, kUnbounded, kUnbounded};
  return a;
}

struct IcnnSignals
{
  std::vector<double> y, b, neighbor, ambient, irradiance, vertical, mode;
  std::vector<double> tod_sin, tod_cos;

  [[nodiscard]] std::size_t length() const { return y.size(); }
};

inline IcnnSignals icnn_signals(const TimeSeries & ts, const RegressorConfig & c, bool need_output = true)
{
  auto need = [&](const std::string & name) {
    if (!ts.has(name)) throw Error(ErrorCode::MissingChannel, "missing channel '" + name + "'");
    const auto v = ts[name];
    return std::vector<double>(v.begin(), v.end());
  };
  const std::size_t n = ts.length();
  IcnnSignals s;
  s.y = need_output ? need(c.output) : std::vector<double>(n, std::numeric_limits<double>::quiet_NaN());
  s.b = need(c.valve);
  s.neighbor = c.has_neighbor() && ts.has(c.neighbor) ? need(c.neighbor) : std::vector<double>(n, 0.0);
  s.ambient = need(c.ambient);
  s.irradiance = need(c.irradiance);
  s.mode = ts.has("hc_mode") ? need("hc_mode") : std::vector<double>(n, c.mode == ThermalMode::Heating ? 1.0 : -1.0);
  for (std::size_t k = 0; k < n; ++k) {
    const Timestamp mid = ts.time_at(k) + ts.step() / 2;
    const auto geo = solar_position(mid, c.latitude, c.longitude);
    s.vertical.push_back(vertical_irradiance(s.irradiance[k], geo.beta));
    const double w = 2.0 * std::numbers::pi * hour_of_day(mid) / 24.0;
    s.tod_sin.push_back(std::sin(w));
    s.tod_cos.push_back(std::cos(w));
  }
  return s;
}

inline void icnn_inputs(const IcnnSignals & s, std::size_t k, double y_k, double y_km1, double nb_diff,
  std::span<double> xc, std::span<double> xn)
{
  xc[0] = y_k;
  xc[1] = y_km1;
  xc[2] = s.b[k];
  xc[3] = k > 0 ? s.b[k - 1] : s.b[k];
  xn[0] = s.ambient[k];
  xn[1] = s.irradiance[k];
  xn[2] = s.vertical[k];
  xn[3] = nb_diff;
  xn[4] = s.tod_sin[k];
  xn[5] = s.tod_cos[k];
  xn[6] = s.mode[k];
}

inline IcnnDataset icnn_dataset(std::span<const TimeSeries> segments, const RegressorConfig & c)
{
  std::vector<IcnnSignals> sig;
  std::size_t rows = 0;
  for (const auto & seg : segments) {
    if (seg.length() < 3) continue;
    sig.push_back(icnn_signals(seg, c));
    rows += seg.length() - 2;
  }
  IcnnDataset d;
  d.Xc.resize(static_cast<Eigen::Index>(rows), kIcnnCvx);
  d.Xn.resize(static_cast<Eigen::Index>(rows), kIcnnNcvx);
  d.t.resize(static_cast<Eigen::Index>(rows));
  double xc[kIcnnCvx], xn[kIcnnNcvx];
  Eigen::Index r = 0;
  for (const auto & s : sig) {
    for (std::size_t k = 1; k + 1 < s.length(); ++k, ++r) {
      icnn_inputs(s, k, s.y[k], s.y[k - 1], s.neighbor[k] - s.y[k], xc, xn);
      for (std::size_t j = 0; j < kIcnnCvx; ++j) d.Xc(r, static_cast<Eigen::Index>(j)) = xc[j];
      for (std::size_t j = 0; j < kIcnnNcvx; ++j) d.Xn(r, static_cast<Eigen::Index>(j)) = xn[j];
      d.t(r) = s.y[k + 1] - s.y[k];
    }
  }
  if (rows == 0) throw Error(ErrorCode::NotEnoughData, "no usable ICNN rows");
  return d;
}

inline IcnnThermalModel fit_icnn(std::span<const TimeSeries> segments, const RegressorConfig & c, IcnnKind kind,
  const TrainConfig & cfg, std::vector<int> hidden = {20, 20})
{
  IcnnThermalModel m;
  m.config = c;
  m.net = train_icnn(icnn_dataset(segments, c), thermal_arch(kind, std::move(hidden)), cfg);
  return m;
}

/// Recursive open-loop rollout from anchor `a`: predictions replace measured
/// outputs in the convex inputs; the neighbour difference stays at its
/// anchor value. Returns y[a+1..a+steps].
inline std::vector<double> predict_recursive(const IcnnThermalModel & m, const IcnnSignals & s, std::size_t a,
  std::size_t steps)
{
  if (a < 1) throw Error(ErrorCode::TooShort, "need two measured outputs");
  if (a + steps > s.length()) throw Error(ErrorCode::ForecastTooShort, "signals do not cover the prediction window");
  std::vector<double> out(steps);
  double y = s.y[a], y_prev = s.y[a - 1];
  const double nb = s.neighbor[a] - s.y[a];
  double xc[kIcnnCvx], xn[kIcnnNcvx];
  for (std::size_t j = 0; j < steps; ++j) {
    icnn_inputs(s, a + j, y, y_prev, nb, xc, xn);
    const double next = y + forward(m.net, xc, xn);
    y_prev = y;
    y = next;
    out[j] = y;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json mat_json(const Eigen::MatrixXd & M)
{
  std::vector<double> v(static_cast<std::size_t>(M.size()));
  Eigen::Map<Eigen::MatrixXd>(v.data(), M.rows(), M.cols()) = M;
  return {{"rows", M.rows()}, {"cols", M.cols()}, {"data", v}};
}

inline Eigen::MatrixXd json_mat(const nlohmann::json & j)
{
  const auto r = j.at("rows").get<Eigen::Index>(), c = j.at("cols").get<Eigen::Index>();
  const auto v = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != r * c) throw Error(ErrorCode::SchemaMismatch, "matrix size mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), r, c);
}

template <class T>
nlohmann::json list_json(const std::vector<T> & v)
{
  auto a = nlohmann::json::array();
  for (const auto & m : v) a.push_back(mat_json(m));
  return a;
}

}  // namespace detail

inline void to_json(nlohmann::json & j, const IcnnModel & m)
{
  std::vector<double> osm;
  for (double v : m.arch.out_slope_min) osm.push_back(v == kUnbounded ? -1e300 : v);
  std::vector<int> mono(m.arch.monotone.begin(), m.arch.monotone.end());
  auto vec = [](const Eigen::VectorXd & v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  j = nlohmann::json{{"kind", to_string(m.arch.kind)}, {"n_cvx", m.arch.n_cvx}, {"n_ncvx", m.arch.n_ncvx},
    {"hidden", m.arch.hidden}, {"relu_offset", m.arch.relu_offset}, {"monotone", mono}, {"out_slope_min", osm},
    {"Wz", detail::list_json(m.Wz)}, {"Wx", detail::list_json(m.Wx)}, {"Wv", detail::list_json(m.Wv)},
    {"b", detail::list_json(m.b)}, {"U", detail::list_json(m.U)}, {"c", detail::list_json(m.c)},
    {"x_mean", vec(m.x_mean)}, {"x_std", vec(m.x_std)}, {"v_mean", vec(m.v_mean)}, {"v_std", vec(m.v_std)},
    {"t_mean", m.t_mean}, {"t_std", m.t_std}, {"final_loss", std::isfinite(m.final_loss) ? m.final_loss : -1.0},
    {"epochs_run", m.epochs_run}};
}

inline void from_json(const nlohmann::json & j, IcnnModel & m)
{
  m.arch.kind = parse_icnn_kind(j.at("kind").get<std::string>());
  m.arch.n_cvx = j.at("n_cvx").get<std::size_t>();
  m.arch.n_ncvx = j.at("n_ncvx").get<std::size_t>();
  m.arch.hidden = j.at("hidden").get<std::vector<int>>();
  m.arch.relu_offset = j.value("relu_offset", 0.0);
  for (int v : j.at("monotone").get<std::vector<int>>()) m.arch.monotone.push_back(static_cast<char>(v));
  for (double v : j.at("out_slope_min").get<std::vector<double>>()) m.arch.out_slope_min.push_back(v <= -1e299 ? kUnbounded : v);
  auto mats = [&](const char * key) {
    std::vector<Eigen::MatrixXd> out;
    for (const auto & e : j.at(key)) out.push_back(detail::json_mat(e));
    return out;
  };
  auto vecs = [&](const char * key) {
    std::vector<Eigen::VectorXd> out;
    for (const auto & e : j.at(key)) out.emplace_back(detail::json_mat(e).col(0));
    return out;
  };
  auto vec = [&](const char * key) {
    const auto v = j.at(key).get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  m.Wz = mats("Wz");
  m.Wx = mats("Wx");
  m.Wv = mats("Wv");
  m.b = vecs("b");
  m.U = mats("U");
  m.c = vecs("c");
  m.x_mean = vec("x_mean");
  m.x_std = vec("x_std");
  m.v_mean = vec("v_mean");
  m.v_std = vec("v_std");
  m.t_mean = j.at("t_mean").get<double>();
  m.t_std = j.at("t_std").get<double>();
  m.final_loss = j.value("final_loss", -1.0);
  m.epochs_run = j.value("epochs_run", 0);
  if (m.Wx.size() != m.arch.layers() + 1) throw Error(ErrorCode::SchemaMismatch, "layer count mismatch");
}

inline void to_json(nlohmann::json & j, const IcnnThermalModel & m)
{
  j = nlohmann::json{{"kind", to_string(m.net.arch.kind)}, {"config", m.config}, {"net", m.net}};
}

inline void from_json(const nlohmann::json & j, IcnnThermalModel & m)
{
  m.config = j.at("config").get<RegressorConfig>();
  m.net = j.at("net").get<IcnnModel>();
}

}  // namespace bmpc
