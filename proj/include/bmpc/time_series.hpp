#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bmpc/errors.hpp"

namespace bmpc {

using Timestamp = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

enum class Unit {
  Celsius,      ///< "degC", interval mean on resampling
  Watt,         ///< "W", interval mean
  Irradiance,   ///< "W/m2", interval mean, >= 0
  Fraction,     ///< "1", duty in [0,1], interval mean
  Energy,       ///< "Wh", interval sum
  Seconds,      ///< "s", interval sum
  Dimensionless,  ///< "-", interval mean, unconstrained
};

inline std::string_view unit_symbol(Unit u)
{
  switch (u) {
    case Unit::Celsius: return "degC";
    case Unit::Watt: return "W";
    case Unit::Irradiance: return "W/m2";
    case Unit::Fraction: return "1";
    case Unit::Energy: return "Wh";
    case Unit::Seconds: return "s";
    case Unit::Dimensionless: return "-";
  }
  return "?";
}

inline Unit parse_unit(std::string_view s)
{
  if (s == "degC") return Unit::Celsius;
  if (s == "W") return Unit::Watt;
  if (s == "W/m2") return Unit::Irradiance;
  if (s == "1") return Unit::Fraction;
  if (s == "Wh") return Unit::Energy;
  if (s == "s") return Unit::Seconds;
  if (s == "-") return Unit::Dimensionless;
  throw Error(ErrorCode::SchemaMismatch, "unknown unit '" + std::string(s) + "'");
}

/// Unit convention for the channel names this project writes: T_* are
/// temperatures, b_* valves, Q_* energies, I_* irradiance, hc_mode the
/// heating (+1) / cooling (-1) season flag.
inline Unit infer_unit(std::string_view name)
{
  if (name == "hc_mode") return Unit::Dimensionless;
  if (name.starts_with("T")) return Unit::Celsius;
  if (name.starts_with("b_")) return Unit::Fraction;
  if (name.starts_with("Q")) return Unit::Energy;
  if (name.starts_with("I")) return Unit::Irradiance;
  if (name.starts_with("P")) return Unit::Watt;
  if (name.ends_with("_s")) return Unit::Seconds;
  return Unit::Watt;
}

// ---------------------------------------------------------------------------
// Calendar helpers (UTC only).

inline Timestamp make_time(int y, unsigned m, unsigned d, int hh = 0, int mm = 0, int ss = 0)
{
  using namespace std::chrono;
  return sys_days{year{y} / month{m} / day{d}} + hours{hh} + minutes{mm} + seconds{ss};
}

inline double seconds_of_day(Timestamp t)
{
  using namespace std::chrono;
  const auto day_start = floor<days>(t);
  return static_cast<double>((t - day_start).count());
}

inline double hour_of_day(Timestamp t) { return seconds_of_day(t) / 3600.0; }

/// 1-based day of year.
inline int day_of_year(Timestamp t)
{
  using namespace std::chrono;
  const auto d = floor<days>(t);
  const year_month_day ymd{d};
  const sys_days jan1 = ymd.year() / January / 1;
  return static_cast<int>((d - jan1).count()) + 1;
}

inline int days_in_year(Timestamp t)
{
  using namespace std::chrono;
  return year_month_day{floor<days>(t)}.year().is_leap() ? 366 : 365;
}

inline std::string format_rfc3339(Timestamp t)
{
  using namespace std::chrono;
  const auto d = floor<days>(t);
  const year_month_day ymd{d};
  const hh_mm_ss hms{t - d};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
    static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
    static_cast<int>(hms.seconds().count()));
  return buf;
}

/// Accepts "YYYY-MM-DDTHH:MM:SSZ" and "+00:00" offsets; other offsets are rejected.
inline Timestamp parse_rfc3339(std::string_view s)
{
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  char tz[8] = {0};
  const std::string str(s);
  const int n = std::sscanf(str.c_str(), "%4d-%2d-%2d%*1[Tt ]%2d:%2d:%2d%7s", &y, &mo, &d, &h, &mi, &se, tz);
  if (n < 6) throw Error(ErrorCode::SchemaMismatch, "bad timestamp '" + str + "'");
  const std::string_view z(tz);
  if (!(z.empty() || z == "Z" || z == "z" || z == "+00:00"))
    throw Error(ErrorCode::SchemaMismatch, "non-UTC timestamp '" + str + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 60)
    throw Error(ErrorCode::SchemaMismatch, "bad timestamp '" + str + "'");
  return make_time(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h, mi, se);
}

// ---------------------------------------------------------------------------

struct Channel
{
  std::string name;
  Unit unit = Unit::Celsius;
  std::vector<double> values;
};

/// Uniformly sampled multi-channel record. Immutable once constructed; all
/// invariants are checked by the constructor.
class TimeSeries
{
public:
  TimeSeries() = default;

  TimeSeries(Timestamp start, Seconds step, std::vector<Channel> channels)
      : start_(start), step_(step), channels_(std::move(channels))
  {
    if (step_.count() <= 0) throw Error(ErrorCode::SchemaMismatch, "step must be positive");
    length_ = channels_.empty() ? 0 : channels_.front().values.size();
    for (const auto & c : channels_) {
      if (c.values.size() != length_)
        throw Error(ErrorCode::SchemaMismatch, "channel '" + c.name + "' has a different length");
      for (double v : c.values) {
        if (!std::isfinite(v)) throw Error(ErrorCode::ValueOutOfRange, "non-finite value in '" + c.name + "'");
        if (c.unit == Unit::Fraction && (v < 0.0 || v > 1.0))
          throw Error(ErrorCode::ValueOutOfRange, "valve channel '" + c.name + "' outside [0,1]");
        if (c.unit == Unit::Irradiance && v < 0.0)
          throw Error(ErrorCode::ValueOutOfRange, "irradiance channel '" + c.name + "' negative");
      }
    }
    for (std::size_t i = 0; i < channels_.size(); ++i)
      for (std::size_t j = i + 1; j < channels_.size(); ++j)
        if (channels_[i].name == channels_[j].name)
          throw Error(ErrorCode::SchemaMismatch, "duplicate channel '" + channels_[i].name + "'");
  }

  [[nodiscard]] Timestamp start() const noexcept { return start_; }
  [[nodiscard]] Seconds step() const noexcept { return step_; }
  [[nodiscard]] std::size_t length() const noexcept { return length_; }
  [[nodiscard]] Timestamp time_at(std::size_t k) const noexcept
  {
    return start_ + step_ * static_cast<std::int64_t>(k);
  }
  [[nodiscard]] Timestamp end() const noexcept { return time_at(length_); }
  [[nodiscard]] const std::vector<Channel> & channels() const noexcept { return channels_; }

  [[nodiscard]] bool has(std::string_view name) const noexcept
  {
    return std::any_of(channels_.begin(), channels_.end(), [&](const Channel & c) { return c.name == name; });
  }

  [[nodiscard]] const Channel & channel_info(std::string_view name) const
  {
    for (const auto & c : channels_)
      if (c.name == name) return c;
    throw Error(ErrorCode::MissingChannel, "no channel '" + std::string(name) + "'");
  }

  [[nodiscard]] std::span<const double> operator[](std::string_view name) const
  {
    return channel_info(name).values;
  }

  /// Samples [begin, end).
  [[nodiscard]] TimeSeries slice(std::size_t begin, std::size_t end) const
  {
    end = std::min(end, length_);
    begin = std::min(begin, end);
    std::vector<Channel> out;
    out.reserve(channels_.size());
    for (const auto & c : channels_)
      out.push_back({c.name, c.unit,
        std::vector<double>(c.values.begin() + static_cast<std::ptrdiff_t>(begin),
          c.values.begin() + static_cast<std::ptrdiff_t>(end))});
    return TimeSeries(time_at(begin), step_, std::move(out));
  }

  /// Copy with an extra (or replaced) channel.
  [[nodiscard]] TimeSeries with_channel(Channel c) const
  {
    std::vector<Channel> out = channels_;
    auto it = std::find_if(out.begin(), out.end(), [&](const Channel & x) { return x.name == c.name; });
    if (it != out.end())
      *it = std::move(c);
    else
      out.push_back(std::move(c));
    return TimeSeries(start_, step_, std::move(out));
  }

  friend bool operator==(const TimeSeries & a, const TimeSeries & b)
  {
    if (a.start_ != b.start_ || a.step_ != b.step_ || a.channels_.size() != b.channels_.size()) return false;
    for (std::size_t i = 0; i < a.channels_.size(); ++i) {
      const auto & x = a.channels_[i];
      const auto & y = b.channels_[i];
      if (x.name != y.name || x.unit != y.unit || x.values != y.values) return false;
    }
    return true;
  }

private:
  Timestamp start_{};
  Seconds step_{60};
  std::vector<Channel> channels_;
  std::size_t length_ = 0;
};

using Schema = std::map<std::string, Unit, std::less<>>;

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v)
{
  char buf[40];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Missing values (empty fields, "nan", or absent rows) are interpolated
/// linearly when a run is at most this long.
inline constexpr std::size_t kMaxInterpolatedGap = 3;

inline TimeSeries parse_csv(std::istream & in, const Schema & schema)
{
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::SchemaMismatch, "empty CSV");
  const auto header = detail::split_fields(detail::trim(line));
  if (header.empty() || detail::trim(header[0]) != "timestamp")
    throw Error(ErrorCode::SchemaMismatch, "first column must be 'timestamp'");
  std::vector<std::string> names;
  for (std::size_t i = 1; i < header.size(); ++i) names.emplace_back(detail::trim(header[i]));
  if (names.size() != schema.size())
    throw Error(ErrorCode::SchemaMismatch, "header has " + std::to_string(names.size()) + " channels, schema has " +
      std::to_string(schema.size()));
  for (const auto & n : names)
    if (!schema.contains(n)) throw Error(ErrorCode::SchemaMismatch, "unexpected column '" + n + "'");

  std::vector<std::int64_t> times;
  std::vector<std::vector<double>> cols(names.size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto f = detail::split_fields(t);
    if (f.size() != names.size() + 1)
      throw Error(ErrorCode::SchemaMismatch, "line " + std::to_string(lineno) + ": wrong field count");
    const auto ts = parse_rfc3339(detail::trim(f[0])).time_since_epoch().count();
    if (!times.empty() && ts <= times.back())
      throw Error(ErrorCode::NonMonotonicTime, "line " + std::to_string(lineno));
    times.push_back(ts);
    for (std::size_t c = 0; c < names.size(); ++c) {
      const auto s = detail::trim(f[c + 1]);
      double v = std::numeric_limits<double>::quiet_NaN();
      if (!s.empty() && s != "nan" && s != "NaN") {
        auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size())
          throw Error(ErrorCode::SchemaMismatch, "line " + std::to_string(lineno) + ": bad number '" + std::string(s) + "'");
      }
      cols[c].push_back(v);
    }
  }
  if (times.empty()) throw Error(ErrorCode::SchemaMismatch, "CSV has no rows");

  // The step is the smallest spacing; larger spacings are missing rows.
  std::int64_t step = 0;
  for (std::size_t i = 1; i < times.size(); ++i) {
    const auto d = times[i] - times[i - 1];
    step = step == 0 ? d : std::min(step, d);
  }
  if (step == 0) step = 60;
  const std::size_t length = static_cast<std::size_t>((times.back() - times.front()) / step) + 1;
  std::vector<Channel> channels;
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::vector<double> v(length, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < times.size(); ++i) {
      const auto off = times[i] - times.front();
      if (off % step != 0) throw Error(ErrorCode::NonMonotonicTime, "irregular sampling");
      v[static_cast<std::size_t>(off / step)] = cols[c][i];
    }
    // Fill interior runs of at most kMaxInterpolatedGap samples.
    std::size_t i = 0;
    while (i < length) {
      if (!std::isnan(v[i])) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < length && std::isnan(v[j])) ++j;
      if (j - i > kMaxInterpolatedGap || i == 0 || j == length)
        throw Error(ErrorCode::GapTooLarge, "channel '" + names[c] + "' has a gap of " + std::to_string(j - i) +
          " samples at index " + std::to_string(i));
      const double a = v[i - 1], b = v[j];
      for (std::size_t k = i; k < j; ++k)
        v[k] = a + (b - a) * static_cast<double>(k - i + 1) / static_cast<double>(j - i + 1);
      i = j;
    }
    channels.push_back({names[c], schema.find(names[c])->second, std::move(v)});
  }
  return TimeSeries(Timestamp{Seconds{times.front()}}, Seconds{step}, std::move(channels));
}

inline TimeSeries load_csv(const std::string & path, const Schema & schema)
{
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  return parse_csv(in, schema);
}

/// Loads with units inferred from channel names (see infer_unit).
inline TimeSeries load_csv(const std::string & path)
{
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::string header;
  std::getline(in, header);
  Schema schema;
  const auto f = detail::split_fields(detail::trim(header));
  for (std::size_t i = 1; i < f.size(); ++i) {
    const std::string n(detail::trim(f[i]));
    schema.emplace(n, infer_unit(n));
  }
  in.clear();
  in.seekg(0);
  return parse_csv(in, schema);
}

inline void write_csv(std::ostream & out, const TimeSeries & ts)
{
  out << "timestamp";
  for (const auto & c : ts.channels()) out << ',' << c.name;
  out << '\n';
  std::string row;
  for (std::size_t k = 0; k < ts.length(); ++k) {
    row = format_rfc3339(ts.time_at(k));
    for (const auto & c : ts.channels()) {
      row += ',';
      row += format_double(c.values[k]);
    }
    row += '\n';
    out << row;
  }
}

inline void save_csv(const std::string & path, const TimeSeries & ts)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  write_csv(out, ts);
}

inline Schema schema_of(const TimeSeries & ts)
{
  Schema s;
  for (const auto & c : ts.channels()) s.emplace(c.name, c.unit);
  return s;
}

// ---------------------------------------------------------------------------

/// Aggregates to a coarser step: means for intensive channels, sums for
/// energies. A trailing partial interval is dropped.
inline TimeSeries resample(const TimeSeries & ts, Seconds new_step)
{
  if (new_step.count() <= 0 || new_step.count() % ts.step().count() != 0)
    throw Error(ErrorCode::NonIntegerRatio,
      std::to_string(new_step.count()) + " s is not a multiple of " + std::to_string(ts.step().count()) + " s");
  const auto ratio = static_cast<std::size_t>(new_step.count() / ts.step().count());
  const std::size_t n = ts.length() / ratio;
  std::vector<Channel> out;
  for (const auto & c : ts.channels()) {
    const bool sum = c.unit == Unit::Energy || c.unit == Unit::Seconds;
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < ratio; ++j) acc += c.values[k * ratio + j];
      v[k] = sum ? acc : acc / static_cast<double>(ratio);
      if (c.unit == Unit::Fraction) v[k] = std::clamp(v[k], 0.0, 1.0);
    }
    out.push_back({c.name, c.unit, std::move(v)});
  }
  return TimeSeries(ts.start(), new_step, std::move(out));
}

// ---------------------------------------------------------------------------

struct FoldSplit
{
  Seconds fold_length{7 * 24 * 3600};
  std::vector<std::size_t> train_fold_indices;
  std::vector<std::size_t> validation_fold_indices;
  std::uint64_t seed = 0;

  friend bool operator==(const FoldSplit &, const FoldSplit &) = default;
};

inline std::size_t fold_count(const TimeSeries & ts, Seconds fold_length = Seconds{7 * 24 * 3600})
{
  return static_cast<std::size_t>((ts.step() * static_cast<std::int64_t>(ts.length())) / fold_length);
}

inline FoldSplit split_folds(const TimeSeries & ts, std::size_t n_train_folds, std::uint64_t seed,
  Seconds fold_length = Seconds{7 * 24 * 3600})
{
  const std::size_t folds = fold_count(ts, fold_length);
  if (n_train_folds == 0 || folds < n_train_folds + 1)
    throw Error(ErrorCode::NotEnoughData, std::to_string(folds) + " whole folds, need " + std::to_string(n_train_folds + 1));
  std::vector<std::size_t> idx(folds);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with explicit draws so the permutation does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = folds - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(idx[i], idx[j]);
  }
  FoldSplit s;
  s.fold_length = fold_length;
  s.seed = seed;
  s.train_fold_indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train_folds));
  s.validation_fold_indices.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train_folds), idx.end());
  std::sort(s.train_fold_indices.begin(), s.train_fold_indices.end());
  std::sort(s.validation_fold_indices.begin(), s.validation_fold_indices.end());
  return s;
}

/// Contiguous sample range of one fold.
inline TimeSeries fold_slice(const TimeSeries & ts, std::size_t fold, Seconds fold_length = Seconds{7 * 24 * 3600})
{
  const auto per = static_cast<std::size_t>(fold_length / ts.step());
  return ts.slice(fold * per, (fold + 1) * per);
}

inline std::vector<TimeSeries> fold_slices(const TimeSeries & ts, std::span<const std::size_t> folds,
  Seconds fold_length = Seconds{7 * 24 * 3600})
{
  std::vector<TimeSeries> out;
  out.reserve(folds.size());
  for (auto f : folds) out.push_back(fold_slice(ts, f, fold_length));
  return out;
}

}  // namespace bmpc
