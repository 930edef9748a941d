#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bmpc/errors.hpp"
#include "bmpc/mpc.hpp"

namespace bmpc {

/// A trained controller model: one entry per zone, all of one family.
struct ModelFile
{
  std::string kind;  ///< armax, rf, picnn or ficnn
  Seconds step{1800};
  std::vector<ZoneModel> zones;
};

inline nlohmann::json read_json_file(const std::filesystem::path & p)
{
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception & e) {
    throw Error(ErrorCode::SchemaMismatch, p.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path & p, const std::string & text)
{
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  out << text;
}

inline PlantParams load_plant(const std::string & path)
{
  if (path.empty()) return default_plant();
  const auto j = read_json_file(path);
  try {
    auto p = j.get<PlantParams>();
    p.validate();
    return p;
  } catch (const nlohmann::json::exception & e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
}

inline MpcConfig load_mpc_config(const std::string & path)
{
  if (path.empty()) return {};
  const auto j = read_json_file(path);
  try {
    return j.get<MpcConfig>();
  } catch (const nlohmann::json::exception & e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
}

inline Scenario load_scenario(const std::string & path)
{
  try {
    return read_json_file(path).get<Scenario>();
  } catch (const nlohmann::json::exception & e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
}

/// Channel roles of zone i (0-based) in the plant's logging convention.
inline RegressorConfig zone_config(std::size_t i, std::size_t zones, ThermalMode mode, const PlantParams & p)
{
  RegressorConfig c;
  const auto id = [](std::size_t k) { return std::to_string(k + 1); };
  c.output = "T_" + id(i);
  c.neighbor = zones > 1 ? "T_" + id((i + 1) % zones) : "";
  c.valve = "b_" + id(i);
  c.energy = "Q_" + id(i);
  c.mode = mode;
  c.latitude = p.latitude;
  c.longitude = p.longitude;
  return c;
}

/// A CSV at the model step; minute logs are resampled.
inline TimeSeries load_model_view(const std::string & path, Seconds step)
{
  const auto raw = load_csv(path);
  if (raw.step() == step) return raw;
  if (step.count() % raw.step().count() != 0)
    throw Error(ErrorCode::NonIntegerRatio, path + ": model step is not a multiple of the data step");
  return model_samples(raw, step);
}

/// JSON for every family; forests go to binary sidecars next to `path`
/// named <stem>.zone<i>.rfbin.
inline void save_model_file(const std::filesystem::path & path, const ModelFile & m)
{
  nlohmann::json zones = nlohmann::json::array();
  for (std::size_t i = 0; i < m.zones.size(); ++i) {
    const auto & z = m.zones[i];
    if (const auto * a = std::get_if<ArmaxModel>(&z)) zones.push_back(*a);
    else if (const auto * r = std::get_if<RfModel>(&z)) {
      const std::string side = path.stem().string() + ".zone" + std::to_string(i + 1) + ".rfbin";
      std::ofstream o(path.parent_path() / side, std::ios::binary);
      if (!o) throw Error(ErrorCode::IoError, "cannot write sidecar " + side);
      write_forest_binary(o, *r);
      zones.push_back(forest_manifest(*r, side));
    } else zones.push_back(std::get<IcnnThermalModel>(z));
  }
  const nlohmann::json j{{"format", "bmpc-model-1"}, {"kind", m.kind}, {"step_s", m.step.count()}, {"zones", zones}};
  write_text_file(path, j.dump(1) + "\n");
}

inline ModelFile load_model_file(const std::filesystem::path & path)
{
  const auto j = read_json_file(path);
  ModelFile m;
  try {
    if (j.value("format", "") != "bmpc-model-1") throw Error(ErrorCode::SchemaMismatch, path.string() + ": not a model file");
    m.kind = j.at("kind").get<std::string>();
    m.step = Seconds{j.at("step_s").get<std::int64_t>()};
    for (const auto & z : j.at("zones")) {
      if (m.kind == "armax") m.zones.emplace_back(z.get<ArmaxModel>());
      else if (m.kind == "rf") {
        RfModel r;
        r.config = z.at("config").get<RegressorConfig>();
        r.hyper.n_trees = z.at("n_trees").get<int>();
        r.hyper.min_samples_leaf = z.at("min_samples_leaf").get<int>();
        r.hyper.seed = z.at("seed").get<std::uint64_t>();
        const auto side = path.parent_path() / z.at("sidecar").get<std::string>();
        std::ifstream in(side, std::ios::binary);
        if (!in) throw Error(ErrorCode::IoError, "cannot open sidecar " + side.string());
        read_forest_binary(in, r);
        m.zones.emplace_back(std::move(r));
      } else if (m.kind == "picnn" || m.kind == "ficnn") m.zones.emplace_back(z.get<IcnnThermalModel>());
      else throw Error(ErrorCode::SchemaMismatch, path.string() + ": unknown model kind '" + m.kind + "'");
    }
  } catch (const nlohmann::json::exception & e) {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": " + e.what());
  }
  if (m.zones.empty()) throw Error(ErrorCode::SchemaMismatch, path.string() + ": no zone models");
  return m;
}

}  // namespace bmpc
