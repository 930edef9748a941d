#pragma once

#include <string>
#include <string_view>

#include "bmpc/errors.hpp"

namespace bmpc {

enum class ThermalMode { Heating, Cooling };

inline std::string_view to_string(ThermalMode m) { return m == ThermalMode::Heating ? "heating" : "cooling"; }

inline ThermalMode parse_mode(std::string_view s)
{
  if (s == "heating") return ThermalMode::Heating;
  if (s == "cooling") return ThermalMode::Cooling;
  throw Error(ErrorCode::ConfigError, "mode must be 'heating' or 'cooling', got '" + std::string(s) + "'");
}

}  // namespace bmpc
