#include "kda/precision.hpp"

#include <cstdlib>
#include <string>

#include "kda/errors.hpp"

namespace kda {

std::string_view to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

std::optional<Precision> parse_precision(std::string_view name) {
  if (name == "f64") return Precision::F64;
  if (name == "f32") return Precision::F32;
  return std::nullopt;
}

std::optional<Precision> precision_from_env() {
  const char* v = std::getenv("KDA_LAB_PRECISION");
  if (!v || !*v) return std::nullopt;
  if (auto p = parse_precision(v)) return p;
  throw ContractError("KDA_LAB_PRECISION must be f32 or f64, got " + std::string(v));
}

}  // namespace kda
