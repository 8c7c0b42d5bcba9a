#pragma once

#include <optional>
#include <string_view>

namespace kda {

enum class Precision { F64, F32 };

std::string_view to_string(Precision p);
std::optional<Precision> parse_precision(std::string_view name);

// Reads KDA_LAB_PRECISION ("f32" or "f64"); nullopt when unset or empty.
// Throws ContractError on any other value.
std::optional<Precision> precision_from_env();

}  // namespace kda
