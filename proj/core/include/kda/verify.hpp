#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "kda/precision.hpp"

namespace kda {

struct CaseResult {
  std::string id;
  double error = 0;  // absolute, or relative for f32 equivalence
  double tolerance = 0;
  bool pass() const { return error < tolerance; }
};

struct SuiteReport {
  std::string suite;
  std::vector<CaseResult> cases;

  bool passed() const;
  double max_error() const;
  std::string to_json() const;
};

struct SuiteOptions {
  std::size_t seeds = 20;
  std::uint64_t first_seed = 0;
  // Empty means the suite's default grid.
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> chunk_sizes;
  std::vector<std::size_t> dims;
  Precision precision = Precision::F64;
};

inline constexpr std::string_view kSuites[] = {"equivalence", "wy", "ut", "dplr", "parallel", "positional"};

bool is_suite(std::string_view name);

// Chunkwise vs recurrent KDA over the grid, one instance per seed.
SuiteReport verify_equivalence(const SuiteOptions& opt);
// WY propositions at every r of a C-token chunk (C <= 16).
SuiteReport verify_wy(const SuiteOptions& opt);
SuiteReport verify_ut(const SuiteOptions& opt);
// DPLR chunkwise vs DPLR recurrent, the KDA substitution, and the census.
SuiteReport verify_dplr(const SuiteOptions& opt);
// Recurrent, chunkwise and parallel forms for T <= 64.
SuiteReport verify_parallel(const SuiteOptions& opt);
SuiteReport verify_positional(const SuiteOptions& opt);

// Dispatch by name; "all" is not accepted here.
SuiteReport run_suite(std::string_view name, const SuiteOptions& opt);

}  // namespace kda
