#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kda/precision.hpp"

namespace kda {

// Per-head FLOPs of chunkwise KDA: 6·T·d_h² + 3·T·C·d_h + T·C². C == 0 drops
// the chunk terms. Throws std::overflow_error if the result exceeds 64 bits.
std::uint64_t flops_kda(std::uint64_t T, std::uint64_t C, std::uint64_t d_h);

// Dominant per-head FLOPs of full attention: 2·T²·d_h.
std::uint64_t flops_attn(std::uint64_t T, std::uint64_t d_h);

// Smallest T with flops_attn(T) > flops_kda(T, C, d_h), i.e.
// floor((6d_h² + 3Cd_h + C²) / (2d_h)) + 1.
std::uint64_t crossover_length(std::uint64_t C, std::uint64_t d_h);

// Reduced non-negative fraction.
struct Fraction {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  static Fraction make(std::uint64_t num, std::uint64_t den);
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Fraction&) const = default;
};

std::string to_string(const Fraction& f);

struct CostScenario {
  std::uint64_t T = 0;
  std::uint64_t C = 64;
  std::uint64_t d_h = 128;
  std::uint64_t n_layers = 0;
  std::uint64_t linear_layers = 3;  // a in the a:b hybrid ratio
  std::uint64_t full_layers = 1;    // b
  std::uint64_t full_cache_bytes_per_token = 0;  // per full-attention layer
  std::uint64_t linear_state_bytes = 0;          // per linear layer, independent of T

  // Throws ContractError unless a + b > 0 and n_layers is a multiple of a + b.
  void check() const;
};

// Full-attention KV cache under the hybrid over the all-full baseline as
// T → ∞: b / (a + b).
Fraction kv_cache_ratio(std::uint64_t linear_layers, std::uint64_t full_layers);
Fraction kv_cache_ratio(const CostScenario& s);

struct CacheBytes {
  std::uint64_t hybrid = 0;
  std::uint64_t full = 0;  // all layers full attention
};

// Cache bytes at the scenario's T, counting the fixed linear states.
CacheBytes cache_bytes(const CostScenario& s);

// Memory-bound decode estimate: time per output token is cache bytes read
// divided by a caller-supplied bandwidth. No hardware constants are built in.
struct DecodeProjection {
  CacheBytes bytes;
  double hybrid_seconds = 0;
  double full_seconds = 0;
  double speedup = 0;  // full / hybrid
};

DecodeProjection project_decode(const CostScenario& s, double bandwidth_bytes_per_second);

// ---------------------------------------------------------------------------
// Wall-clock kernel benchmarks (float, unchecked).

enum class BenchVariant { KDA, DPLR, Recurrent };

std::string_view to_string(BenchVariant v);
std::optional<BenchVariant> parse_bench_variant(std::string_view name);

struct BenchCase {
  BenchVariant variant = BenchVariant::KDA;
  std::size_t T = 1024;
  std::size_t C = 64;
  std::size_t d_h = 64;  // key dimension
  std::size_t d_v = 64;
};

struct BenchRow {
  BenchCase spec;
  std::size_t repeats = 0;
  double mean_ns = 0;
  double p50_ns = 0;
  std::uint64_t matmul_count = 0;  // per forward call
  std::uint64_t score_matrices_per_chunk = 0;
};

// Runs every case `repeats` times on a seeded instance. Throws ContractError if repeats == 0.
std::vector<BenchRow> bench_kernels(const std::vector<BenchCase>& grid, std::size_t repeats, std::uint64_t seed = 0,
                                    Precision precision = Precision::F32);

}  // namespace kda
