#include "kda/cost.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "kda/census.hpp"
#include "kda/dplr.hpp"

namespace kda {

namespace {

__extension__ using u128 = unsigned __int128;

std::uint64_t narrow(u128 x, const char* what) {
  if (x > std::numeric_limits<std::uint64_t>::max()) throw std::overflow_error(std::string(what) + " overflows 64 bits");
  return static_cast<std::uint64_t>(x);
}

}  // namespace

std::uint64_t flops_kda(std::uint64_t T, std::uint64_t C, std::uint64_t d_h) {
  const u128 t = T, c = C, d = d_h;
  return narrow(6 * t * d * d + 3 * t * c * d + t * c * c, "flops_kda");
}

std::uint64_t flops_attn(std::uint64_t T, std::uint64_t d_h) {
  const u128 t = T, d = d_h;
  return narrow(2 * t * t * d, "flops_attn");
}

std::uint64_t crossover_length(std::uint64_t C, std::uint64_t d_h) {
  if (d_h == 0) throw ContractError("head dimension must be positive");
  const u128 c = C, d = d_h;
  const u128 k = 6 * d * d + 3 * c * d + c * c;
  return narrow(k / (2 * d) + 1, "crossover_length");
}

Fraction Fraction::make(std::uint64_t num, std::uint64_t den) {
  if (den == 0) throw ContractError("fraction denominator is zero");
  const std::uint64_t g = std::gcd(num, den);
  return g ? Fraction{num / g, den / g} : Fraction{0, 1};
}

std::string to_string(const Fraction& f) { return std::to_string(f.num) + "/" + std::to_string(f.den); }

void CostScenario::check() const {
  const std::uint64_t group = linear_layers + full_layers;
  if (group == 0) throw ContractError("hybrid ratio needs at least one layer");
  if (n_layers % group != 0) throw ContractError("layer count must be a multiple of a + b");
}

Fraction kv_cache_ratio(std::uint64_t linear_layers, std::uint64_t full_layers) {
  if (linear_layers + full_layers == 0) throw ContractError("hybrid ratio needs at least one layer");
  return Fraction::make(full_layers, linear_layers + full_layers);
}

Fraction kv_cache_ratio(const CostScenario& s) {
  s.check();
  return kv_cache_ratio(s.linear_layers, s.full_layers);
}

CacheBytes cache_bytes(const CostScenario& s) {
  s.check();
  const u128 groups = s.n_layers / (s.linear_layers + s.full_layers);
  const u128 full = groups * s.full_layers, linear = groups * s.linear_layers;
  const u128 per_layer = static_cast<u128>(s.T) * s.full_cache_bytes_per_token;
  return {narrow(full * per_layer + linear * s.linear_state_bytes, "cache bytes"),
          narrow(static_cast<u128>(s.n_layers) * per_layer, "cache bytes")};
}

DecodeProjection project_decode(const CostScenario& s, double bandwidth_bytes_per_second) {
  if (!(bandwidth_bytes_per_second > 0)) throw ContractError("bandwidth must be positive");
  DecodeProjection p;
  p.bytes = cache_bytes(s);
  p.hybrid_seconds = static_cast<double>(p.bytes.hybrid) / bandwidth_bytes_per_second;
  p.full_seconds = static_cast<double>(p.bytes.full) / bandwidth_bytes_per_second;
  p.speedup = p.hybrid_seconds > 0 ? p.full_seconds / p.hybrid_seconds : 0.0;
  return p;
}

std::string_view to_string(BenchVariant v) {
  switch (v) {
    case BenchVariant::KDA:
      return "kda";
    case BenchVariant::DPLR:
      return "dplr";
    case BenchVariant::Recurrent:
      return "recurrent";
  }
  return "unknown";
}

std::optional<BenchVariant> parse_bench_variant(std::string_view name) {
  for (auto v : {BenchVariant::KDA, BenchVariant::DPLR, BenchVariant::Recurrent})
    if (to_string(v) == name) return v;
  return std::nullopt;
}

namespace {

template <typename T>
BenchRow bench_case(const BenchCase& spec, std::size_t repeats, std::uint64_t seed) {
  InstanceSpec is;
  is.length = spec.T;
  is.key_dim = spec.d_h;
  is.value_dim = spec.d_v;
  const Instance inst = make_instance(is, seed);
  const BasicAttnSequence<T> seq{cast<T>(inst.seq.q), cast<T>(inst.seq.k), cast<T>(inst.seq.v)};
  const BasicGateSequence<T> gates{cast<T>(inst.gates.log_alpha),
                                   std::vector<T>(inst.gates.beta.begin(), inst.gates.beta.end())};
  const DplrInstance dplr64 = dplr_from_kda(inst.seq, inst.gates);
  const BasicAttnSequence<T> dseq{cast<T>(dplr64.seq.q), cast<T>(dplr64.seq.k), cast<T>(dplr64.seq.v)};
  const BasicDplrGateSequence<T> dgates{cast<T>(dplr64.gates.log_alpha), cast<T>(dplr64.gates.a),
                                        cast<T>(dplr64.gates.b)};
  const ChunkPlan plan = ChunkPlan::for_length(spec.T, spec.C);

  auto run_once = [&] {
    switch (spec.variant) {
      case BenchVariant::KDA:
        chunk_forward(seq, gates, BasicMatrix<T>{}, plan);
        break;
      case BenchVariant::DPLR:
        dplr_chunk_forward(dseq, dgates, BasicMatrix<T>{}, plan);
        break;
      case BenchVariant::Recurrent:
        recurrent_forward(VariantKind::KDA, seq, gates);
        break;
    }
  };

  BenchRow row;
  row.spec = spec;
  row.repeats = repeats;
  std::vector<double> times;
  times.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    census::Scope scope;
    const auto t0 = std::chrono::steady_clock::now();
    run_once();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
    const auto counts = scope.elapsed();
    row.matmul_count = counts.matmuls;
    row.score_matrices_per_chunk =
        spec.variant == BenchVariant::Recurrent || plan.num_chunks == 0 ? 0 : counts.score_matrices / plan.num_chunks;
  }
  row.mean_ns = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(repeats);
  std::sort(times.begin(), times.end());
  row.p50_ns = repeats % 2 ? times[repeats / 2] : 0.5 * (times[repeats / 2 - 1] + times[repeats / 2]);
  return row;
}

}  // namespace

std::vector<BenchRow> bench_kernels(const std::vector<BenchCase>& grid, std::size_t repeats, std::uint64_t seed,
                                    Precision precision) {
  if (repeats == 0) throw ContractError("repeats must be at least 1");
  CheckedModeGuard unchecked(false);
  std::vector<BenchRow> rows;
  for (const auto& spec : grid) {
    rows.push_back(precision == Precision::F32 ? bench_case<float>(spec, repeats, seed)
                                               : bench_case<double>(spec, repeats, seed));
  }
  return rows;
}

}  // namespace kda
