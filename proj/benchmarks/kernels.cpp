#include <benchmark/benchmark.h>

#include "kda/census.hpp"
#include "kda/dplr.hpp"

namespace {

struct Fixture {
  kda::BasicAttnSequence<float> seq;
  kda::BasicGateSequence<float> gates;
  kda::BasicDplrInstance<float> dplr;
};

Fixture make_fixture(std::size_t length, std::size_t dim) {
  kda::InstanceSpec spec;
  spec.length = length;
  spec.key_dim = spec.value_dim = dim;
  const kda::Instance inst = kda::make_instance(spec, 0);
  const kda::DplrInstance d = kda::dplr_from_kda(inst.seq, inst.gates);
  auto seq32 = [](const kda::AttnSequence& s) {
    return kda::BasicAttnSequence<float>{kda::cast<float>(s.q), kda::cast<float>(s.k), kda::cast<float>(s.v)};
  };
  return {seq32(inst.seq),
          {kda::cast<float>(inst.gates.log_alpha), std::vector<float>(inst.gates.beta.begin(), inst.gates.beta.end())},
          {seq32(d.seq), {kda::cast<float>(d.gates.log_alpha), kda::cast<float>(d.gates.a), kda::cast<float>(d.gates.b)}}};
}

void report(benchmark::State& state, const kda::census::Counts& c, std::size_t chunks) {
  state.counters["matmuls"] = static_cast<double>(c.matmuls);
  if (chunks) state.counters["scores/chunk"] = static_cast<double>(c.score_matrices / chunks);
}

void BM_KdaChunk(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0)), c = static_cast<std::size_t>(state.range(1));
  const auto f = make_fixture(t, static_cast<std::size_t>(state.range(2)));
  const auto plan = kda::ChunkPlan::for_length(t, c);
  kda::CheckedModeGuard unchecked(false);
  kda::census::Counts counts;
  for (auto _ : state) {
    kda::census::Scope scope;
    benchmark::DoNotOptimize(kda::chunk_forward(f.seq, f.gates, kda::MatrixF{}, plan));
    counts = scope.elapsed();
  }
  report(state, counts, plan.num_chunks);
}

void BM_DplrChunk(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0)), c = static_cast<std::size_t>(state.range(1));
  const auto f = make_fixture(t, static_cast<std::size_t>(state.range(2)));
  const auto plan = kda::ChunkPlan::for_length(t, c);
  kda::CheckedModeGuard unchecked(false);
  kda::census::Counts counts;
  for (auto _ : state) {
    kda::census::Scope scope;
    benchmark::DoNotOptimize(kda::dplr_chunk_forward(f.dplr.seq, f.dplr.gates, kda::MatrixF{}, plan));
    counts = scope.elapsed();
  }
  report(state, counts, plan.num_chunks);
}

void BM_KdaRecurrent(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const auto f = make_fixture(t, static_cast<std::size_t>(state.range(2)));
  kda::CheckedModeGuard unchecked(false);
  for (auto _ : state) benchmark::DoNotOptimize(kda::recurrent_forward(kda::VariantKind::KDA, f.seq, f.gates));
}

void grid(benchmark::internal::Benchmark* b) {
  b->ArgNames({"T", "C", "d"});
  for (long t : {256, 1024})
    for (long c : {16, 64}) b->Args({t, c, 64});
  b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_KdaChunk)->Apply(grid);
BENCHMARK(BM_DplrChunk)->Apply(grid);
BENCHMARK(BM_KdaRecurrent)->Apply(grid);

BENCHMARK_MAIN();
