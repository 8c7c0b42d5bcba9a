#include <gtest/gtest.h>

#include "kda/census.hpp"
#include "kda/dplr.hpp"
#include "oracles.hpp"

using kda::ChunkPlan;
using kda::Matrix;
using kda::VariantKind;

namespace {

kda::DplrGateSequence random_dplr(const kda::Instance& inst) {
  kda::DplrGateSequence g{inst.gates.log_alpha, inst.seq.k, inst.seq.q};
  for (std::size_t t = 0; t < g.a.rows(); ++t)
    for (auto& x : g.a.row(t)) x *= 0.5 * inst.gates.beta[t];
  return g;
}

}  // namespace

TEST(DplrChunk, MatchesRecurrentOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = oracle::random_instance(128, 8, 8, seed, true);
    const auto g = random_dplr(inst);
    const auto got = kda::dplr_chunk_forward(inst.seq, g, inst.s0, ChunkPlan::for_length(128, 16));
    const auto want = oracle::dense_dplr(inst.seq, g, inst.s0);
    EXPECT_LT(kda::max_abs_diff(got.outputs, want.outputs), 1e-9);
    EXPECT_LT(kda::max_abs_diff(got.final_state, want.final_state), 1e-9);
  }
}

TEST(DplrChunk, ZeroLowRankIsGatedWrite) {
  const auto inst = oracle::random_instance(48, 6, 6, 3, true);
  auto g = random_dplr(inst);
  g.a = Matrix(48, 6);
  const auto got = kda::dplr_chunk_forward(inst.seq, g, inst.s0, ChunkPlan::for_length(48, 16));
  const auto gla = kda::recurrent_forward(VariantKind::GLA, inst.seq, inst.gates, inst.s0);
  EXPECT_LT(kda::max_abs_diff(got.outputs, gla.outputs), 1e-10);
}

TEST(DplrChunk, KdaSubstitution) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = oracle::random_instance(100, 8, 8, seed, true);
    const auto sub = kda::dplr_from_kda(inst.seq, inst.gates);
    const auto plan = ChunkPlan::for_length(100, 16);
    const auto d = kda::dplr_chunk_forward(sub.seq, sub.gates, inst.s0, plan);
    const auto k = kda::chunk_forward(inst.seq, inst.gates, inst.s0, plan);
    EXPECT_LT(kda::max_abs_diff(d.outputs, k.outputs), 1e-9);
    EXPECT_LT(kda::max_abs_diff(d.final_state, k.final_state), 1e-9);
  }
}

TEST(DplrChunk, FourScoreMatricesPerChunk) {
  const auto inst = oracle::random_instance(64, 8, 8, 1);
  const auto sub = kda::dplr_from_kda(inst.seq, inst.gates);
  kda::census::Scope scope;
  kda::dplr_chunk_forward(sub.seq, sub.gates, Matrix{}, ChunkPlan::for_length(64, 16));
  EXPECT_EQ(scope.elapsed().score_matrices, 4u * 4u);
}

TEST(MatmulCensus, SingleChunk) {
  const auto c = kda::matmul_census(16, 16, 8, 8);
  EXPECT_EQ(c.num_chunks, 1u);
  EXPECT_EQ(c.kda_score_matrices_per_chunk(), 2u);
  EXPECT_EQ(c.dplr_score_matrices_per_chunk(), 4u);
  EXPECT_GE(c.dplr.matmuls, c.kda.matmuls + 3);
}

TEST(MatmulCensus, PerChunkDifferenceIsConstant) {
  const auto one = kda::matmul_census(16, 16, 8, 8);
  const auto four = kda::matmul_census(64, 16, 8, 8);
  EXPECT_EQ(four.num_chunks, 4u);
  EXPECT_EQ(four.dplr.matmuls - four.kda.matmuls, 4 * (one.dplr.matmuls - one.kda.matmuls));
}

TEST(MatmulCensus, LongSequence) {
  const auto c = kda::matmul_census(4096, 64, 16, 16);
  EXPECT_EQ(c.num_chunks, 64u);
  EXPECT_LT(c.kda.matmuls, c.dplr.matmuls);
  EXPECT_GE(c.dplr.matmuls - c.kda.matmuls, 3 * c.num_chunks);
}
