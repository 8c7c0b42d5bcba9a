#include <gtest/gtest.h>

#include <numbers>

#include "kda/chunkwise.hpp"
#include "kda/parallel.hpp"
#include "oracles.hpp"

using kda::Matrix;
using kda::VariantKind;

TEST(Parallel, LinearAttentionTwoTokensByHand) {
  const kda::AttnSequence seq{Matrix{{1, 0}, {0, 1}}, Matrix{{1, 1}, {0, 2}}, Matrix{{3}, {5}}};
  const kda::GateSequence g{Matrix(2, 2), {1, 1}};
  // o1 = (q1·k1) v1 = 3; o2 = (q2·k1) v1 + (q2·k2) v2 = 3 + 10.
  const Matrix o = kda::parallel_forward(VariantKind::LA, seq, g);
  EXPECT_EQ(o, (Matrix{{3}, {13}}));
  EXPECT_EQ(o, kda::recurrent_forward(VariantKind::LA, seq).outputs);
}

TEST(Parallel, EveryRowMatchesRecurrent) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    kda::InstanceSpec spec;
    spec.length = 32;
    spec.key_dim = spec.value_dim = 8;
    const auto inst = kda::make_instance(spec, seed);
    for (VariantKind k : {VariantKind::Mamba2, VariantKind::GLA, VariantKind::DeltaNet, VariantKind::GDN,
                          VariantKind::KDA}) {
      EXPECT_LT(kda::max_abs_diff(kda::parallel_forward(k, inst.seq, inst.gates),
                                  oracle::dense_forward(k, inst.seq, inst.gates).outputs),
                1e-9)
          << kda::to_string(k);
    }
  }
}

TEST(Parallel, ThreeWayAgreement) {
  kda::InstanceSpec spec;
  spec.length = 64;
  spec.key_dim = spec.value_dim = 16;
  const auto inst = kda::make_instance(spec, 42);
  const Matrix par = kda::parallel_forward(VariantKind::KDA, inst.seq, inst.gates);
  const Matrix rec = kda::recurrent_forward(VariantKind::KDA, inst.seq, inst.gates).outputs;
  const Matrix chk = kda::chunk_forward(inst.seq, inst.gates, Matrix{}, kda::ChunkPlan::for_length(64, 16)).outputs;
  EXPECT_LT(kda::max_abs_diff(par, rec), 1e-9);
  EXPECT_LT(kda::max_abs_diff(chk, rec), 1e-9);
}

TEST(Parallel, Limits) {
  const auto inst = oracle::random_instance(65, 4, 4, 1);
  EXPECT_THROW(kda::parallel_forward(VariantKind::KDA, inst.seq, inst.gates), kda::ContractError);
  const auto small = oracle::random_instance(8, 4, 4, 1);
  EXPECT_THROW(kda::parallel_forward(VariantKind::DPLR, small.seq, small.gates), kda::ContractError);
}

TEST(Positional, SingleTokenToRounding) {
  const auto inst = oracle::random_instance(1, 6, 6, 3);
  EXPECT_LT(kda::positional_form_check(VariantKind::KDA, inst.seq, inst.gates).max_deviation, 1e-14);
}

TEST(Positional, ReducesToLinearAttention) {
  auto inst = oracle::random_instance(16, 6, 6, 4);
  inst.gates.log_alpha = Matrix(16, 6);
  std::fill(inst.gates.beta.begin(), inst.gates.beta.end(), 0.0);
  EXPECT_LT(kda::positional_form_check(VariantKind::GDN, inst.seq, inst.gates).max_deviation, 1e-12);
}

TEST(Positional, RandomInstances) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = oracle::random_instance(16, 8, 8, seed);
    EXPECT_LT(kda::positional_form_check(VariantKind::GDN, inst.seq, inst.gates).max_deviation, 1e-9);
    EXPECT_LT(kda::positional_form_check(VariantKind::KDA, inst.seq, inst.gates).max_deviation, 1e-9);
  }
}

TEST(Rope, IdentityAndQuarterTurn) {
  const std::vector<double> theta{0.3, 1.1};
  const auto same = kda::rope_relative_check(theta, 5, 5);
  EXPECT_LT(kda::max_abs_diff(same.relative, Matrix::identity(4)), 1e-15);
  const std::vector<double> quarter{std::numbers::pi / 2};
  const auto r = kda::rope_relative_check(quarter, 4, 3);
  EXPECT_LT(kda::max_abs_diff(r.relative, Matrix{{0, -1}, {1, 0}}), 1e-15);
}

TEST(Rope, RelativeComposition) {
  const std::vector<double> theta{0.7, 0.01, 2.3};
  const auto r = kda::rope_relative_check(theta, 19, 12);
  EXPECT_LT(r.relative_error, 1e-12);
  EXPECT_LT(r.transpose_error, 1e-12);
  EXPECT_LT(r.composition_error, 1e-12);
}
