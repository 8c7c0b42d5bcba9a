#include <gtest/gtest.h>

#include <cmath>

#include "kda/recurrent.hpp"
#include "oracles.hpp"

using kda::Matrix;
using kda::VariantKind;

TEST(Recurrent, SingleStepClosedForm) {
  const auto inst = oracle::random_instance(1, 4, 3, 7);
  const auto r = kda::recurrent_forward(VariantKind::KDA, inst.seq, inst.gates);
  const double b = inst.gates.beta[0];
  const double qk = kda::dot(inst.seq.q.row(0), inst.seq.k.row(0));
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(r.outputs(0, j), b * qk * inst.seq.v(0, j), 1e-15);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.final_state(i, j), b * inst.seq.k(0, i) * inst.seq.v(0, j), 1e-15);
  }
}

TEST(Recurrent, ZeroBetaWritesNothing) {
  auto inst = oracle::random_instance(20, 6, 5, 1);
  std::fill(inst.gates.beta.begin(), inst.gates.beta.end(), 0.0);
  const auto r = kda::recurrent_forward(VariantKind::KDA, inst.seq, inst.gates);
  EXPECT_EQ(kda::max_abs(r.outputs), 0.0);
  EXPECT_EQ(kda::max_abs(r.final_state), 0.0);
}

TEST(Recurrent, AllVariantsMatchDenseOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = oracle::random_instance(24, 6, 5, seed, true);
    for (VariantKind k : {VariantKind::Mamba2, VariantKind::GLA, VariantKind::DeltaNet, VariantKind::GDN,
                          VariantKind::KDA}) {
      const auto got = kda::recurrent_forward(k, inst.seq, inst.gates, inst.s0);
      const auto want = oracle::dense_forward(k, inst.seq, inst.gates, inst.s0);
      EXPECT_LT(kda::max_abs_diff(got.outputs, want.outputs), 1e-12) << kda::to_string(k);
      EXPECT_LT(kda::max_abs_diff(got.final_state, want.final_state), 1e-12) << kda::to_string(k);
    }
    const auto la = kda::recurrent_forward(VariantKind::LA, inst.seq, inst.s0);
    EXPECT_LT(kda::max_abs_diff(la.outputs, oracle::dense_forward(VariantKind::LA, inst.seq, inst.gates, inst.s0).outputs),
              1e-12);
  }
}

TEST(Recurrent, DplrMatchesDenseOracle) {
  const auto inst = oracle::random_instance(30, 5, 4, 3, true);
  kda::DplrGateSequence g{inst.gates.log_alpha, inst.seq.k * 0.3, inst.seq.q};
  const auto got = kda::recurrent_forward(VariantKind::DPLR, inst.seq, g, inst.s0);
  const auto want = oracle::dense_dplr(inst.seq, g, inst.s0);
  EXPECT_LT(kda::max_abs_diff(got.outputs, want.outputs), 1e-12);
}

TEST(Recurrent, UnitDecayIsDeltaNetBitForBit) {
  auto inst = oracle::random_instance(40, 8, 8, 11);
  inst.gates.log_alpha = Matrix(40, 8);
  const auto kda_out = kda::recurrent_forward(VariantKind::KDA, inst.seq, inst.gates).outputs;
  EXPECT_EQ(kda_out, kda::recurrent_forward(VariantKind::DeltaNet, inst.seq, inst.gates).outputs);
}

TEST(Recurrent, ChannelConstantDecayIsGdn) {
  auto inst = oracle::random_instance(40, 8, 8, 12);
  for (std::size_t t = 0; t < 40; ++t)
    for (std::size_t i = 0; i < 8; ++i) inst.gates.log_alpha(t, i) = inst.gates.log_alpha(t, 0);
  EXPECT_LT(kda::max_abs_diff(kda::recurrent_forward(VariantKind::KDA, inst.seq, inst.gates).outputs,
                              kda::recurrent_forward(VariantKind::GDN, inst.seq, inst.gates).outputs),
            1e-12);
  inst.gates.log_alpha = Matrix(40, 8);
  EXPECT_LT(kda::max_abs_diff(kda::recurrent_forward(VariantKind::GDN, inst.seq, inst.gates).outputs,
                              kda::recurrent_forward(VariantKind::DeltaNet, inst.seq, inst.gates).outputs),
            1e-12);
}

TEST(Recurrent, DplrSubstitutionReproducesKda) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = oracle::random_instance(64, 8, 6, seed, true);
    const auto sub = kda::dplr_from_kda(inst.seq, inst.gates);
    EXPECT_LT(kda::max_abs_diff(kda::recurrent_forward(VariantKind::DPLR, sub.seq, sub.gates, inst.s0).outputs,
                                kda::recurrent_forward(VariantKind::KDA, inst.seq, inst.gates, inst.s0).outputs),
              1e-12);
  }
}

TEST(Recurrent, Causality) {
  const auto inst = oracle::random_instance(32, 6, 6, 5);
  const auto full = kda::recurrent_forward(VariantKind::KDA, inst.seq, inst.gates).outputs;
  for (std::size_t t : {0u, 10u, 31u}) {
    auto cut = inst.seq;
    for (std::size_t j = t + 1; j < 32; ++j)
      for (auto& x : cut.v.row(j)) x = 0;
    const auto part = kda::recurrent_forward(VariantKind::KDA, cut, inst.gates).outputs;
    EXPECT_EQ(part.rows_slice(0, t + 1), full.rows_slice(0, t + 1));
  }
}

TEST(Recurrent, LinearInValues) {
  const auto a = oracle::random_instance(32, 6, 6, 8);
  const auto b = oracle::random_instance(32, 6, 6, 9);
  auto sum = a.seq;
  sum.v += b.seq.v;
  auto with_b = a.seq;
  with_b.v = b.seq.v;
  const auto fa = kda::recurrent_forward(VariantKind::KDA, a.seq, a.gates).outputs;
  const auto fb = kda::recurrent_forward(VariantKind::KDA, with_b, a.gates).outputs;
  const auto fs = kda::recurrent_forward(VariantKind::KDA, sum, a.gates).outputs;
  EXPECT_LT(kda::max_abs_diff(fs, fa + fb), 1e-11);
}

TEST(Recurrent, Errors) {
  const auto inst = oracle::random_instance(4, 3, 3, 1);
  EXPECT_THROW(kda::recurrent_forward(VariantKind::KDA, inst.seq), kda::ContractError);
  EXPECT_THROW(kda::recurrent_forward(VariantKind::DPLR, inst.seq, inst.gates), kda::ContractError);
  auto bad = inst.gates;
  bad.beta[1] = 1.5;
  EXPECT_THROW(kda::recurrent_forward(VariantKind::KDA, inst.seq, bad), kda::ContractError);
  auto shape = inst.gates;
  shape.beta.pop_back();
  EXPECT_THROW(kda::recurrent_forward(VariantKind::KDA, inst.seq, shape), kda::ShapeError);
}

TEST(Recurrent, NonFiniteReportsStep) {
  auto inst = oracle::random_instance(8, 3, 3, 1);
  kda::CheckedModeGuard off(false);
  inst.seq.v(5, 1) = std::numeric_limits<double>::infinity();
  try {
    kda::recurrent_forward(VariantKind::KDA, inst.seq, inst.gates);
    FAIL() << "expected NumericError";
  } catch (const kda::NumericError& e) {
    EXPECT_EQ(e.step(), 5u);
  }
}

TEST(StateNormBound, Examples) {
  auto inst = oracle::random_instance(16, 4, 4, 2, true);
  auto zero = inst.gates;
  std::fill(zero.beta.begin(), zero.beta.end(), 0.0);
  EXPECT_DOUBLE_EQ(kda::state_norm_bound(inst.seq, zero, inst.s0), kda::frobenius(inst.s0));

  kda::AttnSequence one{Matrix{{1, 0}}, Matrix{{1, 0}}, Matrix{{0, 2}}};
  kda::GateSequence g{Matrix(1, 2), {1.0}};
  EXPECT_DOUBLE_EQ(kda::state_norm_bound(one, g, Matrix{}), 2.0);

  auto raw = inst.seq;
  raw.k *= 2.0;
  EXPECT_THROW(kda::state_norm_bound(raw, inst.gates, inst.s0), kda::ContractError);
}

TEST(StateNormBound, HoldsAlongTrajectory) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = oracle::random_instance(64, 8, 8, seed, true);
    const auto norms = kda::state_norm_trajectory(inst.seq, inst.gates, inst.s0);
    double bound = kda::frobenius(inst.s0);
    for (std::size_t t = 0; t < 64; ++t) {
      bound += inst.gates.beta[t] * kda::norm2(inst.seq.v.row(t));
      EXPECT_LE(norms[t], bound * (1 + 1e-12));
    }
  }
}

TEST(Variants, NamesRoundTrip) {
  for (auto k : kda::all_variants()) EXPECT_EQ(kda::parse_variant(kda::to_string(k)), k);
  EXPECT_FALSE(kda::parse_variant("rwkv7"));
}
