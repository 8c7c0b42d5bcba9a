#include <gtest/gtest.h>

#include <random>

#include "kda/autograd.hpp"
#include "oracles.hpp"

using kda::Matrix;

namespace {

enum class Slot { Q, K, V, LogAlpha, Beta, S0 };

double& coordinate(kda::AttnSequence& s, kda::GateSequence& g, Matrix& s0, Slot slot, std::size_t r, std::size_t c) {
  switch (slot) {
    case Slot::Q:
      return s.q(r, c);
    case Slot::K:
      return s.k(r, c);
    case Slot::V:
      return s.v(r, c);
    case Slot::LogAlpha:
      return g.log_alpha(r, c);
    case Slot::Beta:
      return g.beta[r];
    case Slot::S0:
      break;
  }
  return s0(r, c);
}

double analytic(const kda::KdaGradients& g, Slot slot, std::size_t r, std::size_t c) {
  switch (slot) {
    case Slot::Q:
      return g.d_q(r, c);
    case Slot::K:
      return g.d_k(r, c);
    case Slot::V:
      return g.d_v(r, c);
    case Slot::LogAlpha:
      return g.d_log_alpha(r, c);
    case Slot::Beta:
      return g.d_beta[r];
    case Slot::S0:
      break;
  }
  return g.d_s0(r, c);
}

// Central difference of the extended-precision oracle loss.
double numeric(const kda::Instance& inst, bool squared, Slot slot, std::size_t r, std::size_t c, double h = 1e-5) {
  auto seq = inst.seq;
  auto g = inst.gates;
  Matrix s0 = inst.s0;
  double& x = coordinate(seq, g, s0, slot, r, c);
  const double x0 = x;
  const double up = x0 + h, down = x0 - h;
  x = up;
  const long double lu = oracle::kda_loss_extended(seq, g, s0, squared);
  x = down;
  const long double ld = oracle::kda_loss_extended(seq, g, s0, squared);
  return static_cast<double>((lu - ld) / static_cast<long double>(up - down));
}

double rel(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); }

}  // namespace

TEST(Backward, ZeroUpstream) {
  const auto inst = oracle::random_instance(10, 4, 3, 1, true);
  const auto g = kda::kda_backward(inst.seq, inst.gates, inst.s0, Matrix(10, 3));
  for (const Matrix* m : {&g.d_q, &g.d_k, &g.d_v, &g.d_log_alpha, &g.d_s0}) EXPECT_EQ(kda::max_abs(*m), 0.0);
  for (double b : g.d_beta) EXPECT_EQ(b, 0.0);
}

TEST(Backward, SingleStepValueGradient) {
  const auto inst = oracle::random_instance(1, 5, 4, 2);
  const Matrix up = oracle::random_instance(1, 4, 4, 3).seq.v;
  const auto g = kda::kda_backward(inst.seq, inst.gates, Matrix{}, up);
  const double scale = inst.gates.beta[0] * kda::dot(inst.seq.q.row(0), inst.seq.k.row(0));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g.d_v(0, j), scale * up(0, j), 1e-15);
}

TEST(Backward, MatchesFiniteDifferencesEverySlot) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto inst = oracle::random_instance(24, 8, 8, seed, true);
    for (bool squared : {false, true}) {
      const auto fwd = kda::recurrent_forward(kda::VariantKind::KDA, inst.seq, inst.gates, inst.s0);
      const auto kind = squared ? kda::LossKind::Squared : kda::LossKind::Linear;
      const auto g = kda::kda_backward(inst.seq, inst.gates, inst.s0, kda::loss_gradient(kind, fwd.outputs));
      double worst = 0;
      for (Slot s : {Slot::Q, Slot::K, Slot::V, Slot::LogAlpha})
        for (std::size_t r = 0; r < 24; ++r)
          for (std::size_t c = 0; c < 8; ++c) worst = std::max(worst, rel(analytic(g, s, r, c), numeric(inst, squared, s, r, c)));
      for (std::size_t r = 0; r < 24; ++r) worst = std::max(worst, rel(analytic(g, Slot::Beta, r, 0), numeric(inst, squared, Slot::Beta, r, 0)));
      for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 8; ++c) worst = std::max(worst, rel(analytic(g, Slot::S0, r, c), numeric(inst, squared, Slot::S0, r, c)));
      EXPECT_LT(worst, squared ? 1e-5 : 1e-6);
    }
  }
}

TEST(Backward, LibraryFdCheck) {
  const auto inst = oracle::random_instance(24, 8, 8, 4, true);
  const auto lin = kda::fd_check(inst.seq, inst.gates, inst.s0, kda::LossKind::Linear);
  EXPECT_LT(lin.max_rel_error, 1e-6);
  EXPECT_EQ(lin.coordinates, 4u * 24 * 8 + 24 + 64);
  EXPECT_LT(kda::fd_check(inst.seq, inst.gates, inst.s0, kda::LossKind::Squared).max_rel_error, 1e-5);
}

TEST(Backward, NoOpTokenHasZeroGradient) {
  auto inst = oracle::random_instance(12, 4, 4, 5, true);
  auto seq = inst.seq;
  auto gates = inst.gates;
  kda::append_noop_tokens(seq, gates, 3);
  for (std::size_t t = 12; t < 15; ++t)
    for (std::size_t c = 0; c < 4; ++c) seq.k(t, c) = seq.k(0, c);
  const auto fwd = kda::recurrent_forward(kda::VariantKind::KDA, seq, gates, inst.s0);
  const auto g = kda::kda_backward(seq, gates, inst.s0, kda::loss_gradient(kda::LossKind::Squared, fwd.outputs));
  for (std::size_t t = 12; t < 15; ++t)
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(g.d_k(t, c), 0.0);
      EXPECT_EQ(g.d_v(t, c), 0.0);
    }
}

TEST(Backward, LinearInUpstream) {
  const auto inst = oracle::random_instance(16, 6, 5, 6, true);
  const Matrix a = oracle::random_instance(16, 5, 5, 7).seq.v, b = oracle::random_instance(16, 5, 5, 8).seq.v;
  const auto ga = kda::kda_backward(inst.seq, inst.gates, inst.s0, a);
  const auto gb = kda::kda_backward(inst.seq, inst.gates, inst.s0, b);
  const auto gs = kda::kda_backward(inst.seq, inst.gates, inst.s0, a + b);
  EXPECT_LT(kda::max_abs_diff(gs.d_k, ga.d_k + gb.d_k), 1e-12);
  EXPECT_LT(kda::max_abs_diff(gs.d_log_alpha, ga.d_log_alpha + gb.d_log_alpha), 1e-12);
}

TEST(Backward, ValueGradientIsCausal) {
  const auto inst = oracle::random_instance(20, 6, 5, 9, true);
  Matrix up = oracle::random_instance(20, 5, 5, 10).seq.v;
  for (std::size_t t = 8; t < 20; ++t)
    for (auto& x : up.row(t)) x = 0;
  const auto g = kda::kda_backward(inst.seq, inst.gates, inst.s0, up);
  for (std::size_t j = 8; j < 20; ++j)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(g.d_v(j, c), 0.0);
}

TEST(Backward, SegmentedRecomputationForLongSequences) {
  const auto inst = oracle::random_instance(600, 4, 4, 11, true);
  const auto fwd = kda::recurrent_forward(kda::VariantKind::KDA, inst.seq, inst.gates, inst.s0);
  const auto g = kda::kda_backward(inst.seq, inst.gates, inst.s0, kda::loss_gradient(kda::LossKind::Linear, fwd.outputs));
  std::mt19937_64 rng(12);
  for (int i = 0; i < 20; ++i) {
    const std::size_t r = rng() % 600, c = rng() % 4;
    EXPECT_LT(rel(g.d_v(r, c), numeric(inst, false, Slot::V, r, c)), 1e-6);
    EXPECT_LT(rel(g.d_log_alpha(r, c), numeric(inst, false, Slot::LogAlpha, r, c)), 1e-5);
  }
}

TEST(Backward, ShapeErrors) {
  const auto inst = oracle::random_instance(4, 3, 3, 1);
  EXPECT_THROW(kda::kda_backward(inst.seq, inst.gates, Matrix{}, Matrix(3, 3)), kda::ShapeError);
}
