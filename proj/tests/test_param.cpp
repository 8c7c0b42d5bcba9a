#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kda/param.hpp"
#include "oracles.hpp"

using kda::Matrix;

namespace {

Matrix random_x(std::size_t t, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  Matrix x(t, d);
  for (auto& e : x.data()) e = n(rng);
  return x;
}

Matrix kernel_rows(std::size_t channels, std::vector<double> taps) {
  Matrix k(channels, kda::kConvWidth);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t j = 0; j < kda::kConvWidth; ++j) k(c, j) = taps[j];
  return k;
}

}  // namespace

TEST(ShortConv, CurrentTapIsIdentity) {
  const Matrix x = random_x(9, 5, 1);
  EXPECT_EQ(kda::short_conv(x, kernel_rows(5, {0, 0, 0, 1})), x);
}

TEST(ShortConv, DelayTap) {
  const Matrix x = random_x(9, 5, 2);
  const Matrix y = kda::short_conv(x, kernel_rows(5, {0, 0, 1, 0}));
  EXPECT_EQ(y.rows_slice(0, 1), Matrix(1, 5));
  EXPECT_EQ(y.rows_slice(1, 8), x.rows_slice(0, 8));
}

TEST(ShortConv, MatchesDirectSum) {
  const Matrix x = random_x(20, 6, 3);
  const Matrix k = random_x(6, 4, 4);
  EXPECT_LT(kda::max_abs_diff(kda::short_conv(x, k), oracle::direct_conv(x, k)), 1e-12);
}

TEST(ShortConv, Causal) {
  const Matrix x = random_x(12, 3, 5);
  const Matrix k = random_x(3, 4, 6);
  const Matrix y = kda::short_conv(x, k);
  for (std::size_t t = 0; t + 1 < 12; ++t) {
    Matrix p = x;
    for (auto& e : p.row(t + 1)) e += 10;
    EXPECT_EQ(kda::short_conv(p, k).rows_slice(0, t + 1), y.rows_slice(0, t + 1));
  }
}

TEST(Featurize, ZeroInputGivesHalfBeta) {
  const auto w = kda::make_param_weights(8, 4, 4, 2, 1);
  for (const auto& f : kda::featurize(Matrix(5, 8), w))
    for (double b : f.gates.beta) EXPECT_EQ(b, 0.5);
}

TEST(Featurize, OneHotUnitPropagation) {
  kda::HeadWeights h = kda::make_param_weights(4, 4, 4, 1, 2).heads[0];
  h.wq = Matrix::identity(4);
  h.conv_q = kernel_rows(4, {0, 0, 0, 1});
  Matrix x(1, 4);
  x(0, 2) = 1;
  const auto f = kda::featurize(x, h);
  const double s = kda::swish(1.0), z = kda::swish(0.0);
  const double n = std::sqrt(s * s + 3 * z * z);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(f.seq.q(0, c), (c == 2 ? s : z) / n, 1e-15);
}

TEST(Featurize, InvariantsOnRandomInputs) {
  const auto w = kda::make_param_weights(16, 8, 8, 2, 3, 0.5);
  std::size_t rows = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Matrix x = random_x(128, 16, seed);
    for (const auto& f : kda::featurize(x, w)) {
      kda::validate(f.gates, f.seq);
      EXPECT_TRUE(kda::is_normalized(f.seq, 1e-6));
      for (double b : f.gates.beta) {
        EXPECT_GE(b, 0.0);
        EXPECT_LE(b, 1.0);
      }
      for (double la : f.gates.log_alpha.data()) EXPECT_LE(la, 0.0);
      rows += 128;
    }
  }
  EXPECT_GE(rows, 10000u);
}

TEST(Featurize, DecayBiasTarget) {
  const double b = kda::decay_bias_for(0.98);
  EXPECT_NEAR(std::exp(-kda::softplus(b)), 0.98, 1e-15);
  EXPECT_THROW(kda::decay_bias_for(1.0), kda::ContractError);
}

TEST(Featurize, ZeroRowDoesNotProduceNan) {
  const Matrix z = kda::l2_normalize_rows(Matrix(2, 3));
  EXPECT_TRUE(z.all_finite());
  EXPECT_EQ(kda::max_abs(z), 0.0);
}

TEST(RmsNorm, ScaleInvariance) {
  const Matrix y = random_x(6, 5, 9);
  const std::vector<double> w{1, 2, 0.5, -1, 3};
  EXPECT_LT(kda::max_abs_diff(kda::rms_norm(y * 7.25, w), kda::rms_norm(y, w)), 1e-12);
  EXPECT_LT(kda::max_abs_diff(kda::rms_norm(y * 1e-6, w), kda::rms_norm(y, w)), 1e-12);
}

TEST(RmsNorm, ConstantRows) {
  const std::vector<double> w{1, 2, 3};
  const Matrix pos = kda::rms_norm(Matrix(2, 3, 4.0), w), neg = kda::rms_norm(Matrix(2, 3, -0.1), w);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(pos(1, c), w[c], 1e-15);
    EXPECT_NEAR(neg(1, c), -w[c], 1e-15);
  }
}

TEST(OutputGate, MatchesFormula) {
  const auto w = kda::make_param_weights(8, 4, 4, 2, 5, 0.3);
  const Matrix x = random_x(7, 8, 6);
  const std::vector<Matrix> core{random_x(7, 4, 7), random_x(7, 4, 8)};
  const Matrix got = kda::output_gate(core, x, w);

  Matrix want(7, 8);
  for (std::size_t t = 0; t < 7; ++t) {
    std::vector<double> mixed(8), pre(8);
    for (std::size_t h = 0; h < 2; ++h) {
      double ss = 0;
      for (std::size_t c = 0; c < 4; ++c) ss += core[h](t, c) * core[h](t, c);
      const double rms = std::sqrt(ss / 4);
      for (std::size_t c = 0; c < 4; ++c) mixed[h * 4 + c] = core[h](t, c) / rms * w.heads[h].rms_weight[c];
    }
    for (std::size_t j = 0; j < 8; ++j) {
      for (std::size_t r = 0; r < 4; ++r) {
        double down = 0;
        for (std::size_t i = 0; i < 8; ++i) down += x(t, i) * w.gate_down(i, r);
        pre[j] += down * w.gate_up(r, j);
      }
    }
    for (std::size_t o = 0; o < 8; ++o)
      for (std::size_t j = 0; j < 8; ++j) want(t, o) += 1 / (1 + std::exp(-pre[j])) * mixed[j] * w.wo(j, o);
  }
  EXPECT_LT(kda::max_abs_diff(got, want), 1e-12);
}

TEST(OutputGate, SaturatedGateSilencesOutput) {
  auto w = kda::make_param_weights(4, 4, 4, 1, 6);
  w.gate_down = Matrix(4, 4);
  w.gate_up = Matrix(4, 4);
  for (std::size_t i = 0; i < 4; ++i) w.gate_down(i, i) = 1;
  for (std::size_t i = 0; i < 4; ++i) w.gate_up(i, i) = -1e3;
  const Matrix x(3, 4, 1.0);
  const std::vector<Matrix> core{random_x(3, 4, 1)};
  EXPECT_LT(kda::frobenius(kda::output_gate(core, x, w)), 1e-6 * kda::frobenius(w.wo));
}

TEST(ParamWeights, ShapeChecks) {
  auto w = kda::make_param_weights(8, 4, 4, 2, 1);
  EXPECT_NO_THROW(w.check());
  w.heads[1].alpha_up = Matrix(4, 3);
  EXPECT_THROW(w.check(), kda::ShapeError);
  EXPECT_THROW(kda::make_param_weights(8, 4, 4, 3, 1), kda::ShapeError);
}
