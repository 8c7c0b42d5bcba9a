#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "kda/sequence.hpp"

namespace kda {

inline constexpr std::size_t kConvWidth = 4;

double sigmoid(double x);
double softplus(double x);
double swish(double x);

// Decay bias that gives α = exp(-softplus(bias)) == alpha at zero input.
double decay_bias_for(double alpha);

// Weights of one KDA head. Projections are stored in×out, so a projection of
// the T×d token matrix X is X·W.
struct HeadWeights {
  Matrix wq;          // d×d_k
  Matrix wk;          // d×d_k
  Matrix wv;          // d×d_v
  Matrix conv_q;      // d_k×4, column 3 multiplies the current token
  Matrix conv_k;      // d_k×4
  Matrix conv_v;      // d_v×4
  Matrix alpha_down;  // d×r, r == d_k
  Matrix alpha_up;    // r×d_k
  Vector decay_bias;  // d_k
  Vector w_beta;      // d
  Vector rms_weight;  // d_v
};

struct ParamWeights {
  std::size_t model_dim = 0;
  std::size_t key_dim = 0;
  std::size_t value_dim = 0;
  std::vector<HeadWeights> heads;
  Matrix gate_down;  // d×d_v
  Matrix gate_up;    // d_v×d
  Matrix wo;         // d×d

  // Throws ShapeError unless every tensor matches the stated dims and H·d_v == d.
  void check() const;
};

// Seeded uniform weights in [-scale, scale]; decay biases give α ≈ 0.98 at zero
// input and RMSNorm weights start at one.
ParamWeights make_param_weights(std::size_t model_dim, std::size_t key_dim, std::size_t value_dim,
                                std::size_t num_heads, std::uint64_t seed, double scale = 0.05);

// Causal depthwise convolution of width 4 with left zero-padding:
// out[t][c] = Σ_j kernels[c][j] · x[t - 3 + j][c].
Matrix short_conv(const Matrix& x, const Matrix& kernels);

// Rows scaled to unit Euclidean norm; the norm is floored at 1e-12.
Matrix l2_normalize_rows(const Matrix& x);

// y / max(rms(y), 1e-12) ⊙ weight, row by row. No epsilon under the root, so
// the map is exactly invariant to positive row scaling.
Matrix rms_norm(const Matrix& y, std::span<const double> weight);

struct HeadFeatures {
  AttnSequence seq;
  GateSequence gates;
};

// q, k = L2Norm(Swish(ShortConv(X W))), v = Swish(ShortConv(X W_v)),
// log α = -softplus(X W_α↓ W_α↑ + bias), β = Sigmoid(X w_β).
HeadFeatures featurize(const Matrix& x, const HeadWeights& head);
std::vector<HeadFeatures> featurize(const Matrix& x, const ParamWeights& w);

// W_o (Sigmoid(X W_g↓ W_g↑) ⊙ concat_h RMSNorm(core_h)).
Matrix output_gate(std::span<const Matrix> core_out, const Matrix& x, const ParamWeights& w);

}  // namespace kda
