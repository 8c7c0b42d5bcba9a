#pragma once

#include <cstddef>
#include <string>

#include "kda/sequence.hpp"

namespace kda {

struct KdaGradients {
  Matrix d_q;          // T×d_k
  Matrix d_k;          // T×d_k
  Matrix d_v;          // T×d_v
  Matrix d_log_alpha;  // T×d_k, w.r.t. the stored log-decay
  Vector d_beta;       // T
  Matrix d_s0;         // d_k×d_v
};

// Above this length the backward keeps one state per segment and recomputes
// the states inside a segment during the reverse sweep.
inline constexpr std::size_t kFullCacheMaxLength = 512;
inline constexpr std::size_t kRecomputeSegment = 64;

// Gradient of ⟨upstream, O⟩ w.r.t. every input of the recurrent KDA forward.
// Per step, with S̃ = Diag(α) S_{t-1}, e = v - S̃ᵀk and S_t = S̃ + β k eᵀ:
//
//   dS += q doᵀ,  dq = S_t do
//   de = β dSᵀ k, dv = de, dβ = kᵀ dS e, dk = β dS e - S̃ de
//   dS̃ = dS - k deᵀ, d log α = rowsum(dS̃ ⊙ S̃), dS_{t-1} = Diag(α) dS̃
KdaGradients kda_backward(const AttnSequence& seq, const GateSequence& gates, const StateMatrix& s0,
                          const Matrix& upstream);

enum class LossKind { Linear, Squared };

// Linear: Σ O. Squared: ½ Σ O².
double loss_value(LossKind kind, const Matrix& outputs);
Matrix loss_gradient(LossKind kind, const Matrix& outputs);

struct FdReport {
  double max_rel_error = 0;  // |a - n| / max(|a|, |n|, 1e-8)
  std::size_t coordinates = 0;
  std::string worst;  // slot and index of the worst coordinate, e.g. "k[3,1]"
};

// Precision of the perturbed loss evaluations. With Double, rounding noise of
// order eps·|L|/h swamps coordinates whose gradient is below about 1e-5.
enum class FdPrecision { Double, Extended };

// Central differences of the loss over every coordinate of q, k, v,
// log_alpha, beta and s0 against kda_backward. Inputs are perturbed in double;
// the losses are evaluated by an independent recurrent loop in the requested
// precision. Value contracts are not enforced while perturbing, so
// coordinates at a bound are differentiated too.
FdReport fd_check(const AttnSequence& seq, const GateSequence& gates, const StateMatrix& s0, LossKind loss,
                  double h = 1e-5, FdPrecision precision = FdPrecision::Extended);

}  // namespace kda
