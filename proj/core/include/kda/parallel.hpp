#pragma once

#include <cstddef>
#include <span>

#include "kda/recurrent.hpp"

namespace kda {

inline constexpr std::size_t kParallelMaxLength = 64;
inline constexpr std::size_t kPositionalMaxLength = 32;

// Dense T×T parallel forms with zero initial state, M the inclusive and M⁻
// the strict causal mask, Γ the inclusive cumulative decay and 𝒜 its scalar
// counterpart:
//
//   LA        (QKᵀ ⊙ M) V
//   Mamba2    (QKᵀ ⊙ 𝒜 ⊙ M) Diag(β) V
//   GLA       ((Q⊙Γ)(K/Γ)ᵀ ⊙ M) V
//   DeltaNet  (QKᵀ ⊙ M) (I + Diag(β)(KKᵀ ⊙ M⁻))⁻¹ Diag(β) V
//   GDN       (QKᵀ ⊙ 𝒜 ⊙ M) (I + Diag(β)(KKᵀ ⊙ 𝒜 ⊙ M⁻))⁻¹ Diag(β) V
//   KDA       ((Q⊙Γ)(K/Γ)ᵀ ⊙ M) (I + Diag(β)((K⊙Γ)(K/Γ)ᵀ ⊙ M⁻))⁻¹ Diag(β) V
//
// Γ and 1/Γ are formed literally, so inputs must keep the total log-decay
// within the range of double. Requires T <= kParallelMaxLength.
Matrix parallel_forward(VariantKind kind, const AttnSequence& seq, const GateSequence& gates);

struct PositionalReport {
  double max_deviation = 0;  // max |explicit-product output - recurrent output|
};

// Evaluates o_t = Σ_{i<=t} (q_tᵀ F_t F_{t-1} ... F_{i+1} β_i k_i) v_i with
// F_j = (I - β_j k_j k_jᵀ) A_j by explicit d_k×d_k products and compares it
// with the recurrent output. `kind` is GDN (A_j scalar) or KDA (A_j diagonal).
// Requires T <= kPositionalMaxLength.
PositionalReport positional_form_check(VariantKind kind, const AttnSequence& seq, const GateSequence& gates);

struct RopeReport {
  double relative_error = 0;     // max |R_{t-i} - R_t R_iᵀ|
  double transpose_error = 0;    // max |R_tᵀ R_i - R_{t-i}ᵀ|
  double composition_error = 0;  // max |R_1^{t-i} - R_{t-i}|, R_1 applied t-i times
  Matrix relative;               // R_{t-i}
};

// Block-diagonal rotation with angle n·θ_k in block k.
Matrix rope_rotation(std::span<const double> theta, long long n);

RopeReport rope_relative_check(std::span<const double> theta, std::size_t t, std::size_t i);

}  // namespace kda
