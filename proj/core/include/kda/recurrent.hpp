#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "kda/sequence.hpp"

namespace kda {

// Token-by-token reference recurrences. With S_0 given (zero when empty) and
// o_t = S_tᵀ q_t:
//
//   LA        S_t = S_{t-1} + k_t v_tᵀ
//   Mamba2    S_t = a_t S_{t-1} + β_t k_t v_tᵀ                   (scalar a_t)
//   GLA       S_t = Diag(α_t) S_{t-1} + k_t v_tᵀ
//   DeltaNet  S_t = (I - β_t k_t k_tᵀ) S_{t-1} + β_t k_t v_tᵀ
//   GDN       S_t = a_t (I - β_t k_t k_tᵀ) S_{t-1} + β_t k_t v_tᵀ  (scalar a_t)
//   KDA       S_t = (I - β_t k_t k_tᵀ) Diag(α_t) S_{t-1} + β_t k_t v_tᵀ
//   DPLR      S_t = (Diag(α_t) - a_t b_tᵀ) S_{t-1} + k_t v_tᵀ
//
// Scalar decays take log a_t as the row of log_alpha when all its entries are
// equal, and as the row mean otherwise.
enum class VariantKind { LA, Mamba2, GLA, DeltaNet, GDN, KDA, DPLR };

std::string_view to_string(VariantKind kind);
std::optional<VariantKind> parse_variant(std::string_view name);
const std::vector<VariantKind>& all_variants();

template <typename T>
struct BasicForwardResult {
  BasicMatrix<T> outputs;      // T×d_v
  BasicMatrix<T> final_state;  // d_k×d_v
};

using ForwardResult = BasicForwardResult<double>;

// LA only; every other variant needs gates and throws ContractError.
template <typename T>
BasicForwardResult<T> recurrent_forward(VariantKind kind, const BasicAttnSequence<T>& seq,
                                        const BasicMatrix<T>& s0 = {});

// Any variant except DPLR.
template <typename T>
BasicForwardResult<T> recurrent_forward(VariantKind kind, const BasicAttnSequence<T>& seq,
                                        const BasicGateSequence<T>& gates, const BasicMatrix<T>& s0 = {});

// DPLR only.
template <typename T>
BasicForwardResult<T> recurrent_forward(VariantKind kind, const BasicAttnSequence<T>& seq,
                                        const BasicDplrGateSequence<T>& gates, const BasicMatrix<T>& s0 = {});

// ‖S_0‖_F + Σ_t β_t ‖v_t‖₂, the bound every running ‖S_t‖_F of the KDA recurrence
// respects when keys are unit-norm, β ∈ [0, 1] and α ∈ (0, 1].
double state_norm_bound(const AttnSequence& seq, const GateSequence& gates, const StateMatrix& s0 = {});

// ‖S_t‖_F for t = 1..T under the KDA recurrence.
std::vector<double> state_norm_trajectory(const AttnSequence& seq, const GateSequence& gates,
                                          const StateMatrix& s0 = {});

}  // namespace kda
