#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kda/recurrent.hpp"

namespace kda {

// Split of a length-T sequence into `num_chunks` chunks of `chunk_size`
// tokens; the last `pad` tokens of the padded sequence are no-op tokens.
struct ChunkPlan {
  std::size_t chunk_size = 64;
  std::size_t num_chunks = 0;
  std::size_t pad = 0;

  static ChunkPlan for_length(std::size_t length, std::size_t chunk_size);

  std::size_t padded_length() const noexcept { return chunk_size * num_chunks; }
  std::size_t length() const noexcept { return padded_length() - pad; }

  // Throws ContractError unless C >= 1, pad < C and the plan covers `length` tokens.
  void check(std::size_t length) const;
};

// Intra-chunk quantities of one chunk.
template <typename T>
struct BasicChunkScratch {
  BasicMatrix<T> gamma_cum;  // C×d_k, inclusive cumulative log-decay within the chunk
  BasicMatrix<T> a_inv;      // C×C, (I + StrictTril(Diag(β)(Γ⊙K)(K/Γ)ᵀ))⁻¹
  BasicMatrix<T> m_ut;       // C×C, a_inv · Diag(β)
  BasicMatrix<T> w;          // C×d_k
  BasicMatrix<T> u;          // C×d_v
};

using ChunkScratch = BasicChunkScratch<double>;

template <typename T>
struct BasicChunkForwardResult {
  BasicMatrix<T> outputs;      // T×d_v, padding removed
  BasicMatrix<T> final_state;  // d_k×d_v
  std::vector<BasicChunkScratch<T>> scratch_trace;  // one per chunk when requested
};

using ChunkForwardResult = BasicChunkForwardResult<double>;

struct ChunkOptions {
  bool keep_scratch = false;
  // Threads used for phase one (per-chunk factors). The state sweep is always sequential.
  std::size_t workers = 1;
};

// Chunkwise-parallel KDA forward.
//
// Phase one builds, for every chunk independently, the cumulative decay, the
// two score matrices (query-key and key-key, assembled positionwise as
// exp(g_i - g_j) for i >= j so no factor exceeds one), the UT transform and the
// WY factors W = M (Γ⊙K), U = M V. Chunks may be processed in any order or
// concurrently. Phase two sweeps the chunks in order:
//
//   V' = U - W S
//   O  = (Γ⊙Q) S + Tril((Γ⊙Q)(K/Γ)ᵀ) V'
//   S  = Diag(γ_C) S + (Γ^{→C} ⊙ K)ᵀ V'
//
// where Γ^{→C} is the decay from each position to the end of the chunk.
template <typename T>
BasicChunkForwardResult<T> chunk_forward(const BasicAttnSequence<T>& seq, const BasicGateSequence<T>& gates,
                                         const BasicMatrix<T>& s0, const ChunkPlan& plan,
                                         const ChunkOptions& options = {});

template <typename T>
struct BasicWyFactors {
  BasicMatrix<T> w;
  BasicMatrix<T> u;
  BasicMatrix<T> m_ut;
  BasicMatrix<T> a_inv;
};

using WyFactors = BasicWyFactors<double>;

// WY factors of one chunk from its keys, values, write strengths and inclusive
// cumulative log-decay.
template <typename T>
BasicWyFactors<T> wy_factors(const BasicMatrix<T>& chunk_k, const BasicMatrix<T>& chunk_v,
                             std::span<const T> chunk_beta, const BasicMatrix<T>& gamma_cum);

// StrictTril(Diag(β)(Γ⊙K)(K/Γ)ᵀ), built positionwise. Counts one score matrix.
template <typename T>
BasicMatrix<T> key_key_scores(const BasicMatrix<T>& chunk_k, std::span<const T> chunk_beta,
                              const BasicMatrix<T>& gamma_cum);

// Tril((Γ⊙Q)(K/Γ)ᵀ), built positionwise. Counts one score matrix.
template <typename T>
BasicMatrix<T> query_key_scores(const BasicMatrix<T>& chunk_q, const BasicMatrix<T>& chunk_k,
                                const BasicMatrix<T>& gamma_cum);

// One chunk of inputs for the verification helpers below.
struct ChunkInputs {
  Matrix k;          // C×d_k
  Matrix v;          // C×d_v
  Vector beta;       // C
  Matrix log_alpha;  // C×d_k
};

ChunkInputs chunk_inputs(const AttnSequence& seq, const GateSequence& gates, std::size_t first, std::size_t count);

struct PropositionReport {
  std::size_t position = 0;  // r, 1-based
  double p_error = 0;        // max |explicit P_r - WY form of P_r|
  double h_error = 0;        // max |explicit H_r - WY form of H_r|
};

// Compares the explicitly accumulated transition product
//   P_r = ∏_{i<=r} (I - β_i k_i k_iᵀ) Diag(α_i)
// and the explicitly accumulated write term H_r against their WY forms
//   Diag(γ_r) - Σ Diag(γ^{i→r}) k_i w_iᵀ   and   Σ Diag(γ^{i→r}) k_i u_iᵀ,
// with w, u taken from wy_factors. Requires 1 <= r <= C <= 16.
PropositionReport wy_verify_propositions(const ChunkInputs& chunk, std::size_t r);

struct UtReport {
  // True when some β is zero and the identity was checked in factored form.
  bool factored = false;
  // All β > 0: max |M (Diag(β)⁻¹ + N) - I|. Otherwise max |a_inv (I + Diag(β) N) - I|.
  double identity_error = 0;
  // max |M - a_inv Diag(β)|.
  double factor_error = 0;
};

// Checks the UT transform of one chunk; N is the strictly-lower key-key score matrix without β.
UtReport ut_verify(const ChunkInputs& chunk);

}  // namespace kda
