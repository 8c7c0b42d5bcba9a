#pragma once

#include <cstddef>
#include <cstdint>

#include "kda/census.hpp"
#include "kda/chunkwise.hpp"

namespace kda {

// Chunkwise forward of the general DPLR recurrence
//
//   S_t = Diag(α_t) S_{t-1} - a_t (b_tᵀ S_{t-1}) + k_t v_tᵀ.
//
// Inside a chunk the unknown read-outs x_rᵀ = -b_rᵀ S_{r-1} solve a unit
// lower-triangular system, which needs four positionwise score matrices
// (b·a and b·k with the strict exclusive decay, q·a and q·k with the inclusive
// one) against the two of KDA. With g the inclusive and g⁻ the exclusive
// cumulative log-decay:
//
//   T  = I + StrictTril(B a-scores),  U' = T⁻¹ (A_bk V),  W' = T⁻¹ (exp(g⁻)⊙B)
//   X  = -(U' + W' S)
//   O  = (exp(g)⊙Q) S + A_qk V + A_qa X
//   S  = Diag(γ_C) S + (Γ^{→C}⊙K)ᵀ V + (Γ^{→C}⊙A)ᵀ X
//
// The right-hand side of the state update always reads the state from before
// the update. Phase one is per-chunk independent, as in chunk_forward.
template <typename T>
BasicChunkForwardResult<T> dplr_chunk_forward(const BasicAttnSequence<T>& seq, const BasicDplrGateSequence<T>& gates,
                                              const BasicMatrix<T>& s0, const ChunkPlan& plan,
                                              const ChunkOptions& options = {});

struct MatmulCensus {
  std::size_t num_chunks = 0;
  census::Counts kda;
  census::Counts dplr;

  std::uint64_t kda_score_matrices_per_chunk() const { return num_chunks ? kda.score_matrices / num_chunks : 0; }
  std::uint64_t dplr_score_matrices_per_chunk() const { return num_chunks ? dplr.score_matrices / num_chunks : 0; }
};

// Runs chunk_forward and dplr_chunk_forward (through the KDA substitution) on
// the same seeded instance and reports what each counted on this thread.
MatmulCensus matmul_census(std::size_t length, std::size_t chunk_size, std::size_t key_dim, std::size_t value_dim,
                           std::uint64_t seed = 0);

}  // namespace kda
