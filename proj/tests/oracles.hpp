#pragma once

// Reference implementations written independently of the library kernels.
// They favour the most literal form of each definition over speed.

#include <cstdint>
#include <vector>

#include "kda/chunkwise.hpp"
#include "kda/recurrent.hpp"
#include "kda/tasks.hpp"

namespace oracle {

using kda::Matrix;

Matrix naive_matmul(const Matrix& a, const Matrix& b);

// Builds each transition matrix explicitly and applies S = A S + w k vᵀ.
kda::ForwardResult dense_forward(kda::VariantKind kind, const kda::AttnSequence& seq, const kda::GateSequence& gates,
                                 const Matrix& s0 = {});
kda::ForwardResult dense_dplr(const kda::AttnSequence& seq, const kda::DplrGateSequence& gates, const Matrix& s0 = {});

// Rank-one KDA recurrence in extended precision, returning Σ o (linear) or ½ Σ o² (squared).
long double kda_loss_extended(const kda::AttnSequence& seq, const kda::GateSequence& gates, const Matrix& s0,
                              bool squared);

struct Wy {
  Matrix w;
  Matrix u;
};

// w and u by their position-by-position recurrences, decay ratios from explicit products of α.
Wy wy_loop(const kda::ChunkInputs& chunk);

// Explicit transition product and write term over the first r positions of a chunk.
Matrix explicit_product(const kda::ChunkInputs& chunk, std::size_t r);
Matrix explicit_write(const kda::ChunkInputs& chunk, std::size_t r);

// Reconstructs the targets of a task instance from its tokens alone.
std::vector<int> replay_palindrome(const std::vector<int>& tokens);
std::vector<int> replay_mqar(const std::vector<int>& tokens);
std::vector<int> replay_stack(const std::vector<int>& tokens, int n_stacks);

__extension__ using u128 = unsigned __int128;
u128 flops_kda(std::uint64_t t, std::uint64_t c, std::uint64_t d);
u128 flops_attn(std::uint64_t t, std::uint64_t d);

// out[t][c] = Σ_j kernels[c][j] · x[t - 3 + j][c], zero before the start.
Matrix direct_conv(const Matrix& x, const Matrix& kernels);

kda::Instance random_instance(std::size_t t, std::size_t dk, std::size_t dv, std::uint64_t seed,
                              bool random_state = false);

}  // namespace oracle
