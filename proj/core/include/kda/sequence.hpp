#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "kda/tensor.hpp"

namespace kda {

// Per-head query/key/value streams. Row t of each matrix is token t.
template <typename T>
struct BasicAttnSequence {
  BasicMatrix<T> q;  // T×d_k
  BasicMatrix<T> k;  // T×d_k
  BasicMatrix<T> v;  // T×d_v

  std::size_t length() const noexcept { return q.rows(); }
  std::size_t key_dim() const noexcept { return q.cols(); }
  std::size_t value_dim() const noexcept { return v.cols(); }
};

// Per-token channel-wise log-decay (entries <= 0) and scalar write strength in [0, 1].
// Decays are stored as logs so that within-chunk products become sums.
template <typename T>
struct BasicGateSequence {
  BasicMatrix<T> log_alpha;  // T×d_k
  std::vector<T> beta;       // T
};

// Gates of the general DPLR transition Diag(exp(log_alpha_t)) - a_t b_tᵀ.
template <typename T>
struct BasicDplrGateSequence {
  BasicMatrix<T> log_alpha;  // T×d_k
  BasicMatrix<T> a;          // T×d_k
  BasicMatrix<T> b;          // T×d_k
};

using AttnSequence = BasicAttnSequence<double>;
using GateSequence = BasicGateSequence<double>;
using DplrGateSequence = BasicDplrGateSequence<double>;

// The d_k×d_v fast-weight memory.
using StateMatrix = Matrix;

inline constexpr double kNormalizedTolerance = 1e-6;

template <typename T>
void validate(const BasicAttnSequence<T>& seq);

// Shapes must match `seq`; log_alpha <= 0 and beta in [0, 1].
template <typename T>
void validate(const BasicGateSequence<T>& gates, const BasicAttnSequence<T>& seq);

template <typename T>
void validate(const BasicDplrGateSequence<T>& gates, const BasicAttnSequence<T>& seq);

// Every row of q and k has unit Euclidean norm within `tol`.
template <typename T>
bool is_normalized(const BasicAttnSequence<T>& seq, double tol = kNormalizedTolerance);

// Appends `pad` tokens with q = k = v = 0, beta = 0 and log_alpha = 0, which are exact
// no-ops of the gated delta recurrence.
template <typename T>
void append_noop_tokens(BasicAttnSequence<T>& seq, BasicGateSequence<T>& gates, std::size_t pad);

template <typename T>
void append_noop_tokens(BasicAttnSequence<T>& seq, BasicDplrGateSequence<T>& gates, std::size_t pad);

template <typename T>
struct BasicDplrInstance {
  BasicAttnSequence<T> seq;
  BasicDplrGateSequence<T> gates;
};

using DplrInstance = BasicDplrInstance<double>;

// The DPLR instance that reproduces a KDA instance: a_t = beta_t k_t, b_t = k_t ⊙ alpha_t.
// The DPLR write term carries no beta, so values are scaled to beta_t v_t.
template <typename T>
BasicDplrInstance<T> dplr_from_kda(const BasicAttnSequence<T>& seq, const BasicGateSequence<T>& gates);

// ---------------------------------------------------------------------------
// Seeded random instances for tests, verification suites and benchmarks.

struct InstanceSpec {
  std::size_t length = 64;
  std::size_t key_dim = 16;
  std::size_t value_dim = 16;
  bool normalized = true;      // unit-norm q and k rows
  double log_alpha_min = -8.0; // generator clamp on per-step log decay
  double log_alpha_max = 0.0;
  double beta_min = 0.0;
  double beta_max = 1.0;
  bool random_initial_state = false;
};

struct Instance {
  AttnSequence seq;
  GateSequence gates;
  StateMatrix s0;
};

Instance make_instance(const InstanceSpec& spec, std::uint64_t seed);

}  // namespace kda
