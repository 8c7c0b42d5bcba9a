#pragma once

#include <cstdint>

namespace kda::census {

// Operation counts used by the kernel instrumentation.
//
// Each thread accumulates into its own slot; `total()` merges every slot that
// has ever been registered (slots outlive their threads), `local()` reads only
// the calling thread's slot. Counting is always on: one relaxed increment per
// counted operation.
struct Counts {
  std::uint64_t matmuls = 0;
  // Positionwise C×C score-matrix constructions inside a chunk (A_qk, A_kk, ...).
  std::uint64_t score_matrices = 0;

  Counts operator-(const Counts& o) const {
    return {matmuls - o.matmuls, score_matrices - o.score_matrices};
  }
  Counts operator+(const Counts& o) const {
    return {matmuls + o.matmuls, score_matrices + o.score_matrices};
  }
  bool operator==(const Counts&) const = default;
};

Counts local();
Counts total();

// Zeroes every registered slot.
void reset();

void count_matmul();
void count_score_matrix();

// Counts accumulated on the calling thread since construction.
class Scope {
 public:
  Scope() : start_(local()) {}
  Counts elapsed() const { return local() - start_; }

 private:
  Counts start_;
};

}  // namespace kda::census
