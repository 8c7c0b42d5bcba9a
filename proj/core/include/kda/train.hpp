#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "kda/tasks.hpp"
#include "kda/tensor.hpp"

namespace kda {

enum class OptimizerKind { SGD, Adam };

struct TrainConfig {
  std::size_t embed_dim = 32;
  std::size_t key_dim = 32;
  std::size_t value_dim = 32;
  double learning_rate = 3e-3;
  std::size_t steps = 1000;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;
  // Held-out instances drawn once for the evaluation loss (generator streams only).
  std::size_t eval_size = 64;
  // Record a curve point every `log_every` steps (and at the last step).
  std::size_t log_every = 1;

  // Throws ContractError on zero dims, zero steps or zero batch.
  void check() const;
};

// Source of training batches. A fixed stream returns the same instances on
// every step; a generator stream draws fresh instances from the trainer's rng.
class TaskStream {
 public:
  using Generator = std::function<TaskInstance(std::mt19937_64&)>;

  static TaskStream fixed(std::vector<TaskInstance> instances);
  static TaskStream generator(int vocab_size, Generator gen);

  bool is_fixed() const noexcept { return !gen_; }
  int vocab_size() const noexcept { return vocab_; }
  const std::vector<TaskInstance>& fixed_instances() const noexcept { return fixed_; }

  // The fixed instances (cycled to `size`), or `size` fresh draws.
  std::vector<TaskInstance> batch(std::size_t size, std::mt19937_64& rng) const;

 private:
  std::vector<TaskInstance> fixed_;
  Generator gen_;
  int vocab_ = 0;
};

struct CurvePoint {
  std::size_t step = 0;  // 1-based
  double loss = 0;       // masked cross-entropy of the step's batch, before the update
  double masked_accuracy = 0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  // Masked cross-entropy and accuracy on the evaluation set (the fixed set
  // itself for fixed streams) before the first and after the last update.
  double initial_eval_loss = 0;
  double final_eval_loss = 0;
  double final_eval_accuracy = 0;
};

// Embedding → one KDA head (q, k = L2Norm(Swish(ShortConv(xW))),
// v = Swish(ShortConv(xW_v)), log α = -softplus(xW_α + b_α), β = Sigmoid(xw_β + b_β))
// → linear readout → masked cross-entropy. Single-threaded and bitwise
// deterministic for a given seed. A non-finite loss throws NumericError with the step.
TrainResult train_toy(const TaskStream& stream, const TrainConfig& cfg);

}  // namespace kda
