#include "kda/census.hpp"

#include <atomic>
#include <memory>
#include <mutex>
#include <vector>

namespace kda::census {
namespace {

struct Slot {
  std::atomic<std::uint64_t> matmuls{0};
  std::atomic<std::uint64_t> score_matrices{0};
};

struct Registry {
  std::mutex mu;
  std::vector<std::shared_ptr<Slot>> slots;
};

Registry& registry() {
  static Registry r;
  return r;
}

Slot& this_thread_slot() {
  thread_local std::shared_ptr<Slot> slot = [] {
    auto s = std::make_shared<Slot>();
    auto& reg = registry();
    std::lock_guard lock(reg.mu);
    reg.slots.push_back(s);
    return s;
  }();
  return *slot;
}

Counts read(const Slot& s) {
  return {s.matmuls.load(std::memory_order_relaxed), s.score_matrices.load(std::memory_order_relaxed)};
}

}  // namespace

Counts local() { return read(this_thread_slot()); }

Counts total() {
  auto& reg = registry();
  std::lock_guard lock(reg.mu);
  Counts sum;
  for (const auto& s : reg.slots) sum = sum + read(*s);
  return sum;
}

void reset() {
  auto& reg = registry();
  std::lock_guard lock(reg.mu);
  for (auto& s : reg.slots) {
    s->matmuls.store(0, std::memory_order_relaxed);
    s->score_matrices.store(0, std::memory_order_relaxed);
  }
}

void count_matmul() { this_thread_slot().matmuls.fetch_add(1, std::memory_order_relaxed); }

void count_score_matrix() { this_thread_slot().score_matrices.fetch_add(1, std::memory_order_relaxed); }

}  // namespace kda::census
