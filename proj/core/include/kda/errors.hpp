#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kda {

// Operand dimensions do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A documented precondition was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A computation produced a non-finite value or hit a singular pivot.
// `step()` is the token / row index at which it was detected, or npos.
class NumericError : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit NumericError(const std::string& what, std::size_t step = npos)
      : std::runtime_error(step == npos ? what : what + " at step " + std::to_string(step)),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace kda
