#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace kda {

inline constexpr int kIgnoreTarget = -1;

// One supervised sequence. targets[t] is kIgnoreTarget where nothing is predicted.
struct TaskInstance {
  std::vector<int> tokens;
  std::vector<int> targets;
  int vocab_size = 0;

  std::size_t supervised() const;
};

// Throws ContractError if the lengths differ or an id is out of range.
void check_instance(const TaskInstance& inst);

// ---------------------------------------------------------------------------
// Palindrome: id 0 is <sep>, content ids are 1..vocab-1.
// Layout: x_1..x_n <sep> x_n..x_1. Position t in [n+1, 2n-1] predicts token t+1;
// the last position is unsupervised. With n == 1 the <sep> position predicts x_1.

inline constexpr int kPalindromeSep = 0;

TaskInstance build_palindrome(const std::vector<int>& content, int vocab);
TaskInstance gen_palindrome(std::size_t n_tokens, int vocab, std::uint64_t seed);

// ---------------------------------------------------------------------------
// MQAR: id 0 is <sep>; keys are 1..K with K = (vocab-1)/2, values K+1..vocab-1.
// Layout: k_1 v_1 ... k_n v_n <sep> q_1 ... q_m; each query position is
// supervised with the value bound to its key.

inline constexpr int kMqarSep = 0;

struct KeyValue {
  int key;
  int value;
};

int mqar_key_count(int vocab);

TaskInstance build_mqar(const std::vector<KeyValue>& pairs, const std::vector<int>& queries, int vocab);
TaskInstance gen_mqar(std::size_t n_pairs, std::size_t n_queries, int vocab, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Stack: id 0 is <push>, 1 is <pop>, 2..S+1 are stack ids, the rest are
// elements. Every operation is a three-token record: "<push> s e" pushes e on
// stack s; "<pop> s e" pops e from stack s. The stack-id position of a pop
// record is supervised with the popped element.

inline constexpr int kStackPush = 0;
inline constexpr int kStackPop = 1;

struct StackOp {
  bool push;
  int stack;    // 0-based stack index
  int element;  // 0-based element index; ignored for pops
};

int stack_id_token(int stack);
int stack_element_token(int n_stacks, int element);

// Pops on an empty stack throw ContractError.
TaskInstance build_stack(const std::vector<StackOp>& ops, int n_stacks, int vocab);
TaskInstance gen_stack(std::size_t n_stacks, std::size_t n_ops, int vocab, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Rendering with a symbol table (one name per id); ignored targets print as φ.

using SymbolTable = std::vector<std::string>;

std::string render_tokens(const std::vector<int>& ids, const SymbolTable& symbols);
std::string render_targets(const std::vector<int>& targets, const SymbolTable& symbols);

// Symbols for "<sep>", then A..Z.
SymbolTable palindrome_symbols();
// Symbols for "<sep>", keys A..Z, then values 0..9 (vocab 37).
SymbolTable mqar_symbols();

// The worked examples shown in the task descriptions.
TaskInstance palindrome_worked_example();
TaskInstance mqar_worked_example();

}  // namespace kda
