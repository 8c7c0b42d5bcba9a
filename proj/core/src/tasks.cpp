#include "kda/tasks.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "kda/errors.hpp"

namespace kda {

namespace {

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

int symbol_index(const SymbolTable& symbols, const std::string& name) {
  const auto it = std::find(symbols.begin(), symbols.end(), name);
  if (it == symbols.end()) throw ContractError("unknown symbol " + name);
  return static_cast<int>(it - symbols.begin());
}

}  // namespace

std::size_t TaskInstance::supervised() const {
  return static_cast<std::size_t>(std::count_if(targets.begin(), targets.end(), [](int t) { return t != kIgnoreTarget; }));
}

void check_instance(const TaskInstance& inst) {
  if (inst.tokens.size() != inst.targets.size()) throw ContractError("tokens and targets differ in length");
  for (int t : inst.tokens)
    if (t < 0 || t >= inst.vocab_size) throw ContractError("token id out of range");
  for (int t : inst.targets)
    if (t != kIgnoreTarget && (t < 0 || t >= inst.vocab_size)) throw ContractError("target id out of range");
}

TaskInstance build_palindrome(const std::vector<int>& content, int vocab) {
  if (content.empty()) throw ContractError("palindrome needs at least one token");
  if (vocab <= kPalindromeSep + 1) throw ContractError("palindrome vocabulary must exceed the separator id");
  const std::size_t n = content.size();
  TaskInstance inst;
  inst.vocab_size = vocab;
  inst.tokens = content;
  inst.tokens.push_back(kPalindromeSep);
  inst.tokens.insert(inst.tokens.end(), content.rbegin(), content.rend());
  inst.targets.assign(inst.tokens.size(), kIgnoreTarget);
  if (n == 1) {
    inst.targets[1] = content[0];
  } else {
    for (std::size_t t = n + 1; t + 1 < 2 * n + 1; ++t) inst.targets[t] = inst.tokens[t + 1];
  }
  check_instance(inst);
  return inst;
}

TaskInstance gen_palindrome(std::size_t n_tokens, int vocab, std::uint64_t seed) {
  if (n_tokens < 1) throw ContractError("palindrome needs at least one token");
  if (vocab <= kPalindromeSep + 1) throw ContractError("palindrome vocabulary must exceed the separator id");
  std::mt19937_64 rng(seed);
  std::vector<int> content(n_tokens);
  for (auto& x : content) x = uniform_int(rng, 1, vocab - 1);
  return build_palindrome(content, vocab);
}

int mqar_key_count(int vocab) { return (vocab - 1) / 2; }

TaskInstance build_mqar(const std::vector<KeyValue>& pairs, const std::vector<int>& queries, int vocab) {
  TaskInstance inst;
  inst.vocab_size = vocab;
  for (const auto& [k, v] : pairs) {
    inst.tokens.push_back(k);
    inst.tokens.push_back(v);
  }
  inst.targets.assign(inst.tokens.size(), kIgnoreTarget);
  inst.tokens.push_back(kMqarSep);
  inst.targets.push_back(kIgnoreTarget);
  for (int q : queries) {
    const auto it = std::find_if(pairs.rbegin(), pairs.rend(), [&](const KeyValue& kv) { return kv.key == q; });
    if (it == pairs.rend()) throw ContractError("query key is not bound in the context");
    inst.tokens.push_back(q);
    inst.targets.push_back(it->value);
  }
  check_instance(inst);
  return inst;
}

TaskInstance gen_mqar(std::size_t n_pairs, std::size_t n_queries, int vocab, std::uint64_t seed) {
  const int keys = mqar_key_count(vocab);
  if (n_pairs < 1 || n_queries < 1) throw ContractError("MQAR needs at least one pair and one query");
  if (n_queries > n_pairs) throw ContractError("MQAR queries must not exceed pairs");
  if (keys < static_cast<int>(n_pairs) || vocab - 1 - keys < 1) {
    throw ContractError("vocabulary too small for " + std::to_string(n_pairs) + " distinct keys");
  }
  std::mt19937_64 rng(seed);
  std::vector<int> key_pool(static_cast<std::size_t>(keys));
  std::iota(key_pool.begin(), key_pool.end(), 1);
  std::shuffle(key_pool.begin(), key_pool.end(), rng);

  std::vector<KeyValue> pairs(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) pairs[i] = {key_pool[i], uniform_int(rng, keys + 1, vocab - 1)};
  std::vector<std::size_t> order(n_pairs);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> queries(n_queries);
  for (std::size_t i = 0; i < n_queries; ++i) queries[i] = pairs[order[i]].key;
  return build_mqar(pairs, queries, vocab);
}

int stack_id_token(int stack) { return 2 + stack; }
int stack_element_token(int n_stacks, int element) { return 2 + n_stacks + element; }

TaskInstance build_stack(const std::vector<StackOp>& ops, int n_stacks, int vocab) {
  if (n_stacks < 1 || vocab <= 2 + n_stacks) throw ContractError("stack vocabulary must hold the stack ids and elements");
  std::vector<std::vector<int>> stacks(static_cast<std::size_t>(n_stacks));
  TaskInstance inst;
  inst.vocab_size = vocab;
  for (const auto& op : ops) {
    if (op.stack < 0 || op.stack >= n_stacks) throw ContractError("stack index out of range");
    auto& st = stacks[static_cast<std::size_t>(op.stack)];
    int element = op.element;
    if (op.push) {
      st.push_back(element);
    } else {
      if (st.empty()) throw ContractError("pop on an empty stack");
      element = st.back();
      st.pop_back();
    }
    const int token = stack_element_token(n_stacks, element);
    inst.tokens.insert(inst.tokens.end(), {op.push ? kStackPush : kStackPop, stack_id_token(op.stack), token});
    inst.targets.insert(inst.targets.end(), {kIgnoreTarget, op.push ? kIgnoreTarget : token, kIgnoreTarget});
  }
  check_instance(inst);
  return inst;
}

TaskInstance gen_stack(std::size_t n_stacks, std::size_t n_ops, int vocab, std::uint64_t seed) {
  const int s = static_cast<int>(n_stacks);
  if (s < 1 || vocab <= 2 + s) throw ContractError("stack vocabulary must hold the stack ids and elements");
  const int elements = vocab - 2 - s;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> depth(n_stacks, 0);
  std::vector<int> nonempty;
  std::vector<StackOp> ops;
  ops.reserve(n_ops);
  for (std::size_t i = 0; i < n_ops; ++i) {
    nonempty.clear();
    for (int j = 0; j < s; ++j)
      if (depth[static_cast<std::size_t>(j)] > 0) nonempty.push_back(j);
    const bool push = nonempty.empty() || std::bernoulli_distribution(0.5)(rng);
    if (push) {
      const int st = uniform_int(rng, 0, s - 1);
      ops.push_back({true, st, uniform_int(rng, 0, elements - 1)});
      ++depth[static_cast<std::size_t>(st)];
    } else {
      const int st = nonempty[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(nonempty.size()) - 1))];
      ops.push_back({false, st, 0});
      --depth[static_cast<std::size_t>(st)];
    }
  }
  return build_stack(ops, s, vocab);
}

std::string render_tokens(const std::vector<int>& ids, const SymbolTable& symbols) {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += id >= 0 && static_cast<std::size_t>(id) < symbols.size() ? symbols[static_cast<std::size_t>(id)]
                                                                      : "#" + std::to_string(id);
  }
  return out;
}

std::string render_targets(const std::vector<int>& targets, const SymbolTable& symbols) {
  std::string out;
  for (int id : targets) {
    if (!out.empty()) out += ' ';
    out += id == kIgnoreTarget ? "φ" : render_tokens({id}, symbols);
  }
  return out;
}

SymbolTable palindrome_symbols() {
  SymbolTable s{"<sep>"};
  for (char c = 'A'; c <= 'Z'; ++c) s.emplace_back(1, c);
  return s;
}

SymbolTable mqar_symbols() {
  SymbolTable s{"<sep>"};
  for (char c = 'A'; c <= 'Z'; ++c) s.emplace_back(1, c);
  for (char c = '0'; c <= '9'; ++c) s.emplace_back(1, c);
  return s;
}

TaskInstance palindrome_worked_example() {
  const SymbolTable sym = palindrome_symbols();
  std::vector<int> content;
  for (const char* name : {"O", "G", "R", "S", "U", "N", "E"}) content.push_back(symbol_index(sym, name));
  return build_palindrome(content, static_cast<int>(sym.size()));
}

TaskInstance mqar_worked_example() {
  const SymbolTable sym = mqar_symbols();
  std::vector<KeyValue> pairs;
  for (const auto& [k, v] : {std::pair{"A", "1"}, {"C", "3"}, {"B", "0"}, {"M", "8"}, {"G", "5"}, {"E", "4"}}) {
    pairs.push_back({symbol_index(sym, k), symbol_index(sym, v)});
  }
  return build_mqar(pairs, {symbol_index(sym, "B"), symbol_index(sym, "G")}, static_cast<int>(sym.size()));
}

}  // namespace kda
