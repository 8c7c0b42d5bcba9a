#include <gtest/gtest.h>

#include "kda/tasks.hpp"
#include "oracles.hpp"

TEST(Palindrome, WorkedExample) {
  const auto p = kda::palindrome_worked_example();
  EXPECT_EQ(kda::render_tokens(p.tokens, kda::palindrome_symbols()), "O G R S U N E <sep> E N U S R G O");
  EXPECT_EQ(kda::render_targets(p.targets, kda::palindrome_symbols()), "φ φ φ φ φ φ φ φ N U S R G O φ");
}

TEST(Palindrome, SingleToken) {
  const auto p = kda::build_palindrome({5}, 27);
  EXPECT_EQ(p.tokens, (std::vector<int>{5, 0, 5}));
  EXPECT_EQ(p.targets, (std::vector<int>{-1, 5, -1}));
}

TEST(Palindrome, ReplayOracle) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto p = kda::gen_palindrome(1 + seed % 12, 27, seed);
    EXPECT_EQ(oracle::replay_palindrome(p.tokens), p.targets);
  }
}

TEST(Palindrome, Errors) {
  EXPECT_THROW(kda::gen_palindrome(0, 27, 1), kda::ContractError);
  EXPECT_THROW(kda::gen_palindrome(3, 1, 1), kda::ContractError);
}

TEST(Mqar, WorkedExample) {
  const auto m = kda::mqar_worked_example();
  EXPECT_EQ(kda::render_tokens(m.tokens, kda::mqar_symbols()), "A 1 C 3 B 0 M 8 G 5 E 4 <sep> B G");
  EXPECT_EQ(kda::render_targets(m.targets, kda::mqar_symbols()), "φ φ φ φ φ φ φ φ φ φ φ φ φ 0 5");
}

TEST(Mqar, SingleLookup) {
  const auto m = kda::gen_mqar(1, 1, 32, 3);
  ASSERT_EQ(m.tokens.size(), 4u);
  EXPECT_EQ(m.tokens[3], m.tokens[0]);
  EXPECT_EQ(m.targets[3], m.tokens[1]);
  EXPECT_EQ(m.supervised(), 1u);
}

TEST(Mqar, ReplayOracle) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const std::size_t pairs = 1 + seed % 8;
    const auto m = kda::gen_mqar(pairs, 1 + seed % pairs, 32, seed);
    EXPECT_EQ(oracle::replay_mqar(m.tokens), m.targets);
  }
}

TEST(Mqar, Errors) {
  EXPECT_THROW(kda::gen_mqar(3, 4, 32, 1), kda::ContractError);
  EXPECT_THROW(kda::gen_mqar(20, 2, 32, 1), kda::ContractError);
}

TEST(Stack, PushThenPop) {
  const auto s = kda::build_stack({{true, 1, 6}, {false, 1, 0}}, 2, 16);
  EXPECT_EQ(s.targets[4], kda::stack_element_token(2, 6));
  EXPECT_EQ(s.supervised(), 1u);
}

TEST(Stack, LifoOrder) {
  const auto s = kda::build_stack({{true, 0, 4}, {true, 0, 5}, {false, 0, 0}, {false, 0, 0}}, 1, 16);
  EXPECT_EQ(s.targets[7], kda::stack_element_token(1, 5));
  EXPECT_EQ(s.targets[10], kda::stack_element_token(1, 4));
}

TEST(Stack, PopOnEmptyRejected) {
  EXPECT_THROW(kda::build_stack({{false, 0, 0}}, 1, 16), kda::ContractError);
}

TEST(Stack, ManyStacksReplayOracle) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = kda::gen_stack(64, 200, 2 + 64 + 26, seed);
    EXPECT_EQ(oracle::replay_stack(s.tokens, 64), s.targets);
  }
}

TEST(Instances, TokenRangeChecked) {
  kda::TaskInstance bad{{1, 40}, {-1, -1}, 32};
  EXPECT_THROW(kda::check_instance(bad), kda::ContractError);
}
