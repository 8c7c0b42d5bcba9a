#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "kda/census.hpp"
#include "kda/tensor.hpp"
#include "oracles.hpp"

using kda::LowerTriangular;
using kda::Mask;
using kda::Matrix;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Matrix m(r, c);
  for (auto& x : m.data()) x = n(rng);
  return m;
}

Matrix random_unit_lower(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Matrix m = Matrix::identity(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) m(i, j) = u(rng);
  return m;
}

}  // namespace

TEST(Matmul, IdentityAndHandExample) {
  const Matrix a{{1, 2}, {3, 4}};
  EXPECT_EQ(kda::matmul(Matrix::identity(2), a), a);
  EXPECT_EQ(kda::matmul(a, Matrix{{0}, {1}}), (Matrix{{2}, {4}}));
}

TEST(Matmul, MatchesTripleLoopExactly) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix a = random_matrix(8, 8, rng), b = random_matrix(8, 8, rng);
    EXPECT_EQ(kda::matmul(a, b), oracle::naive_matmul(a, b));
  }
}

TEST(Matmul, TransposedLeftOperand) {
  std::mt19937_64 rng(2);
  const Matrix a = random_matrix(5, 3, rng), b = random_matrix(5, 4, rng);
  EXPECT_LT(kda::max_abs_diff(kda::matmul_tn(a, b), oracle::naive_matmul(a.transposed(), b)), 1e-14);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(kda::matmul(Matrix(2, 3), Matrix(2, 3)), kda::ShapeError);
}

TEST(Matmul, Associativity) {
  std::mt19937_64 rng(3);
  for (std::size_t n : {4u, 16u, 64u}) {
    const Matrix a = random_matrix(n, n, rng), b = random_matrix(n, n, rng), c = random_matrix(n, n, rng);
    const Matrix l = kda::matmul(kda::matmul(a, b), c), r = kda::matmul(a, kda::matmul(b, c));
    EXPECT_LT(kda::max_abs_diff(l, r) / kda::max_abs(l), 1e-10);
  }
}

TEST(Census, CountsEveryMatmul) {
  kda::census::Scope scope;
  const Matrix a = Matrix::identity(3);
  for (int i = 0; i < 17; ++i) kda::matmul(a, a);
  EXPECT_EQ(scope.elapsed().matmuls, 17u);
}

TEST(Census, MergesAcrossThreads) {
  kda::census::reset();
  auto work = [] {
    const Matrix a = Matrix::identity(2);
    for (int i = 0; i < 5; ++i) kda::matmul(a, a);
  };
  std::thread t1(work), t2(work);
  t1.join();
  t2.join();
  work();
  EXPECT_EQ(kda::census::total().matmuls, 15u);
}

TEST(TrilInverse, ClosedForms) {
  const LowerTriangular id(Matrix::identity(4));
  EXPECT_EQ(kda::tril_inverse_unit(id).matrix(), Matrix::identity(4));
  const LowerTriangular l(Matrix{{1, 0}, {-0.5, 1}});
  EXPECT_EQ(kda::tril_inverse_unit(l).matrix(), (Matrix{{1, 0}, {0.5, 1}}));
}

TEST(TrilInverse, MultiplyBackAndInvolution) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix m = random_unit_lower(16, rng);
    const auto inv = kda::tril_inverse_unit(LowerTriangular(m));
    EXPECT_LT(kda::max_abs_diff(oracle::naive_matmul(m, inv.matrix()), Matrix::identity(16)), 1e-12);
    EXPECT_LT(kda::max_abs_diff(kda::tril_inverse_unit(inv).matrix(), m), 1e-12);
  }
}

TEST(TrilInverse, RejectsNonUnitDiagonal) {
  EXPECT_THROW(kda::tril_inverse_unit(LowerTriangular(Matrix{{2, 0}, {0, 1}})), kda::ContractError);
}

TEST(LowerTriangularType, RejectsUpperEntries) {
  EXPECT_ANY_THROW(LowerTriangular(Matrix{{1, 1}, {0, 1}}));
}

TEST(Masked, Definitions) {
  EXPECT_EQ(kda::masked(Matrix::identity(3), Mask::Tril), Matrix::identity(3));
  EXPECT_EQ(kda::masked(Matrix::identity(3), Mask::StrictTril), Matrix(3, 3));
  EXPECT_EQ(kda::masked(Matrix(3, 3, 1.0), Mask::StrictTril), (Matrix{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}}));
  EXPECT_THROW(kda::masked(Matrix(2, 3), Mask::Tril), kda::ShapeError);
}

TEST(Cumsum, RowsRange) {
  const Matrix m{{1, 2}, {3, 4}, {5, 6}};
  EXPECT_EQ(kda::cumsum_rows(m, 1, 2), (Matrix{{3, 4}, {8, 10}}));
}

TEST(CheckedMode, RejectsNonFinite) {
  kda::CheckedModeGuard on(true);
  EXPECT_ANY_THROW(Matrix(1, 1, std::vector<double>{std::nan("")}));
}
