#include "kda/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kda {

namespace {

double row_log_decay(const Matrix& log_alpha, std::size_t t) {
  const auto row = log_alpha.row(t);
  const bool uniform = std::all_of(row.begin(), row.end(), [&](double x) { return x == row[0]; });
  if (uniform) return row[0];
  double sum = 0;
  for (double x : row) sum += x;
  return sum / static_cast<double>(row.size());
}

// Solves (I + L) X = B for strictly lower L by forward substitution.
Matrix solve_unit_lower(const Matrix& l, const Matrix& b) {
  Matrix x = b;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double lij = l(i, j);
      if (lij == 0.0) continue;
      for (std::size_t c = 0; c < x.cols(); ++c) x(i, c) -= lij * x(j, c);
    }
  }
  return x;
}

Matrix strict(Matrix m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i; j < m.cols(); ++j) m(i, j) = 0.0;
  return m;
}

Matrix inclusive(Matrix m) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j) m(i, j) = 0.0;
  return m;
}

}  // namespace

Matrix parallel_forward(VariantKind kind, const AttnSequence& seq, const GateSequence& gates) {
  if (kind == VariantKind::DPLR) throw ContractError("no parallel form for dplr");
  validate(gates, seq);
  const std::size_t n = seq.length(), dk = seq.key_dim();
  if (n > kParallelMaxLength) {
    throw ContractError("parallel form limited to T <= " + std::to_string(kParallelMaxLength) + ", got " +
                        std::to_string(n));
  }

  // Γ per channel, and the scalar cumulative decay for Mamba2 / GDN.
  Matrix gamma(n, dk);
  std::vector<double> scalar(n);
  for (std::size_t t = 0; t < n; ++t) {
    scalar[t] = (t ? scalar[t - 1] : 0.0) + row_log_decay(gates.log_alpha, t);
    for (std::size_t d = 0; d < dk; ++d) gamma(t, d) = (t ? gamma(t - 1, d) : 0.0) + gates.log_alpha(t, d);
  }
  Matrix q_gamma = seq.q, k_gamma = seq.k, k_over = seq.k;
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t d = 0; d < dk; ++d) {
      q_gamma(t, d) *= std::exp(gamma(t, d));
      k_gamma(t, d) *= std::exp(gamma(t, d));
      k_over(t, d) *= std::exp(-gamma(t, d));
    }

  const Matrix kt = seq.k.transposed();
  Matrix scores, gram;
  switch (kind) {
    case VariantKind::LA:
    case VariantKind::DeltaNet:
      scores = matmul(seq.q, kt);
      gram = matmul(seq.k, kt);
      break;
    case VariantKind::Mamba2:
    case VariantKind::GDN:
      scores = matmul(seq.q, kt);
      gram = matmul(seq.k, kt);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
          const double a = std::exp(scalar[i] - scalar[j]);
          scores(i, j) *= a;
          gram(i, j) *= a;
        }
      break;
    case VariantKind::GLA:
    case VariantKind::KDA:
      scores = matmul(q_gamma, k_over.transposed());
      gram = matmul(k_gamma, k_over.transposed());
      break;
    default:
      break;
  }
  scores = inclusive(std::move(scores));

  Matrix values = seq.v;
  if (kind == VariantKind::LA || kind == VariantKind::GLA) return matmul(scores, values);
  for (std::size_t t = 0; t < n; ++t)
    for (auto& x : values.row(t)) x *= gates.beta[t];
  if (kind == VariantKind::Mamba2) return matmul(scores, values);

  gram = strict(std::move(gram));
  for (std::size_t t = 0; t < n; ++t)
    for (auto& x : gram.row(t)) x *= gates.beta[t];
  return matmul(scores, solve_unit_lower(gram, values));
}

PositionalReport positional_form_check(VariantKind kind, const AttnSequence& seq, const GateSequence& gates) {
  if (kind != VariantKind::GDN && kind != VariantKind::KDA) {
    throw ContractError("positional form is defined for gdn and kda");
  }
  validate(gates, seq);
  const std::size_t n = seq.length(), dk = seq.key_dim(), dv = seq.value_dim();
  if (n > kPositionalMaxLength) {
    throw ContractError("positional form limited to T <= " + std::to_string(kPositionalMaxLength));
  }

  std::vector<Matrix> f(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto k = seq.k.row(j);
    Matrix householder = Matrix::identity(dk);
    for (std::size_t a = 0; a < dk; ++a)
      for (std::size_t b = 0; b < dk; ++b) householder(a, b) -= gates.beta[j] * k[a] * k[b];
    Vector decay(dk);
    for (std::size_t d = 0; d < dk; ++d) {
      decay[d] = std::exp(kind == VariantKind::GDN ? row_log_decay(gates.log_alpha, j) : gates.log_alpha(j, d));
    }
    f[j] = matmul(householder, Matrix::diag(decay));
  }

  const Matrix reference = recurrent_forward(kind, seq, gates).outputs;
  PositionalReport rep;
  Vector o(dv);
  for (std::size_t t = 0; t < n; ++t) {
    std::fill(o.begin(), o.end(), 0.0);
    Matrix prod = Matrix::identity(dk);  // F_t ... F_{i+1}
    for (std::size_t i = t + 1; i-- > 0;) {
      const auto k = seq.k.row(i);
      double s = 0;
      for (std::size_t a = 0; a < dk; ++a) {
        double pk = 0;
        for (std::size_t b = 0; b < dk; ++b) pk += prod(a, b) * k[b];
        s += seq.q(t, a) * pk;
      }
      s *= gates.beta[i];
      for (std::size_t c = 0; c < dv; ++c) o[c] += s * seq.v(i, c);
      prod = matmul(prod, f[i]);
    }
    for (std::size_t c = 0; c < dv; ++c) rep.max_deviation = std::max(rep.max_deviation, std::abs(o[c] - reference(t, c)));
  }
  return rep;
}

Matrix rope_rotation(std::span<const double> theta, long long n) {
  const std::size_t d = 2 * theta.size();
  Matrix r(d, d);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double angle = static_cast<double>(n) * theta[k];
    const double c = std::cos(angle), s = std::sin(angle);
    r(2 * k, 2 * k) = c;
    r(2 * k, 2 * k + 1) = -s;
    r(2 * k + 1, 2 * k) = s;
    r(2 * k + 1, 2 * k + 1) = c;
  }
  return r;
}

RopeReport rope_relative_check(std::span<const double> theta, std::size_t t, std::size_t i) {
  if (t < i) throw ContractError("rope_relative_check requires t >= i");
  const auto tt = static_cast<long long>(t), ii = static_cast<long long>(i);
  const Matrix rt = rope_rotation(theta, tt), ri = rope_rotation(theta, ii);

  RopeReport rep;
  rep.relative = rope_rotation(theta, tt - ii);
  rep.relative_error = max_abs_diff(rep.relative, matmul(rt, ri.transposed()));
  rep.transpose_error = max_abs_diff(matmul(rt.transposed(), ri), rep.relative.transposed());

  const Matrix step = rope_rotation(theta, 1);
  Matrix composed = Matrix::identity(2 * theta.size());
  for (std::size_t s = i; s < t; ++s) composed = matmul(step, composed);
  rep.composition_error = max_abs_diff(composed, rep.relative);
  return rep;
}

}  // namespace kda
