#include "kda/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "kda/recurrent.hpp"

namespace kda {

namespace {

// One forward step on `s` in place; also returns S̃ and e when requested.
void step(Matrix& s, const AttnSequence& seq, const GateSequence& gates, std::size_t t, Matrix* s_tilde, Vector* e) {
  const std::size_t dk = s.rows(), dv = s.cols();
  const auto k = seq.k.row(t);
  const auto v = seq.v.row(t);
  for (std::size_t i = 0; i < dk; ++i) {
    const double a = std::exp(gates.log_alpha(t, i));
    for (auto& x : s.row(i)) x *= a;
  }
  if (s_tilde) *s_tilde = s;
  Vector err(v.begin(), v.end());
  for (std::size_t i = 0; i < dk; ++i)
    for (std::size_t j = 0; j < dv; ++j) err[j] -= s(i, j) * k[i];
  const double beta = gates.beta[t];
  for (std::size_t i = 0; i < dk; ++i)
    for (std::size_t j = 0; j < dv; ++j) s(i, j) += beta * k[i] * err[j];
  if (e) *e = std::move(err);
}

// Loss of the KDA recurrence accumulated in R.
template <typename R>
R recurrent_loss(LossKind kind, const AttnSequence& seq, const GateSequence& gates, const StateMatrix& s0) {
  const std::size_t n = seq.length(), dk = seq.key_dim(), dv = seq.value_dim();
  std::vector<R> s(s0.data().begin(), s0.data().end()), e(dv);
  R loss = 0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < dk; ++i) {
      const R a = std::exp(static_cast<R>(gates.log_alpha(t, i)));
      for (std::size_t j = 0; j < dv; ++j) s[i * dv + j] *= a;
    }
    for (std::size_t j = 0; j < dv; ++j) e[j] = seq.v(t, j);
    for (std::size_t i = 0; i < dk; ++i)
      for (std::size_t j = 0; j < dv; ++j) e[j] -= s[i * dv + j] * static_cast<R>(seq.k(t, i));
    for (std::size_t i = 0; i < dk; ++i) {
      const R bk = static_cast<R>(gates.beta[t]) * static_cast<R>(seq.k(t, i));
      for (std::size_t j = 0; j < dv; ++j) s[i * dv + j] += bk * e[j];
    }
    for (std::size_t j = 0; j < dv; ++j) {
      R o = 0;
      for (std::size_t i = 0; i < dk; ++i) o += s[i * dv + j] * static_cast<R>(seq.q(t, i));
      loss += kind == LossKind::Linear ? o : o * o / 2;
    }
  }
  return loss;
}

}  // namespace

KdaGradients kda_backward(const AttnSequence& seq, const GateSequence& gates, const StateMatrix& s0,
                          const Matrix& upstream) {
  validate(gates, seq);
  const std::size_t n = seq.length(), dk = seq.key_dim(), dv = seq.value_dim();
  if (upstream.rows() != n || upstream.cols() != dv) throw ShapeError("upstream must be " + shape_string(n, dv));
  Matrix s = s0.empty() ? Matrix(dk, dv) : s0;
  if (s.rows() != dk || s.cols() != dv) throw ShapeError("initial state must be " + shape_string(dk, dv));

  const std::size_t seg = n <= kFullCacheMaxLength ? 1 : kRecomputeSegment;
  std::vector<Matrix> checkpoints;  // state before step c·seg
  for (std::size_t t = 0; t < n; ++t) {
    if (t % seg == 0) checkpoints.push_back(s);
    step(s, seq, gates, t, nullptr, nullptr);
  }

  KdaGradients g{Matrix(n, dk), Matrix(n, dk), Matrix(n, dv), Matrix(n, dk), Vector(n), Matrix(dk, dv)};
  Matrix ds(dk, dv);
  std::vector<Matrix> states;  // states[j] = state before step first + j
  Matrix s_tilde, s_t;
  Vector e, de(dv);

  for (std::size_t c = checkpoints.size(); c-- > 0;) {
    const std::size_t first = c * seg, last = std::min(n, first + seg);
    states.assign(1, checkpoints[c]);
    for (std::size_t t = first; t + 1 < last; ++t) {
      states.push_back(states.back());
      step(states.back(), seq, gates, t, nullptr, nullptr);
    }
    for (std::size_t t = last; t-- > first;) {
      s_t = states[t - first];
      step(s_t, seq, gates, t, &s_tilde, &e);
      const auto q = seq.q.row(t);
      const auto k = seq.k.row(t);
      const auto d_o = upstream.row(t);
      const double beta = gates.beta[t];

      for (std::size_t i = 0; i < dk; ++i) {
        double acc = 0;
        for (std::size_t j = 0; j < dv; ++j) {
          ds(i, j) += q[i] * d_o[j];
          acc += s_t(i, j) * d_o[j];
        }
        g.d_q(t, i) = acc;
      }

      std::fill(de.begin(), de.end(), 0.0);
      for (std::size_t i = 0; i < dk; ++i)
        for (std::size_t j = 0; j < dv; ++j) de[j] += ds(i, j) * k[i];
      for (auto& x : de) x *= beta;
      for (std::size_t j = 0; j < dv; ++j) g.d_v(t, j) = de[j];

      double d_beta = 0;
      for (std::size_t i = 0; i < dk; ++i) {
        double ds_e = 0, st_de = 0;
        for (std::size_t j = 0; j < dv; ++j) {
          ds_e += ds(i, j) * e[j];
          st_de += s_tilde(i, j) * de[j];
        }
        d_beta += k[i] * ds_e;
        g.d_k(t, i) = beta * ds_e - st_de;
      }
      g.d_beta[t] = d_beta;

      for (std::size_t i = 0; i < dk; ++i) {
        const double a = std::exp(gates.log_alpha(t, i));
        double dla = 0;
        for (std::size_t j = 0; j < dv; ++j) {
          const double dst = ds(i, j) - k[i] * de[j];
          dla += dst * s_tilde(i, j);
          ds(i, j) = a * dst;
        }
        g.d_log_alpha(t, i) = dla;
      }
      if (!std::isfinite(d_beta) || !ds.all_finite()) throw NumericError("non-finite adjoint in KDA backward", t);
    }
  }
  g.d_s0 = std::move(ds);
  return g;
}

double loss_value(LossKind kind, const Matrix& outputs) {
  double acc = 0;
  for (double x : outputs.data()) acc += kind == LossKind::Linear ? x : 0.5 * x * x;
  return acc;
}

Matrix loss_gradient(LossKind kind, const Matrix& outputs) {
  return kind == LossKind::Linear ? Matrix(outputs.rows(), outputs.cols(), 1.0) : outputs;
}

FdReport fd_check(const AttnSequence& seq, const GateSequence& gates, const StateMatrix& s0, LossKind loss, double h,
                  FdPrecision precision) {
  validate(gates, seq);
  const std::size_t dk = seq.key_dim(), dv = seq.value_dim();
  const StateMatrix start = s0.empty() ? StateMatrix(dk, dv) : s0;
  const auto fwd = recurrent_forward(VariantKind::KDA, seq, gates, start);
  const KdaGradients g = kda_backward(seq, gates, start, loss_gradient(loss, fwd.outputs));

  CheckedModeGuard unchecked(false);
  AttnSequence xs = seq;
  GateSequence xg = gates;
  StateMatrix xs0 = start;
  auto eval = [&]() -> long double {
    if (precision == FdPrecision::Double) return recurrent_loss<double>(loss, xs, xg, xs0);
    return recurrent_loss<long double>(loss, xs, xg, xs0);
  };

  FdReport rep;
  auto probe = [&](double& x, double analytic, const std::string& label) {
    const double saved = x;
    x = saved + h;
    const double x_up = x;
    const long double up = eval();
    x = saved - h;
    const double x_down = x;
    const long double down = eval();
    x = saved;
    const auto numeric = static_cast<double>((up - down) / static_cast<long double>(x_up - x_down));
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    if (rep.coordinates++ == 0 || rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst = label;
    }
  };
  auto sweep = [&](Matrix& m, const Matrix& grad, const char* name) {
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c)
        probe(m(r, c), grad(r, c), std::string(name) + "[" + std::to_string(r) + "," + std::to_string(c) + "]");
  };
  sweep(xs.q, g.d_q, "q");
  sweep(xs.k, g.d_k, "k");
  sweep(xs.v, g.d_v, "v");
  sweep(xg.log_alpha, g.d_log_alpha, "log_alpha");
  for (std::size_t t = 0; t < xg.beta.size(); ++t) probe(xg.beta[t], g.d_beta[t], "beta[" + std::to_string(t) + "]");
  sweep(xs0, g.d_s0, "s0");
  return rep;
}

}  // namespace kda
