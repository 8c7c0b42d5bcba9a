#include "kda/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace kda {

template <typename T>
void validate(const BasicAttnSequence<T>& seq) {
  const auto n = seq.q.rows();
  if (seq.k.rows() != n || seq.v.rows() != n) {
    throw ShapeError("q, k and v must have the same number of rows (" + std::to_string(seq.q.rows()) + ", " +
                     std::to_string(seq.k.rows()) + ", " + std::to_string(seq.v.rows()) + ")");
  }
  if (seq.q.cols() != seq.k.cols()) throw ShapeError("q and k must share the key dimension");
}

template <typename T>
void validate(const BasicGateSequence<T>& gates, const BasicAttnSequence<T>& seq) {
  validate(seq);
  if (gates.log_alpha.rows() != seq.length() || gates.log_alpha.cols() != seq.key_dim()) {
    throw ShapeError("log_alpha must be " + shape_string(seq.length(), seq.key_dim()) + ", got " +
                     shape_string(gates.log_alpha.rows(), gates.log_alpha.cols()));
  }
  if (gates.beta.size() != seq.length()) throw ShapeError("beta must have one entry per token");
  if (!checked_mode()) return;
  for (T x : gates.log_alpha.data())
    if (!(x <= T(0))) throw ContractError("log_alpha entries must be finite and <= 0");
  for (T b : gates.beta)
    if (!(b >= T(0) && b <= T(1))) throw ContractError("beta entries must lie in [0, 1]");
}

template <typename T>
void validate(const BasicDplrGateSequence<T>& gates, const BasicAttnSequence<T>& seq) {
  validate(seq);
  const auto want_r = seq.length(), want_c = seq.key_dim();
  for (const auto* m : {&gates.log_alpha, &gates.a, &gates.b}) {
    if (m->rows() != want_r || m->cols() != want_c) {
      throw ShapeError("DPLR gate fields must be " + shape_string(want_r, want_c));
    }
  }
  if (!checked_mode()) return;
  for (T x : gates.log_alpha.data())
    if (!(x <= T(0))) throw ContractError("log_alpha entries must be finite and <= 0");
  if (!gates.a.all_finite() || !gates.b.all_finite()) throw ContractError("DPLR factors must be finite");
}

template <typename T>
bool is_normalized(const BasicAttnSequence<T>& seq, double tol) {
  for (std::size_t t = 0; t < seq.length(); ++t) {
    if (std::abs(static_cast<double>(norm2(seq.q.row(t))) - 1.0) > tol) return false;
    if (std::abs(static_cast<double>(norm2(seq.k.row(t))) - 1.0) > tol) return false;
  }
  return true;
}

namespace {

template <typename T>
BasicMatrix<T> grow(const BasicMatrix<T>& m, std::size_t pad) {
  BasicMatrix<T> out(m.rows() + pad, m.cols());
  out.set_rows(0, m);
  return out;
}

}  // namespace

template <typename T>
void append_noop_tokens(BasicAttnSequence<T>& seq, BasicGateSequence<T>& gates, std::size_t pad) {
  if (pad == 0) return;
  seq.q = grow(seq.q, pad);
  seq.k = grow(seq.k, pad);
  seq.v = grow(seq.v, pad);
  gates.log_alpha = grow(gates.log_alpha, pad);
  gates.beta.resize(gates.beta.size() + pad, T(0));
}

template <typename T>
void append_noop_tokens(BasicAttnSequence<T>& seq, BasicDplrGateSequence<T>& gates, std::size_t pad) {
  if (pad == 0) return;
  seq.q = grow(seq.q, pad);
  seq.k = grow(seq.k, pad);
  seq.v = grow(seq.v, pad);
  gates.log_alpha = grow(gates.log_alpha, pad);
  gates.a = grow(gates.a, pad);
  gates.b = grow(gates.b, pad);
}

template <typename T>
BasicDplrInstance<T> dplr_from_kda(const BasicAttnSequence<T>& seq, const BasicGateSequence<T>& gates) {
  validate(gates, seq);
  const auto n = seq.length(), dk = seq.key_dim();
  BasicDplrInstance<T> out{seq, {gates.log_alpha, BasicMatrix<T>(n, dk), BasicMatrix<T>(n, dk)}};
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < dk; ++i) {
      out.gates.a(t, i) = gates.beta[t] * seq.k(t, i);
      out.gates.b(t, i) = seq.k(t, i) * std::exp(gates.log_alpha(t, i));
    }
    for (auto& x : out.seq.v.row(t)) x *= gates.beta[t];
  }
  return out;
}

Instance make_instance(const InstanceSpec& spec, std::uint64_t seed) {
  if (spec.log_alpha_min > spec.log_alpha_max || spec.log_alpha_max > 0.0) {
    throw ContractError("instance log-decay range must satisfy min <= max <= 0");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const auto n = spec.length, dk = spec.key_dim, dv = spec.value_dim;
  Instance inst{{Matrix(n, dk), Matrix(n, dk), Matrix(n, dv)}, {Matrix(n, dk), Vector(n)}, Matrix(dk, dv)};

  auto fill_rows = [&](Matrix& m, bool unit_rows) {
    for (std::size_t t = 0; t < m.rows(); ++t) {
      auto row = m.row(t);
      for (auto& x : row) x = normal(rng);
      if (unit_rows) {
        const double nrm = norm2<double>(row);
        for (auto& x : row) x /= nrm;
      }
    }
  };
  fill_rows(inst.seq.q, spec.normalized);
  fill_rows(inst.seq.k, spec.normalized);
  fill_rows(inst.seq.v, false);

  // Log-uniform decay magnitudes: mostly slow forgetting with occasional hard resets.
  const double lo_mag = std::max(-spec.log_alpha_max, 1e-3);
  const double hi_mag = -spec.log_alpha_min;
  for (auto& x : inst.gates.log_alpha.data()) {
    if (hi_mag <= lo_mag) {
      x = spec.log_alpha_max;
    } else {
      const double u = std::log(lo_mag) + unit(rng) * (std::log(hi_mag) - std::log(lo_mag));
      x = std::clamp(-std::exp(u), spec.log_alpha_min, spec.log_alpha_max);
    }
  }
  for (auto& b : inst.gates.beta) b = spec.beta_min + unit(rng) * (spec.beta_max - spec.beta_min);
  if (spec.random_initial_state) {
    for (auto& x : inst.s0.data()) x = 0.5 * normal(rng);
  }
  return inst;
}

#define KDA_INSTANTIATE_SEQUENCE(T)                                                                       \
  template void validate(const BasicAttnSequence<T>&);                                                    \
  template void validate(const BasicGateSequence<T>&, const BasicAttnSequence<T>&);                       \
  template void validate(const BasicDplrGateSequence<T>&, const BasicAttnSequence<T>&);                   \
  template bool is_normalized(const BasicAttnSequence<T>&, double);                                       \
  template void append_noop_tokens(BasicAttnSequence<T>&, BasicGateSequence<T>&, std::size_t);           \
  template void append_noop_tokens(BasicAttnSequence<T>&, BasicDplrGateSequence<T>&, std::size_t);       \
  template BasicDplrInstance<T> dplr_from_kda(const BasicAttnSequence<T>&, const BasicGateSequence<T>&);

KDA_INSTANTIATE_SEQUENCE(double)
KDA_INSTANTIATE_SEQUENCE(float)

#undef KDA_INSTANTIATE_SEQUENCE

}  // namespace kda
