#include "kda/recurrent.hpp"

#include <array>
#include <cmath>
#include <string>

namespace kda {

namespace {

constexpr std::array<std::pair<VariantKind, std::string_view>, 7> kNames{{
    {VariantKind::LA, "la"},
    {VariantKind::Mamba2, "mamba2"},
    {VariantKind::GLA, "gla"},
    {VariantKind::DeltaNet, "deltanet"},
    {VariantKind::GDN, "gdn"},
    {VariantKind::KDA, "kda"},
    {VariantKind::DPLR, "dplr"},
}};

template <typename T>
BasicMatrix<T> initial_state(const BasicMatrix<T>& s0, std::size_t dk, std::size_t dv) {
  if (s0.empty()) return BasicMatrix<T>(dk, dv);
  if (s0.rows() != dk || s0.cols() != dv) {
    throw ShapeError("initial state must be " + shape_string(dk, dv) + ", got " + shape_string(s0.rows(), s0.cols()));
  }
  return s0;
}

template <typename T>
T scalar_log_decay(std::span<const T> row) {
  bool uniform = true;
  T sum = 0;
  for (T x : row) {
    uniform = uniform && x == row[0];
    sum += x;
  }
  return uniform ? row[0] : sum / static_cast<T>(row.size());
}

// o = Sᵀ q
template <typename T>
void read_out(const BasicMatrix<T>& s, std::span<const T> q, std::span<T> o) {
  for (auto& x : o) x = 0;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const T qi = q[i];
    const auto srow = s.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += qi * srow[j];
  }
}

template <typename T>
void check_row(std::span<const T> o, std::size_t t) {
  for (T x : o)
    if (!std::isfinite(x)) throw NumericError("recurrent forward produced a non-finite output", t);
}

template <typename T>
BasicForwardResult<T> run(VariantKind kind, const BasicAttnSequence<T>& seq, const BasicGateSequence<T>* gates,
                          const BasicMatrix<T>& s0) {
  const auto n = seq.length(), dk = seq.key_dim(), dv = seq.value_dim();
  BasicForwardResult<T> res{BasicMatrix<T>(n, dv), initial_state(s0, dk, dv)};
  auto& s = res.final_state;
  std::vector<T> decay(dk, T(1)), err(dv);

  const bool delta = kind == VariantKind::DeltaNet || kind == VariantKind::GDN || kind == VariantKind::KDA;
  for (std::size_t t = 0; t < n; ++t) {
    switch (kind) {
      case VariantKind::GLA:
      case VariantKind::KDA:
        for (std::size_t i = 0; i < dk; ++i) decay[i] = std::exp(gates->log_alpha(t, i));
        break;
      case VariantKind::Mamba2:
      case VariantKind::GDN: {
        const T a = std::exp(scalar_log_decay(gates->log_alpha.row(t)));
        std::fill(decay.begin(), decay.end(), a);
        break;
      }
      default:
        break;
    }
    for (std::size_t i = 0; i < dk; ++i)
      for (auto& x : s.row(i)) x *= decay[i];

    const auto k = seq.k.row(t);
    const auto v = seq.v.row(t);
    if (delta) {
      // S += β k (v - S̃ᵀ k)ᵀ with S̃ the decayed state.
      read_out<T>(s, k, err);
      for (std::size_t j = 0; j < dv; ++j) err[j] = v[j] - err[j];
      const T beta = gates->beta[t];
      for (std::size_t i = 0; i < dk; ++i) {
        const T bk = beta * k[i];
        auto srow = s.row(i);
        for (std::size_t j = 0; j < dv; ++j) srow[j] += bk * err[j];
      }
    } else {
      const T w = kind == VariantKind::Mamba2 ? gates->beta[t] : T(1);
      for (std::size_t i = 0; i < dk; ++i) {
        const T wk = w * k[i];
        auto srow = s.row(i);
        for (std::size_t j = 0; j < dv; ++j) srow[j] += wk * v[j];
      }
    }
    read_out<T>(s, seq.q.row(t), res.outputs.row(t));
    check_row<T>(res.outputs.row(t), t);
  }
  return res;
}

}  // namespace

std::string_view to_string(VariantKind kind) {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  return "unknown";
}

std::optional<VariantKind> parse_variant(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  return std::nullopt;
}

const std::vector<VariantKind>& all_variants() {
  static const std::vector<VariantKind> v{VariantKind::LA,       VariantKind::Mamba2, VariantKind::GLA,
                                          VariantKind::DeltaNet, VariantKind::GDN,    VariantKind::KDA,
                                          VariantKind::DPLR};
  return v;
}

template <typename T>
BasicForwardResult<T> recurrent_forward(VariantKind kind, const BasicAttnSequence<T>& seq, const BasicMatrix<T>& s0) {
  if (kind != VariantKind::LA) {
    throw ContractError("variant " + std::string(to_string(kind)) + " requires gate inputs");
  }
  validate(seq);
  return run<T>(kind, seq, nullptr, s0);
}

template <typename T>
BasicForwardResult<T> recurrent_forward(VariantKind kind, const BasicAttnSequence<T>& seq,
                                        const BasicGateSequence<T>& gates, const BasicMatrix<T>& s0) {
  if (kind == VariantKind::DPLR) throw ContractError("variant dplr requires the low-rank factors a and b");
  validate(gates, seq);
  return run<T>(kind, seq, &gates, s0);
}

template <typename T>
BasicForwardResult<T> recurrent_forward(VariantKind kind, const BasicAttnSequence<T>& seq,
                                        const BasicDplrGateSequence<T>& gates, const BasicMatrix<T>& s0) {
  if (kind != VariantKind::DPLR) {
    throw ContractError("DPLR gates given to variant " + std::string(to_string(kind)));
  }
  validate(gates, seq);
  const auto n = seq.length(), dk = seq.key_dim(), dv = seq.value_dim();
  BasicForwardResult<T> res{BasicMatrix<T>(n, dv), initial_state(s0, dk, dv)};
  auto& s = res.final_state;
  std::vector<T> bs(dv);
  for (std::size_t t = 0; t < n; ++t) {
    // bᵀ S_{t-1} must be read before S is overwritten.
    read_out<T>(s, gates.b.row(t), bs);
    const auto a = gates.a.row(t);
    const auto k = seq.k.row(t);
    const auto v = seq.v.row(t);
    for (std::size_t i = 0; i < dk; ++i) {
      const T d = std::exp(gates.log_alpha(t, i));
      auto srow = s.row(i);
      for (std::size_t j = 0; j < dv; ++j) srow[j] = d * srow[j] - a[i] * bs[j] + k[i] * v[j];
    }
    read_out<T>(s, seq.q.row(t), res.outputs.row(t));
    check_row<T>(res.outputs.row(t), t);
  }
  return res;
}

double state_norm_bound(const AttnSequence& seq, const GateSequence& gates, const StateMatrix& s0) {
  validate(gates, seq);
  for (std::size_t t = 0; t < seq.length(); ++t) {
    if (std::abs(norm2<double>(seq.k.row(t)) - 1.0) > kNormalizedTolerance) {
      throw ContractError("state_norm_bound requires unit-norm keys (row " + std::to_string(t) + ")");
    }
  }
  double bound = s0.empty() ? 0.0 : frobenius(s0);
  for (std::size_t t = 0; t < seq.length(); ++t) bound += gates.beta[t] * norm2<double>(seq.v.row(t));
  return bound;
}

std::vector<double> state_norm_trajectory(const AttnSequence& seq, const GateSequence& gates, const StateMatrix& s0) {
  validate(gates, seq);
  std::vector<double> norms;
  norms.reserve(seq.length());
  StateMatrix s = initial_state(s0, seq.key_dim(), seq.value_dim());
  for (std::size_t t = 0; t < seq.length(); ++t) {
    AttnSequence one{seq.q.rows_slice(t, 1), seq.k.rows_slice(t, 1), seq.v.rows_slice(t, 1)};
    GateSequence g{gates.log_alpha.rows_slice(t, 1), {gates.beta[t]}};
    s = recurrent_forward(VariantKind::KDA, one, g, s).final_state;
    norms.push_back(frobenius(s));
  }
  return norms;
}

#define KDA_INSTANTIATE_RECURRENT(T)                                                                          \
  template BasicForwardResult<T> recurrent_forward(VariantKind, const BasicAttnSequence<T>&,                   \
                                                   const BasicMatrix<T>&);                                     \
  template BasicForwardResult<T> recurrent_forward(VariantKind, const BasicAttnSequence<T>&,                   \
                                                   const BasicGateSequence<T>&, const BasicMatrix<T>&);        \
  template BasicForwardResult<T> recurrent_forward(VariantKind, const BasicAttnSequence<T>&,                   \
                                                   const BasicDplrGateSequence<T>&, const BasicMatrix<T>&);

KDA_INSTANTIATE_RECURRENT(double)
KDA_INSTANTIATE_RECURRENT(float)

#undef KDA_INSTANTIATE_RECURRENT

}  // namespace kda
