#include "kda/chunkwise.hpp"

#include <cmath>
#include <string>
#include <thread>

#include "kda/census.hpp"

namespace kda {

ChunkPlan ChunkPlan::for_length(std::size_t length, std::size_t chunk_size) {
  if (chunk_size == 0) throw ContractError("chunk size must be at least 1");
  const std::size_t chunks = (length + chunk_size - 1) / chunk_size;
  return {chunk_size, chunks, chunks * chunk_size - length};
}

void ChunkPlan::check(std::size_t len) const {
  if (chunk_size == 0) throw ContractError("chunk size must be at least 1");
  if (pad >= chunk_size) throw ContractError("padding must be smaller than the chunk size");
  if (padded_length() < pad || length() != len) {
    throw ContractError("chunk plan covers " + std::to_string(num_chunks) + "x" + std::to_string(chunk_size) +
                        " tokens with pad " + std::to_string(pad) + ", sequence has " + std::to_string(len));
  }
}

template <typename T>
BasicMatrix<T> key_key_scores(const BasicMatrix<T>& chunk_k, std::span<const T> chunk_beta,
                              const BasicMatrix<T>& gamma_cum) {
  const std::size_t c = chunk_k.rows(), dk = chunk_k.cols();
  census::count_score_matrix();
  BasicMatrix<T> a(c, c);
  for (std::size_t i = 1; i < c; ++i) {
    const auto ki = chunk_k.row(i);
    const auto gi = gamma_cum.row(i);
    for (std::size_t j = 0; j < i; ++j) {
      const auto kj = chunk_k.row(j);
      const auto gj = gamma_cum.row(j);
      T acc = 0;
      for (std::size_t d = 0; d < dk; ++d) acc += ki[d] * kj[d] * std::exp(gi[d] - gj[d]);
      a(i, j) = chunk_beta[i] * acc;
    }
  }
  return a;
}

template <typename T>
BasicMatrix<T> query_key_scores(const BasicMatrix<T>& chunk_q, const BasicMatrix<T>& chunk_k,
                                const BasicMatrix<T>& gamma_cum) {
  const std::size_t c = chunk_q.rows(), dk = chunk_q.cols();
  census::count_score_matrix();
  BasicMatrix<T> a(c, c);
  for (std::size_t i = 0; i < c; ++i) {
    const auto qi = chunk_q.row(i);
    const auto gi = gamma_cum.row(i);
    for (std::size_t j = 0; j <= i; ++j) {
      const auto kj = chunk_k.row(j);
      const auto gj = gamma_cum.row(j);
      T acc = 0;
      for (std::size_t d = 0; d < dk; ++d) acc += qi[d] * kj[d] * std::exp(gi[d] - gj[d]);
      a(i, j) = acc;
    }
  }
  return a;
}

template <typename T>
BasicWyFactors<T> wy_factors(const BasicMatrix<T>& chunk_k, const BasicMatrix<T>& chunk_v,
                             std::span<const T> chunk_beta, const BasicMatrix<T>& gamma_cum) {
  const std::size_t c = chunk_k.rows();
  if (chunk_v.rows() != c || chunk_beta.size() != c || gamma_cum.rows() != c || gamma_cum.cols() != chunk_k.cols()) {
    throw ShapeError("wy_factors: chunk inputs disagree on the chunk length");
  }
  BasicMatrix<T> l = key_key_scores(chunk_k, chunk_beta, gamma_cum);
  for (std::size_t i = 0; i < c; ++i) l(i, i) = T(1);
  BasicMatrix<T> a_inv = tril_inverse_unit(BasicLowerTriangular<T>(std::move(l))).matrix();

  BasicMatrix<T> m = a_inv;
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j <= i; ++j) m(i, j) *= chunk_beta[j];

  BasicMatrix<T> decayed_k(c, chunk_k.cols());
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t d = 0; d < chunk_k.cols(); ++d) decayed_k(i, d) = std::exp(gamma_cum(i, d)) * chunk_k(i, d);

  BasicWyFactors<T> f;
  f.w = matmul(m, decayed_k);
  f.u = matmul(m, chunk_v);
  f.m_ut = std::move(m);
  f.a_inv = std::move(a_inv);
  return f;
}

namespace {

template <typename T>
struct ChunkFactors {
  BasicMatrix<T> q;
  BasicMatrix<T> k;
  BasicMatrix<T> gamma_cum;
  BasicMatrix<T> qk;  // Tril((Γ⊙Q)(K/Γ)ᵀ)
  BasicWyFactors<T> wy;
};

template <typename T>
ChunkFactors<T> build_chunk(const BasicAttnSequence<T>& seq, const BasicGateSequence<T>& gates, std::size_t first,
                            std::size_t c) {
  ChunkFactors<T> f;
  f.q = seq.q.rows_slice(first, c);
  f.k = seq.k.rows_slice(first, c);
  f.gamma_cum = cumsum_rows(gates.log_alpha, first, c);
  f.qk = query_key_scores(f.q, f.k, f.gamma_cum);
  f.wy = wy_factors<T>(f.k, seq.v.rows_slice(first, c),
                       std::span<const T>(gates.beta).subspan(first, c), f.gamma_cum);
  return f;
}

}  // namespace

template <typename T>
BasicChunkForwardResult<T> chunk_forward(const BasicAttnSequence<T>& seq, const BasicGateSequence<T>& gates,
                                         const BasicMatrix<T>& s0, const ChunkPlan& plan,
                                         const ChunkOptions& options) {
  validate(gates, seq);
  plan.check(seq.length());
  const std::size_t n = seq.length(), c = plan.chunk_size, dk = seq.key_dim(), dv = seq.value_dim();

  BasicAttnSequence<T> padded_seq = seq;
  BasicGateSequence<T> padded_gates = gates;
  append_noop_tokens(padded_seq, padded_gates, plan.pad);

  // Phase one: independent per chunk.
  std::vector<ChunkFactors<T>> chunks(plan.num_chunks);
  const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, plan.num_chunks));
  if (workers == 1) {
    for (std::size_t i = 0; i < plan.num_chunks; ++i) chunks[i] = build_chunk(padded_seq, padded_gates, i * c, c);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < plan.num_chunks; i += workers) chunks[i] = build_chunk(padded_seq, padded_gates, i * c, c);
      });
    }
    for (auto& th : pool) th.join();
  }

  // Phase two: sequential state sweep.
  BasicChunkForwardResult<T> res;
  BasicMatrix<T> s = s0.empty() ? BasicMatrix<T>(dk, dv) : s0;
  if (s.rows() != dk || s.cols() != dv) throw ShapeError("initial state must be " + shape_string(dk, dv));
  BasicMatrix<T> out(plan.padded_length(), dv);

  BasicMatrix<T> decayed_q(c, dk), to_end_k(c, dk);
  for (std::size_t ci = 0; ci < plan.num_chunks; ++ci) {
    const auto& f = chunks[ci];
    const auto g_last = f.gamma_cum.row(c - 1);

    BasicMatrix<T> vnew = f.wy.u - matmul(f.wy.w, s);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t d = 0; d < dk; ++d) {
        decayed_q(i, d) = f.q(i, d) * std::exp(f.gamma_cum(i, d));
        to_end_k(i, d) = f.k(i, d) * std::exp(g_last[d] - f.gamma_cum(i, d));
      }
    BasicMatrix<T> o = matmul(decayed_q, s);
    o += matmul(f.qk, vnew);
    out.set_rows(ci * c, o);

    for (std::size_t d = 0; d < dk; ++d) {
      const T decay = std::exp(g_last[d]);
      for (auto& x : s.row(d)) x *= decay;
    }
    s += matmul_tn(to_end_k, vnew);

    if (!o.all_finite() || !s.all_finite()) throw NumericError("chunk forward produced a non-finite value", ci * c);
    if (options.keep_scratch) {
      res.scratch_trace.push_back({f.gamma_cum, f.wy.a_inv, f.wy.m_ut, f.wy.w, f.wy.u});
    }
  }
  res.outputs = out.rows_slice(0, n);
  res.final_state = std::move(s);
  return res;
}

ChunkInputs chunk_inputs(const AttnSequence& seq, const GateSequence& gates, std::size_t first, std::size_t count) {
  validate(gates, seq);
  if (first + count > seq.length()) throw ContractError("chunk range exceeds the sequence");
  return {seq.k.rows_slice(first, count), seq.v.rows_slice(first, count),
          Vector(gates.beta.begin() + static_cast<std::ptrdiff_t>(first),
                 gates.beta.begin() + static_cast<std::ptrdiff_t>(first + count)),
          gates.log_alpha.rows_slice(first, count)};
}

PropositionReport wy_verify_propositions(const ChunkInputs& chunk, std::size_t r) {
  const std::size_t c = chunk.k.rows(), dk = chunk.k.cols(), dv = chunk.v.cols();
  if (c > 16) throw ContractError("explicit-product check is limited to chunks of at most 16 tokens");
  if (r < 1 || r > c) throw ContractError("position r must satisfy 1 <= r <= C");

  const Matrix gc = cumsum_rows(chunk.log_alpha, 0, c);
  const WyFactors wy = wy_factors<double>(chunk.k, chunk.v, chunk.beta, gc);

  // Explicit accumulation, newest transition applied on the left.
  Matrix p = Matrix::identity(dk);
  Matrix h(dk, dv);
  for (std::size_t i = 0; i < r; ++i) {
    const auto k = chunk.k.row(i);
    const auto v = chunk.v.row(i);
    const double beta = chunk.beta[i];
    Matrix step(dk, dk);
    for (std::size_t a = 0; a < dk; ++a)
      for (std::size_t b = 0; b < dk; ++b) {
        const double alpha_b = std::exp(chunk.log_alpha(i, b));
        step(a, b) = (a == b ? alpha_b : 0.0) - k[a] * (beta * (alpha_b * k[b]));
      }
    p = matmul(step, p);
    h = matmul(step, h);
    for (std::size_t a = 0; a < dk; ++a)
      for (std::size_t b = 0; b < dv; ++b) h(a, b) += k[a] * (beta * v[b]);
  }

  const std::size_t last = r - 1;
  PropositionReport rep{r, 0.0, 0.0};
  for (std::size_t a = 0; a < dk; ++a) {
    for (std::size_t b = 0; b < dk; ++b) {
      double acc = 0;
      for (std::size_t i = 0; i < r; ++i) acc += std::exp(gc(last, a) - gc(i, a)) * chunk.k(i, a) * wy.w(i, b);
      const double wy_p = (a == b ? std::exp(gc(last, a)) : 0.0) - acc;
      rep.p_error = std::max(rep.p_error, std::abs(p(a, b) - wy_p));
    }
    for (std::size_t b = 0; b < dv; ++b) {
      double acc = 0;
      for (std::size_t i = 0; i < r; ++i) acc += std::exp(gc(last, a) - gc(i, a)) * chunk.k(i, a) * wy.u(i, b);
      rep.h_error = std::max(rep.h_error, std::abs(h(a, b) - acc));
    }
  }
  return rep;
}

UtReport ut_verify(const ChunkInputs& chunk) {
  const std::size_t c = chunk.k.rows();
  const Matrix gc = cumsum_rows(chunk.log_alpha, 0, c);
  const WyFactors wy = wy_factors<double>(chunk.k, chunk.v, chunk.beta, gc);
  const Vector ones(c, 1.0);
  const Matrix n = key_key_scores<double>(chunk.k, ones, gc);

  UtReport rep;
  rep.factored = false;
  for (double b : chunk.beta) rep.factored = rep.factored || b == 0.0;

  Matrix scaled = wy.a_inv;
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) scaled(i, j) *= chunk.beta[j];
  rep.factor_error = max_abs_diff(wy.m_ut, scaled);

  Matrix rhs(c, c);
  const Matrix* lhs = nullptr;
  if (rep.factored) {
    // a_inv (I + Diag(β) N)
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < c; ++j) rhs(i, j) = chunk.beta[i] * n(i, j);
      rhs(i, i) = 1.0;
    }
    lhs = &wy.a_inv;
  } else {
    // M (Diag(β)⁻¹ + N)
    rhs = n;
    for (std::size_t i = 0; i < c; ++i) rhs(i, i) = 1.0 / chunk.beta[i];
    lhs = &wy.m_ut;
  }
  rep.identity_error = max_abs_diff(matmul(*lhs, rhs), Matrix::identity(c));
  return rep;
}

#define KDA_INSTANTIATE_CHUNKWISE(T)                                                                            \
  template BasicChunkForwardResult<T> chunk_forward(const BasicAttnSequence<T>&, const BasicGateSequence<T>&,    \
                                                    const BasicMatrix<T>&, const ChunkPlan&, const ChunkOptions&); \
  template BasicWyFactors<T> wy_factors(const BasicMatrix<T>&, const BasicMatrix<T>&, std::span<const T>,        \
                                        const BasicMatrix<T>&);                                                  \
  template BasicMatrix<T> key_key_scores(const BasicMatrix<T>&, std::span<const T>, const BasicMatrix<T>&);     \
  template BasicMatrix<T> query_key_scores(const BasicMatrix<T>&, const BasicMatrix<T>&, const BasicMatrix<T>&);

KDA_INSTANTIATE_CHUNKWISE(double)
KDA_INSTANTIATE_CHUNKWISE(float)

#undef KDA_INSTANTIATE_CHUNKWISE

}  // namespace kda
