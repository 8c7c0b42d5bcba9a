#include "kda/dplr.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace kda {

namespace {

template <typename T>
struct DplrChunk {
  BasicMatrix<T> q, k, v, a;
  BasicMatrix<T> gamma_cum;
  BasicMatrix<T> qk, qa;  // inclusive
  BasicMatrix<T> u, w;    // T⁻¹ (A_bk V), T⁻¹ (exp(g⁻)⊙B)
};

// Σ_d x_rd y_id exp(gx_rd - gc_id) over i <= r (inclusive) or i < r (strict).
template <typename T>
BasicMatrix<T> decayed_scores(const BasicMatrix<T>& x, const BasicMatrix<T>& y, const BasicMatrix<T>& gx,
                              const BasicMatrix<T>& gc, bool strict) {
  census::count_score_matrix();
  const std::size_t c = x.rows(), dk = x.cols();
  BasicMatrix<T> s(c, c);
  for (std::size_t r = 0; r < c; ++r) {
    const std::size_t end = strict ? r : r + 1;
    for (std::size_t i = 0; i < end; ++i) {
      T acc = 0;
      for (std::size_t d = 0; d < dk; ++d) acc += x(r, d) * y(i, d) * std::exp(gx(r, d) - gc(i, d));
      s(r, i) = acc;
    }
  }
  return s;
}

template <typename T>
DplrChunk<T> build_chunk(const BasicAttnSequence<T>& seq, const BasicDplrGateSequence<T>& gates, std::size_t first,
                         std::size_t c) {
  DplrChunk<T> f;
  f.q = seq.q.rows_slice(first, c);
  f.k = seq.k.rows_slice(first, c);
  f.v = seq.v.rows_slice(first, c);
  f.a = gates.a.rows_slice(first, c);
  const BasicMatrix<T> b = gates.b.rows_slice(first, c);
  f.gamma_cum = cumsum_rows(gates.log_alpha, first, c);
  BasicMatrix<T> g_excl = f.gamma_cum - gates.log_alpha.rows_slice(first, c);

  f.qk = decayed_scores(f.q, f.k, f.gamma_cum, f.gamma_cum, false);
  f.qa = decayed_scores(f.q, f.a, f.gamma_cum, f.gamma_cum, false);
  BasicMatrix<T> ba = decayed_scores(b, f.a, g_excl, f.gamma_cum, true);
  const BasicMatrix<T> bk = decayed_scores(b, f.k, g_excl, f.gamma_cum, true);

  for (std::size_t i = 0; i < c; ++i) ba(i, i) = T(1);
  const BasicMatrix<T> t_inv = tril_inverse_unit(BasicLowerTriangular<T>(std::move(ba))).matrix();

  BasicMatrix<T> decayed_b(c, b.cols());
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t d = 0; d < b.cols(); ++d) decayed_b(i, d) = std::exp(g_excl(i, d)) * b(i, d);
  f.u = matmul(t_inv, matmul(bk, f.v));
  f.w = matmul(t_inv, decayed_b);
  return f;
}

}  // namespace

template <typename T>
BasicChunkForwardResult<T> dplr_chunk_forward(const BasicAttnSequence<T>& seq, const BasicDplrGateSequence<T>& gates,
                                              const BasicMatrix<T>& s0, const ChunkPlan& plan,
                                              const ChunkOptions& options) {
  validate(gates, seq);
  plan.check(seq.length());
  const std::size_t n = seq.length(), c = plan.chunk_size, dk = seq.key_dim(), dv = seq.value_dim();

  BasicAttnSequence<T> padded_seq = seq;
  BasicDplrGateSequence<T> padded_gates = gates;
  append_noop_tokens(padded_seq, padded_gates, plan.pad);

  std::vector<DplrChunk<T>> chunks(plan.num_chunks);
  const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, plan.num_chunks));
  if (workers == 1) {
    for (std::size_t i = 0; i < plan.num_chunks; ++i) chunks[i] = build_chunk(padded_seq, padded_gates, i * c, c);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < plan.num_chunks; i += workers) chunks[i] = build_chunk(padded_seq, padded_gates, i * c, c);
      });
    }
    for (auto& th : pool) th.join();
  }

  BasicChunkForwardResult<T> res;
  BasicMatrix<T> s = s0.empty() ? BasicMatrix<T>(dk, dv) : s0;
  if (s.rows() != dk || s.cols() != dv) throw ShapeError("initial state must be " + shape_string(dk, dv));
  BasicMatrix<T> out(plan.padded_length(), dv);
  BasicMatrix<T> decayed_q(c, dk), to_end_k(c, dk), to_end_a(c, dk);

  for (std::size_t ci = 0; ci < plan.num_chunks; ++ci) {
    const auto& f = chunks[ci];
    const auto g_last = f.gamma_cum.row(c - 1);

    BasicMatrix<T> x = f.u + matmul(f.w, s);
    x *= T(-1);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t d = 0; d < dk; ++d) {
        const T to_end = std::exp(g_last[d] - f.gamma_cum(i, d));
        decayed_q(i, d) = f.q(i, d) * std::exp(f.gamma_cum(i, d));
        to_end_k(i, d) = f.k(i, d) * to_end;
        to_end_a(i, d) = f.a(i, d) * to_end;
      }
    BasicMatrix<T> o = matmul(decayed_q, s);
    o += matmul(f.qk, f.v);
    o += matmul(f.qa, x);
    out.set_rows(ci * c, o);

    for (std::size_t d = 0; d < dk; ++d) {
      const T decay = std::exp(g_last[d]);
      for (auto& e : s.row(d)) e *= decay;
    }
    s += matmul_tn(to_end_k, f.v);
    s += matmul_tn(to_end_a, x);

    if (!o.all_finite() || !s.all_finite()) throw NumericError("DPLR chunk forward produced a non-finite value", ci * c);
  }
  res.outputs = out.rows_slice(0, n);
  res.final_state = std::move(s);
  return res;
}

MatmulCensus matmul_census(std::size_t length, std::size_t chunk_size, std::size_t key_dim, std::size_t value_dim,
                           std::uint64_t seed) {
  InstanceSpec spec;
  spec.length = length;
  spec.key_dim = key_dim;
  spec.value_dim = value_dim;
  const Instance inst = make_instance(spec, seed);
  const DplrInstance dplr = dplr_from_kda(inst.seq, inst.gates);
  const ChunkPlan plan = ChunkPlan::for_length(length, chunk_size);

  MatmulCensus rep;
  rep.num_chunks = plan.num_chunks;
  {
    census::Scope scope;
    chunk_forward(inst.seq, inst.gates, Matrix{}, plan);
    rep.kda = scope.elapsed();
  }
  {
    census::Scope scope;
    dplr_chunk_forward(dplr.seq, dplr.gates, Matrix{}, plan);
    rep.dplr = scope.elapsed();
  }
  return rep;
}

#define KDA_INSTANTIATE_DPLR(T)                                                                               \
  template BasicChunkForwardResult<T> dplr_chunk_forward(const BasicAttnSequence<T>&,                          \
                                                         const BasicDplrGateSequence<T>&, const BasicMatrix<T>&, \
                                                         const ChunkPlan&, const ChunkOptions&);

KDA_INSTANTIATE_DPLR(double)
KDA_INSTANTIATE_DPLR(float)

#undef KDA_INSTANTIATE_DPLR

}  // namespace kda
