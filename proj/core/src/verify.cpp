#include "kda/verify.hpp"

#include <algorithm>

#include <json.hpp>

#include "kda/dplr.hpp"
#include "kda/parallel.hpp"

namespace kda {

namespace {

template <typename T>
std::vector<T> or_default(const std::vector<T>& v, std::vector<T> fallback) {
  return v.empty() ? fallback : v;
}

std::string case_id(std::uint64_t seed, std::size_t t, std::size_t c, std::size_t d) {
  return "seed=" + std::to_string(seed) + ",T=" + std::to_string(t) + ",C=" + std::to_string(c) + ",d=" +
         std::to_string(d);
}

struct GridPoint {
  std::size_t t, c, d;
};

std::vector<GridPoint> grid(const SuiteOptions& opt, std::vector<std::size_t> lengths, std::vector<std::size_t> chunks,
                            std::vector<std::size_t> dims) {
  std::vector<GridPoint> g;
  for (auto t : or_default(opt.lengths, lengths))
    for (auto c : or_default(opt.chunk_sizes, chunks))
      for (auto d : or_default(opt.dims, dims)) g.push_back({t, c, d});
  return g;
}

Instance instance_for(std::size_t t, std::size_t d, std::uint64_t seed, bool random_state = true) {
  InstanceSpec spec;
  spec.length = t;
  spec.key_dim = d;
  spec.value_dim = d;
  spec.random_initial_state = random_state;
  return make_instance(spec, seed);
}

double relative(double abs_err, double scale) { return abs_err / std::max(scale, 1e-30); }

}  // namespace

bool SuiteReport::passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const CaseResult& c) { return c.pass(); });
}

double SuiteReport::max_error() const {
  double m = 0;
  for (const auto& c : cases) m = std::max(m, c.error);
  return m;
}

std::string SuiteReport::to_json() const {
  nlohmann::json j;
  j["suite"] = suite;
  j["passed"] = passed();
  j["max_error"] = max_error();
  auto arr = nlohmann::json::array();
  for (const auto& c : cases) arr.push_back({{"id", c.id}, {"error", c.error}, {"tolerance", c.tolerance}, {"pass", c.pass()}});
  j["cases"] = std::move(arr);
  return j.dump();
}

bool is_suite(std::string_view name) {
  return std::find(std::begin(kSuites), std::end(kSuites), name) != std::end(kSuites);
}

SuiteReport verify_equivalence(const SuiteOptions& opt) {
  SuiteReport rep{"equivalence", {}};
  const auto g = grid(opt, {16, 64, 128, 256}, {4, 16, 64}, {8, 32, 64, 128});
  for (std::size_t i = 0; i < opt.seeds; ++i) {
    const std::uint64_t seed = opt.first_seed + i;
    const auto& p = g[static_cast<std::size_t>(seed % g.size())];
    const Instance inst = instance_for(p.t, p.d, seed);
    const ChunkPlan plan = ChunkPlan::for_length(p.t, p.c);
    const auto ref = recurrent_forward(VariantKind::KDA, inst.seq, inst.gates, inst.s0);
    if (opt.precision == Precision::F64) {
      const auto got = chunk_forward(inst.seq, inst.gates, inst.s0, plan);
      const double err = std::max(max_abs_diff(got.outputs, ref.outputs), max_abs_diff(got.final_state, ref.final_state));
      rep.cases.push_back({case_id(seed, p.t, p.c, p.d), err, 1e-9});
    } else {
      const BasicAttnSequence<float> seq{cast<float>(inst.seq.q), cast<float>(inst.seq.k), cast<float>(inst.seq.v)};
      const BasicGateSequence<float> gates{cast<float>(inst.gates.log_alpha),
                                           std::vector<float>(inst.gates.beta.begin(), inst.gates.beta.end())};
      const auto got = chunk_forward(seq, gates, cast<float>(inst.s0), plan);
      const double err = std::max(relative(max_abs_diff(cast<double>(got.outputs), ref.outputs), max_abs(ref.outputs)),
                                  relative(max_abs_diff(cast<double>(got.final_state), ref.final_state),
                                           max_abs(ref.final_state)));
      rep.cases.push_back({case_id(seed, p.t, p.c, p.d), err, 1e-3});
    }
  }
  return rep;
}

SuiteReport verify_wy(const SuiteOptions& opt) {
  SuiteReport rep{"wy", {}};
  const auto g = grid(opt, {16}, {16}, {8, 16});
  for (std::size_t i = 0; i < opt.seeds; ++i) {
    const std::uint64_t seed = opt.first_seed + i;
    const auto& p = g[static_cast<std::size_t>(seed % g.size())];
    const std::size_t c = std::min(p.c, p.t);
    const Instance inst = instance_for(c, p.d, seed, false);
    const ChunkInputs chunk = chunk_inputs(inst.seq, inst.gates, 0, c);
    for (std::size_t r = 1; r <= c; ++r) {
      const auto pr = wy_verify_propositions(chunk, r);
      // The base case is exact; later positions carry rounding.
      const double tol = r == 1 ? std::numeric_limits<double>::min() : 1e-10;
      const std::string id = case_id(seed, c, c, p.d) + ",r=" + std::to_string(r);
      rep.cases.push_back({id + ",P", pr.p_error, tol});
      rep.cases.push_back({id + ",H", pr.h_error, tol});
    }
  }
  return rep;
}

SuiteReport verify_ut(const SuiteOptions& opt) {
  SuiteReport rep{"ut", {}};
  const auto g = grid(opt, {64}, {4, 16, 64}, {8, 32});
  for (std::size_t i = 0; i < opt.seeds; ++i) {
    const std::uint64_t seed = opt.first_seed + i;
    const auto& p = g[static_cast<std::size_t>(seed % g.size())];
    InstanceSpec spec;
    spec.length = p.c;
    spec.key_dim = spec.value_dim = p.d;
    // Every other seed keeps β away from zero so the unfactored identity is exercised.
    spec.beta_min = seed % 2 ? 0.05 : 0.0;
    const Instance inst = make_instance(spec, seed);
    const auto r = ut_verify(chunk_inputs(inst.seq, inst.gates, 0, p.c));
    const std::string id = case_id(seed, p.c, p.c, p.d) + (r.factored ? ",factored" : "");
    rep.cases.push_back({id + ",identity", r.identity_error, 1e-10});
    rep.cases.push_back({id + ",factor", r.factor_error, 1e-12});
  }
  return rep;
}

SuiteReport verify_dplr(const SuiteOptions& opt) {
  SuiteReport rep{"dplr", {}};
  const auto g = grid(opt, {16, 64, 128}, {4, 16, 64}, {8, 32});
  for (std::size_t i = 0; i < opt.seeds; ++i) {
    const std::uint64_t seed = opt.first_seed + i;
    const auto& p = g[static_cast<std::size_t>(seed % g.size())];
    const Instance inst = instance_for(p.t, p.d, seed);
    const ChunkPlan plan = ChunkPlan::for_length(p.t, p.c);
    const std::string id = case_id(seed, p.t, p.c, p.d);

    // General DPLR gates: random low-rank factors of modest size.
    DplrGateSequence gen{inst.gates.log_alpha, inst.seq.k, inst.seq.q};
    for (std::size_t t = 0; t < p.t; ++t)
      for (std::size_t d = 0; d < p.d; ++d) gen.a(t, d) *= 0.5 * inst.gates.beta[t];
    const auto ref = recurrent_forward(VariantKind::DPLR, inst.seq, gen, inst.s0);
    const auto got = dplr_chunk_forward(inst.seq, gen, inst.s0, plan);
    rep.cases.push_back({id + ",general",
                         std::max(max_abs_diff(got.outputs, ref.outputs), max_abs_diff(got.final_state, ref.final_state)),
                         1e-9});

    const DplrInstance sub = dplr_from_kda(inst.seq, inst.gates);
    const auto kda = recurrent_forward(VariantKind::KDA, inst.seq, inst.gates, inst.s0);
    const auto dplr_rec = recurrent_forward(VariantKind::DPLR, sub.seq, sub.gates, inst.s0);
    const auto dplr_chunk = dplr_chunk_forward(sub.seq, sub.gates, inst.s0, plan);
    rep.cases.push_back({id + ",substitution-recurrent", max_abs_diff(dplr_rec.outputs, kda.outputs), 1e-12});
    rep.cases.push_back({id + ",substitution-chunk", max_abs_diff(dplr_chunk.outputs, kda.outputs), 1e-9});

    const MatmulCensus census = matmul_census(p.t, p.c, p.d, p.d, seed);
    const bool ok = census.dplr_score_matrices_per_chunk() == 4 && census.kda_score_matrices_per_chunk() == 2 &&
                    census.dplr.matmuls >= census.kda.matmuls + 3 * census.num_chunks;
    rep.cases.push_back({id + ",census", ok ? 0.0 : 1.0, 0.5});
  }
  return rep;
}

SuiteReport verify_parallel(const SuiteOptions& opt) {
  SuiteReport rep{"parallel", {}};
  const auto g = grid(opt, {16, 32, 64}, {4, 16}, {8, 16});
  for (std::size_t i = 0; i < opt.seeds; ++i) {
    const std::uint64_t seed = opt.first_seed + i;
    const auto& p = g[static_cast<std::size_t>(seed % g.size())];
    InstanceSpec spec;
    spec.length = std::min(p.t, kParallelMaxLength);
    spec.key_dim = spec.value_dim = p.d;
    const Instance inst = make_instance(spec, seed);
    const std::string id = case_id(seed, spec.length, p.c, p.d);
    for (VariantKind k : {VariantKind::LA, VariantKind::Mamba2, VariantKind::GLA, VariantKind::DeltaNet,
                          VariantKind::GDN, VariantKind::KDA}) {
      const auto ref = k == VariantKind::LA ? recurrent_forward(k, inst.seq) : recurrent_forward(k, inst.seq, inst.gates);
      rep.cases.push_back({id + "," + std::string(to_string(k)),
                           max_abs_diff(parallel_forward(k, inst.seq, inst.gates), ref.outputs), 1e-9});
    }
    const auto chunk = chunk_forward(inst.seq, inst.gates, Matrix{}, ChunkPlan::for_length(spec.length, p.c));
    rep.cases.push_back({id + ",kda-chunk-vs-parallel",
                         max_abs_diff(chunk.outputs, parallel_forward(VariantKind::KDA, inst.seq, inst.gates)), 1e-9});
  }
  return rep;
}

SuiteReport verify_positional(const SuiteOptions& opt) {
  SuiteReport rep{"positional", {}};
  const auto g = grid(opt, {1, 16, 32}, {1}, {8});
  for (std::size_t i = 0; i < opt.seeds; ++i) {
    const std::uint64_t seed = opt.first_seed + i;
    const auto& p = g[static_cast<std::size_t>(seed % g.size())];
    const Instance inst = instance_for(std::min(p.t, kPositionalMaxLength), p.d, seed, false);
    for (VariantKind k : {VariantKind::GDN, VariantKind::KDA}) {
      rep.cases.push_back({case_id(seed, inst.seq.length(), 0, p.d) + "," + std::string(to_string(k)),
                           positional_form_check(k, inst.seq, inst.gates).max_deviation, 1e-9});
    }
  }
  return rep;
}

SuiteReport run_suite(std::string_view name, const SuiteOptions& opt) {
  if (name == "equivalence") return verify_equivalence(opt);
  if (name == "wy") return verify_wy(opt);
  if (name == "ut") return verify_ut(opt);
  if (name == "dplr") return verify_dplr(opt);
  if (name == "parallel") return verify_parallel(opt);
  if (name == "positional") return verify_positional(opt);
  throw ContractError("unknown suite " + std::string(name));
}

}  // namespace kda
