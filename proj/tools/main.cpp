#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kda/autograd.hpp"
#include "kda/chunkwise.hpp"
#include "kda/cost.hpp"
#include "kda/io.hpp"
#include "kda/tasks.hpp"
#include "kda/train.hpp"
#include "kda/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitVerify = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writes to --out when given, otherwise to stdout.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    std::cout.flush();
    if (!std::cout) throw kda::IoError("cannot write to stdout");
  } else {
    kda::write_file(path, text);
  }
}

kda::Precision effective_precision(kda::Precision fallback) {
  return kda::precision_from_env().value_or(fallback);
}

// ---- verify

struct VerifyArgs {
  std::string suite;
  std::size_t seeds = 20;
  std::uint64_t seed = 0;
  std::vector<std::size_t> lengths, chunks, dims;
  std::string out;
};

int run_verify(const VerifyArgs& a) {
  kda::SuiteOptions opt;
  opt.seeds = a.seeds;
  opt.first_seed = a.seed;
  opt.lengths = a.lengths;
  opt.chunk_sizes = a.chunks;
  opt.dims = a.dims;
  opt.precision = effective_precision(kda::Precision::F64);

  std::vector<std::string> names;
  if (a.suite == "all") {
    for (auto s : kda::kSuites) names.emplace_back(s);
  } else {
    names.push_back(a.suite);
  }
  bool ok = true;
  std::string json = "{\"precision\":\"" + std::string(kda::to_string(opt.precision)) + "\",\"suites\":[";
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto rep = kda::run_suite(names[i], opt);
    ok = ok && rep.passed();
    std::cerr << rep.suite << ": " << (rep.passed() ? "ok" : "FAILED") << " (" << rep.cases.size()
              << " cases, max error " << rep.max_error() << ")\n";
    json += (i ? "," : "") + rep.to_json();
  }
  json += "],\"passed\":" + std::string(ok ? "true" : "false") + "}\n";
  emit(a.out, json);
  return ok ? kExitOk : kExitVerify;
}

// ---- bench

struct BenchArgs {
  std::vector<std::string> variants{"kda", "dplr", "recurrent"};
  std::vector<std::size_t> lengths{1024};
  std::vector<std::size_t> chunks{64};
  std::vector<std::size_t> dh{64};
  std::vector<std::size_t> dv{64};
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::string out;
};

int run_bench(const BenchArgs& a) {
  if (a.repeats == 0) throw UsageError("--repeats must be at least 1");
  std::vector<kda::BenchCase> grid;
  for (const auto& name : a.variants) {
    const auto v = kda::parse_bench_variant(name);
    if (!v) throw UsageError("unknown variant " + name);
    for (auto t : a.lengths)
      for (auto c : a.chunks)
        for (auto h : a.dh)
          for (auto d : a.dv) grid.push_back({*v, t, c, h, d});
  }
  const auto rows = kda::bench_kernels(grid, a.repeats, a.seed, effective_precision(kda::Precision::F32));
  std::ostringstream csv;
  kda::write_bench_csv(csv, rows);
  emit(a.out, csv.str());
  return kExitOk;
}

// ---- flops

struct FlopsArgs {
  std::uint64_t C = 64;
  std::uint64_t dh = 128;
  std::uint64_t T = 0;
  bool crossover = false;
  std::string hybrid;  // "a:b"
  std::uint64_t layers = 0;
  std::uint64_t cache_bytes = 0;
  std::uint64_t state_bytes = 0;
  double bandwidth = 0;
};

std::pair<std::uint64_t, std::uint64_t> parse_ratio(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw UsageError("--hybrid expects a:b, got " + s);
  try {
    std::size_t p1 = 0, p2 = 0;
    const auto a = std::stoull(s.substr(0, colon), &p1);
    const auto b = std::stoull(s.substr(colon + 1), &p2);
    if (p1 != colon || p2 != s.size() - colon - 1) throw std::invalid_argument(s);
    return {a, b};
  } catch (const std::logic_error&) {
    throw UsageError("--hybrid expects a:b, got " + s);
  }
}

int run_flops(const FlopsArgs& a) {
  if (a.crossover) {
    std::cout << kda::crossover_length(a.C, a.dh) << "\n";
    return kExitOk;
  }
  if (a.T > 0) {
    std::cout << "flops_kda=" << kda::flops_kda(a.T, a.C, a.dh) << "\n";
    std::cout << "flops_attn=" << kda::flops_attn(a.T, a.dh) << "\n";
  }
  if (!a.hybrid.empty()) {
    const auto [lin, full] = parse_ratio(a.hybrid);
    kda::CostScenario s;
    s.T = a.T;
    s.C = a.C;
    s.d_h = a.dh;
    s.linear_layers = lin;
    s.full_layers = full;
    const auto r = kda::kv_cache_ratio(lin, full);
    std::cout << "kv_cache_ratio=" << kda::to_string(r) << " (" << r.value() << ")\n";
    if (a.bandwidth > 0) {
      s.n_layers = a.layers;
      s.full_cache_bytes_per_token = a.cache_bytes;
      s.linear_state_bytes = a.state_bytes;
      const auto p = kda::project_decode(s, a.bandwidth);
      std::cout << "cache_bytes_hybrid=" << p.bytes.hybrid << "\n"
                << "cache_bytes_full=" << p.bytes.full << "\n"
                << "decode_seconds_hybrid=" << p.hybrid_seconds << "\n"
                << "decode_seconds_full=" << p.full_seconds << "\n"
                << "decode_speedup=" << p.speedup << "\n";
    }
  }
  if (a.T == 0 && a.hybrid.empty()) {
    std::cout << "crossover_length=" << kda::crossover_length(a.C, a.dh) << "\n";
  }
  return kExitOk;
}

// ---- gen

struct GenArgs {
  std::string task;
  std::size_t n = 100;
  std::uint64_t seed = 0;
  int vocab = 0;  // 0 picks the task default
  std::size_t tokens = 8;
  std::size_t pairs = 4;
  std::size_t queries = 4;
  std::size_t stacks = 2;
  std::size_t ops = 8;
  std::string out;
};

int default_vocab(const std::string& task) { return task == "palindrome" ? 27 : 32; }

kda::TaskInstance gen_one(const GenArgs& a, int vocab, std::uint64_t seed) {
  if (a.task == "palindrome") return kda::gen_palindrome(a.tokens, vocab, seed);
  if (a.task == "mqar") return kda::gen_mqar(a.pairs, a.queries, vocab, seed);
  return kda::gen_stack(a.stacks, a.ops, vocab, seed);
}

int run_gen(const GenArgs& a) {
  const int vocab = a.vocab ? a.vocab : default_vocab(a.task);
  std::mt19937_64 rng(a.seed);
  std::vector<kda::TaskInstance> out;
  out.reserve(a.n);
  for (std::size_t i = 0; i < a.n; ++i) out.push_back(gen_one(a, vocab, rng()));
  std::ostringstream s;
  kda::write_jsonl(s, out);
  emit(a.out, s.str());
  return kExitOk;
}

// ---- train

struct TrainArgs {
  GenArgs task;
  kda::TrainConfig cfg;
  std::string optimizer = "adam";
  bool overfit = false;
  std::string out;
};

int run_train(TrainArgs a) {
  a.cfg.optimizer = a.optimizer == "sgd" ? kda::OptimizerKind::SGD : kda::OptimizerKind::Adam;
  const int vocab = a.task.vocab ? a.task.vocab : default_vocab(a.task.task);
  const GenArgs g = a.task;
  kda::TaskStream stream =
      a.overfit ? kda::TaskStream::fixed({gen_one(g, vocab, a.cfg.seed)})
                : kda::TaskStream::generator(vocab, [g, vocab](std::mt19937_64& rng) { return gen_one(g, vocab, rng()); });
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = kda::train_toy(stream, a.cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream csv;
  kda::write_curve_csv(csv, res.curve);
  emit(a.out, csv.str());
  std::cerr << "initial_eval_loss=" << res.initial_eval_loss << " final_eval_loss=" << res.final_eval_loss
            << " final_eval_accuracy=" << res.final_eval_accuracy << " seconds=" << secs << "\n";
  return kExitOk;
}

// ---- gradcheck

struct GradArgs {
  std::size_t T = 24;
  std::size_t d = 8;
  std::size_t instances = 1;
  std::uint64_t seed = 0;
  double h = 1e-5;
  double tolerance = 1e-5;
  std::string loss = "squared";
};

int run_gradcheck(const GradArgs& a) {
  std::mt19937_64 rng(a.seed);
  const auto loss = a.loss == "linear" ? kda::LossKind::Linear : kda::LossKind::Squared;
  double worst = 0;
  std::string where;
  for (std::size_t i = 0; i < a.instances; ++i) {
    kda::InstanceSpec spec;
    spec.length = a.T;
    spec.key_dim = spec.value_dim = a.d;
    spec.random_initial_state = true;
    const auto inst = kda::make_instance(spec, rng());
    const auto rep = kda::fd_check(inst.seq, inst.gates, inst.s0, loss, a.h);
    if (rep.max_rel_error >= worst) {
      worst = rep.max_rel_error;
      where = "instance " + std::to_string(i) + " " + rep.worst;
    }
  }
  const bool ok = worst < a.tolerance;
  std::cout << "max_rel_error=" << worst << " at " << where << (ok ? "" : " (above tolerance)") << "\n";
  return ok ? kExitOk : kExitVerify;
}

// ---- golden

struct GoldenArgs {
  std::size_t T = 64;
  std::size_t C = 16;
  std::size_t d = 8;
  std::uint64_t seed = 0;
  bool scratch = true;
  double tolerance = 1e-9;
  std::string path;
};

int run_golden_make(const GoldenArgs& a) {
  kda::InstanceSpec spec;
  spec.length = a.T;
  spec.key_dim = spec.value_dim = a.d;
  spec.random_initial_state = true;
  const auto inst = kda::make_instance(spec, a.seed);
  kda::TestVector tv{a.C, inst.seq, inst.gates, inst.s0, {}, {}, {}};
  const auto ref = kda::recurrent_forward(kda::VariantKind::KDA, inst.seq, inst.gates, inst.s0);
  tv.expected_o = ref.outputs;
  tv.expected_s = ref.final_state;
  if (a.scratch) {
    kda::ChunkOptions opt;
    opt.keep_scratch = true;
    tv.scratch = kda::chunk_forward(inst.seq, inst.gates, inst.s0, kda::ChunkPlan::for_length(a.T, a.C), opt).scratch_trace;
  }
  emit(a.path, kda::to_json(tv));
  return kExitOk;
}

int run_golden_check(const GoldenArgs& a) {
  kda::TestVector tv;
  try {
    tv = kda::read_test_vector(a.path);
  } catch (const kda::ShapeError& e) {
    throw kda::IoError(a.path + ": " + e.what());
  }
  kda::ChunkOptions opt;
  opt.keep_scratch = !tv.scratch.empty();
  const auto got =
      kda::chunk_forward(tv.seq, tv.gates, tv.s0, kda::ChunkPlan::for_length(tv.seq.length(), tv.chunk_size), opt);
  double err = 0;
  if (tv.expected_o) err = std::max(err, kda::max_abs_diff(got.outputs, *tv.expected_o));
  if (tv.expected_s) err = std::max(err, kda::max_abs_diff(got.final_state, *tv.expected_s));
  if (!tv.scratch.empty()) {
    if (tv.scratch.size() != got.scratch_trace.size()) throw kda::IoError("scratch trace has the wrong chunk count");
    for (std::size_t c = 0; c < tv.scratch.size(); ++c) {
      const auto& e = tv.scratch[c];
      const auto& g = got.scratch_trace[c];
      for (auto [x, y] : {std::pair{&e.gamma_cum, &g.gamma_cum}, {&e.a_inv, &g.a_inv}, {&e.m_ut, &g.m_ut},
                          {&e.w, &g.w}, {&e.u, &g.u}}) {
        err = std::max(err, kda::max_abs_diff(*x, *y));
      }
    }
  }
  const bool ok = err < a.tolerance;
  std::cout << "max_abs_error=" << err << (ok ? "" : " (above tolerance)") << "\n";
  return ok ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel laboratory for gated delta-rule linear attention"};
  app.require_subcommand(1);
  int code = kExitOk;

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run an invariant suite and print a JSON report");
  std::vector<std::string> suites(std::begin(kda::kSuites), std::end(kda::kSuites));
  suites.emplace_back("all");
  verify->add_option("suite", va.suite, "Suite name")->required()->check(CLI::IsMember(suites));
  verify->add_option("--seeds", va.seeds, "Number of seeded instances per suite")->check(CLI::PositiveNumber);
  verify->add_option("--seed", va.seed, "First seed");
  verify->add_option("--T", va.lengths, "Sequence lengths")->delimiter(',')->check(CLI::PositiveNumber);
  verify->add_option("--C", va.chunks, "Chunk sizes")->delimiter(',')->check(CLI::PositiveNumber);
  verify->add_option("--d", va.dims, "Head dimensions (d_k = d_v)")->delimiter(',')->check(CLI::PositiveNumber);
  verify->add_option("--out", va.out, "Report file (default stdout)");
  verify->callback([&] { code = run_verify(va); });

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Time forward kernels and emit CSV");
  bench->add_option("--variants", ba.variants, "kda, dplr, recurrent")->delimiter(',')->capture_default_str();
  bench->add_option("--T", ba.lengths, "Sequence lengths")->delimiter(',')->capture_default_str();
  bench->add_option("--C", ba.chunks, "Chunk sizes")->delimiter(',')->capture_default_str();
  bench->add_option("--dh", ba.dh, "Key dimensions")->delimiter(',')->capture_default_str();
  bench->add_option("--dv", ba.dv, "Value dimensions")->delimiter(',')->capture_default_str();
  bench->add_option("--repeats", ba.repeats, "Timed runs per case")->capture_default_str();
  bench->add_option("--seed", ba.seed, "Instance seed");
  bench->add_option("--out", ba.out, "CSV file (default stdout)");
  bench->callback([&] { code = run_bench(ba); });

  FlopsArgs fa;
  auto* flops = app.add_subcommand("flops", "Analytic FLOP and KV-cache model");
  flops->add_option("--C", fa.C, "Chunk size")->capture_default_str();
  flops->add_option("--dh", fa.dh, "Head dimension")->capture_default_str();
  flops->add_option("--T", fa.T, "Sequence length");
  flops->add_flag("--crossover", fa.crossover, "Print only the crossover length");
  flops->add_option("--hybrid", fa.hybrid, "Linear:full layer ratio, e.g. 3:1");
  flops->add_option("--layers", fa.layers, "Total layers for the decode projection");
  flops->add_option("--cache-bytes", fa.cache_bytes, "KV bytes per token per full-attention layer");
  flops->add_option("--state-bytes", fa.state_bytes, "State bytes per linear layer");
  flops->add_option("--bandwidth", fa.bandwidth, "Memory bandwidth in bytes/s for the decode projection");
  flops->callback([&] { code = run_flops(fa); });

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "Generate synthetic task instances as JSONL");
  auto add_task_flags = [](CLI::App* cmd, GenArgs& g) {
    cmd->add_option("--vocab", g.vocab, "Vocabulary size (default 27 palindrome, 32 otherwise)");
    cmd->add_option("--tokens", g.tokens, "Palindrome content length")->capture_default_str();
    cmd->add_option("--pairs", g.pairs, "MQAR key-value pairs")->capture_default_str();
    cmd->add_option("--queries", g.queries, "MQAR queries")->capture_default_str();
    cmd->add_option("--stacks", g.stacks, "Stack count")->capture_default_str();
    cmd->add_option("--ops", g.ops, "Stack operations")->capture_default_str();
  };
  gen->add_option("task", ga.task, "palindrome, mqar or stack")
      ->required()
      ->check(CLI::IsMember({"palindrome", "mqar", "stack"}));
  gen->add_option("--n", ga.n, "Number of instances")->capture_default_str();
  gen->add_option("--seed", ga.seed, "Seed");
  gen->add_option("--out", ga.out, "JSONL file (default stdout)");
  add_task_flags(gen, ga);
  gen->callback([&] { code = run_gen(ga); });

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the toy single-head model and emit the loss curve as CSV");
  train->add_option("task", ta.task.task, "palindrome, mqar or stack")
      ->required()
      ->check(CLI::IsMember({"palindrome", "mqar", "stack"}));
  add_task_flags(train, ta.task);
  train->add_option("--steps", ta.cfg.steps, "Optimizer steps")->capture_default_str();
  train->add_option("--lr", ta.cfg.learning_rate, "Learning rate")->capture_default_str();
  train->add_option("--batch", ta.cfg.batch_size, "Batch size")->capture_default_str();
  train->add_option("--dim", ta.cfg.embed_dim, "Embedding dimension")->capture_default_str();
  train->add_option("--dk", ta.cfg.key_dim, "Key dimension")->capture_default_str();
  train->add_option("--dv", ta.cfg.value_dim, "Value dimension")->capture_default_str();
  train->add_option("--eval", ta.cfg.eval_size, "Held-out evaluation instances")->capture_default_str();
  train->add_option("--log-every", ta.cfg.log_every, "Curve sampling interval")->capture_default_str();
  train->add_option("--optimizer", ta.optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}))->capture_default_str();
  train->add_option("--seed", ta.cfg.seed, "Seed");
  train->add_flag("--overfit", ta.overfit, "Train on a single fixed instance");
  train->add_option("--out", ta.out, "CSV file (default stdout)");
  train->callback([&] { code = run_train(ta); });

  GradArgs gra;
  auto* grad = app.add_subcommand("gradcheck", "Compare the analytic backward pass with central differences");
  grad->add_option("--T", gra.T, "Sequence length")->capture_default_str();
  grad->add_option("--d", gra.d, "Head dimension")->capture_default_str();
  grad->add_option("--instances", gra.instances, "Random instances")->capture_default_str();
  grad->add_option("--seed", gra.seed, "Seed");
  grad->add_option("--step", gra.h, "Finite-difference step")->capture_default_str();
  grad->add_option("--tol", gra.tolerance, "Relative error tolerance")->capture_default_str();
  grad->add_option("--loss", gra.loss, "squared or linear")->check(CLI::IsMember({"squared", "linear"}))->capture_default_str();
  grad->callback([&] { code = run_gradcheck(gra); });

  GoldenArgs goa;
  auto* golden = app.add_subcommand("golden", "Write or replay chunkwise test vectors");
  golden->require_subcommand(1);
  auto* make = golden->add_subcommand("make", "Write a test vector with recurrent reference outputs");
  make->add_option("--T", goa.T, "Sequence length")->capture_default_str();
  make->add_option("--C", goa.C, "Chunk size")->capture_default_str();
  make->add_option("--d", goa.d, "Head dimension")->capture_default_str();
  make->add_option("--seed", goa.seed, "Seed");
  make->add_option("--out", goa.path, "Output file (default stdout)");
  make->add_flag("!--no-scratch", goa.scratch, "Omit the per-chunk scratch trace");
  make->callback([&] { code = run_golden_make(goa); });
  auto* check = golden->add_subcommand("check", "Replay a test vector through the chunkwise kernel");
  check->add_option("file", goa.path, "Test vector")->required();
  check->add_option("--tol", goa.tolerance, "Absolute tolerance")->capture_default_str();
  check->callback([&] { code = run_golden_check(goa); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const kda::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return code;
}
