#include "kda/train.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kda/autograd.hpp"
#include "kda/param.hpp"
#include "kda/recurrent.hpp"

namespace kda {

void TrainConfig::check() const {
  if (embed_dim == 0 || key_dim == 0 || value_dim == 0) throw ContractError("model dimensions must be positive");
  if (steps == 0) throw ContractError("steps must be at least 1");
  if (batch_size == 0) throw ContractError("batch size must be at least 1");
  if (log_every == 0) throw ContractError("log_every must be at least 1");
  if (!(learning_rate >= 0.0)) throw ContractError("learning rate must be non-negative");
}

TaskStream TaskStream::fixed(std::vector<TaskInstance> instances) {
  if (instances.empty()) throw ContractError("fixed stream needs at least one instance");
  TaskStream s;
  for (const auto& inst : instances) {
    check_instance(inst);
    s.vocab_ = std::max(s.vocab_, inst.vocab_size);
  }
  s.fixed_ = std::move(instances);
  return s;
}

TaskStream TaskStream::generator(int vocab_size, Generator gen) {
  if (vocab_size < 1 || !gen) throw ContractError("generator stream needs a vocabulary and a generator");
  TaskStream s;
  s.vocab_ = vocab_size;
  s.gen_ = std::move(gen);
  return s;
}

std::vector<TaskInstance> TaskStream::batch(std::size_t size, std::mt19937_64& rng) const {
  std::vector<TaskInstance> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    if (gen_) {
      out.push_back(gen_(rng));
      check_instance(out.back());
      if (out.back().vocab_size > vocab_) throw ContractError("generated instance exceeds the stream vocabulary");
    } else {
      out.push_back(fixed_[i % fixed_.size()]);
    }
  }
  return out;
}

namespace {

enum Param { kEmbed, kWq, kWk, kWv, kConvQ, kConvK, kConvV, kWa, kBa, kWb, kBb, kWout, kBout, kNumParams };

struct Model {
  std::vector<Matrix> p;
};

Model init_model(const TrainConfig& cfg, int vocab, std::mt19937_64& rng) {
  const std::size_t d = cfg.embed_dim, dk = cfg.key_dim, dv = cfg.value_dim, nv = static_cast<std::size_t>(vocab);
  auto uniform = [&](std::size_t r, std::size_t c, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Matrix m(r, c);
    for (auto& x : m.data()) x = u(rng);
    return m;
  };
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  Model m;
  m.p.resize(kNumParams);
  std::normal_distribution<double> normal(0.0, 1.0);
  m.p[kEmbed] = Matrix(nv, d);
  for (auto& x : m.p[kEmbed].data()) x = normal(rng);
  m.p[kWq] = uniform(d, dk, sd);
  m.p[kWk] = uniform(d, dk, sd);
  m.p[kWv] = uniform(d, dv, sd);
  m.p[kConvQ] = uniform(dk, kConvWidth, 0.5);
  m.p[kConvK] = uniform(dk, kConvWidth, 0.5);
  m.p[kConvV] = uniform(dv, kConvWidth, 0.5);
  m.p[kWa] = uniform(d, dk, sd);
  m.p[kBa] = Matrix(1, dk, decay_bias_for(0.98));
  m.p[kWb] = uniform(d, 1, sd);
  m.p[kBb] = Matrix(1, 1);
  m.p[kWout] = uniform(dv, nv, 1.0 / std::sqrt(static_cast<double>(dv)));
  m.p[kBout] = Matrix(1, nv);
  return m;
}

double swish_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

Matrix map(const Matrix& m, double (*f)(double)) {
  Matrix out = m;
  for (auto& x : out.data()) x = f(x);
  return out;
}

// Adds the row vector b to every row of m.
void add_bias(Matrix& m, const Matrix& b) {
  for (std::size_t t = 0; t < m.rows(); ++t)
    for (std::size_t c = 0; c < m.cols(); ++c) m(t, c) += b(0, c);
}

void add_col_sums(Matrix& acc, const Matrix& m) {
  for (std::size_t t = 0; t < m.rows(); ++t)
    for (std::size_t c = 0; c < m.cols(); ++c) acc(0, c) += m(t, c);
}

void conv_backward(const Matrix& x, const Matrix& kernels, const Matrix& d_out, Matrix& d_x, Matrix& d_kernels) {
  d_x = Matrix(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t)
    for (std::size_t c = 0; c < x.cols(); ++c)
      for (std::size_t j = 0; j < kConvWidth; ++j) {
        const std::size_t lag = kConvWidth - 1 - j;
        if (lag > t) continue;
        d_x(t - lag, c) += kernels(c, j) * d_out(t, c);
        d_kernels(c, j) += x(t - lag, c) * d_out(t, c);
      }
}

Matrix l2_backward(const Matrix& pre, const Matrix& y, const Matrix& dy) {
  Matrix dx(pre.rows(), pre.cols());
  for (std::size_t t = 0; t < pre.rows(); ++t) {
    const double n = norm2<double>(pre.row(t));
    if (n <= 1e-12) {
      for (std::size_t c = 0; c < pre.cols(); ++c) dx(t, c) = dy(t, c) / 1e-12;
      continue;
    }
    const double proj = dot<double>(y.row(t), dy.row(t));
    for (std::size_t c = 0; c < pre.cols(); ++c) dx(t, c) = (dy(t, c) - y(t, c) * proj) / n;
  }
  return dx;
}

// Branch q or k: conv → swish → L2.
struct FeatureBranch {
  Matrix proj, conv, act, out;
};

FeatureBranch feature_forward(const Matrix& x, const Matrix& w, const Matrix& kernels, bool normalize) {
  FeatureBranch b;
  b.proj = matmul(x, w);
  b.conv = short_conv(b.proj, kernels);
  b.act = map(b.conv, swish);
  b.out = normalize ? l2_normalize_rows(b.act) : b.act;
  return b;
}

// Returns dX contribution; accumulates dW and dKernels.
Matrix feature_backward(const FeatureBranch& b, const Matrix& x, const Matrix& w, const Matrix& kernels,
                        const Matrix& d_out, bool normalize, Matrix& d_w, Matrix& d_kernels) {
  Matrix d_act = normalize ? l2_backward(b.act, b.out, d_out) : d_out;
  for (std::size_t i = 0; i < d_act.size(); ++i) d_act.data()[i] *= swish_grad(b.conv.data()[i]);
  Matrix d_proj;
  conv_backward(b.proj, kernels, d_act, d_proj, d_kernels);
  d_w += matmul_tn(x, d_proj);
  return matmul(d_proj, w.transposed());
}

struct InstanceStats {
  double loss_sum = 0;
  std::size_t correct = 0;
  std::size_t supervised = 0;
};

// Forward (and, when `grads` is given, backward scaled by `grad_scale`) on one instance.
InstanceStats run_instance(const Model& m, const TaskInstance& inst, std::vector<Matrix>* grads, double grad_scale) {
  const std::size_t n = inst.tokens.size();
  const std::size_t d = m.p[kEmbed].cols(), nv = m.p[kEmbed].rows();
  Matrix x(n, d);
  for (std::size_t t = 0; t < n; ++t) {
    const auto src = m.p[kEmbed].row(static_cast<std::size_t>(inst.tokens[t]));
    std::copy(src.begin(), src.end(), x.row(t).begin());
  }

  const FeatureBranch bq = feature_forward(x, m.p[kWq], m.p[kConvQ], true);
  const FeatureBranch bk = feature_forward(x, m.p[kWk], m.p[kConvK], true);
  const FeatureBranch bv = feature_forward(x, m.p[kWv], m.p[kConvV], false);
  Matrix za = matmul(x, m.p[kWa]);
  add_bias(za, m.p[kBa]);
  Matrix zb = matmul(x, m.p[kWb]);
  add_bias(zb, m.p[kBb]);

  AttnSequence seq{bq.out, bk.out, bv.out};
  GateSequence gates{Matrix(n, za.cols()), Vector(n)};
  for (std::size_t i = 0; i < za.size(); ++i) gates.log_alpha.data()[i] = -softplus(za.data()[i]);
  for (std::size_t t = 0; t < n; ++t) gates.beta[t] = sigmoid(zb(t, 0));

  const Matrix o = recurrent_forward(VariantKind::KDA, seq, gates).outputs;
  Matrix logits = matmul(o, m.p[kWout]);
  add_bias(logits, m.p[kBout]);

  InstanceStats st;
  Matrix d_logits(n, nv);
  for (std::size_t t = 0; t < n; ++t) {
    const int target = inst.targets[t];
    if (target == kIgnoreTarget) continue;
    const auto row = logits.row(t);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0;
    for (double l : row) z += std::exp(l - mx);
    const auto tgt = static_cast<std::size_t>(target);
    st.loss_sum += std::log(z) + mx - row[tgt];
    st.correct += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == tgt;
    ++st.supervised;
    for (std::size_t c = 0; c < nv; ++c) d_logits(t, c) = std::exp(row[c] - mx) / z * grad_scale;
    d_logits(t, tgt) -= grad_scale;
  }
  if (!grads) return st;

  auto& g = *grads;
  g[kWout] += matmul_tn(o, d_logits);
  add_col_sums(g[kBout], d_logits);
  const Matrix d_o = matmul(d_logits, m.p[kWout].transposed());
  const KdaGradients kg = kda_backward(seq, gates, StateMatrix{}, d_o);

  Matrix dzb(n, 1);
  for (std::size_t t = 0; t < n; ++t) dzb(t, 0) = kg.d_beta[t] * gates.beta[t] * (1.0 - gates.beta[t]);
  Matrix dza(n, za.cols());
  for (std::size_t i = 0; i < za.size(); ++i) dza.data()[i] = -sigmoid(za.data()[i]) * kg.d_log_alpha.data()[i];
  g[kWb] += matmul_tn(x, dzb);
  add_col_sums(g[kBb], dzb);
  g[kWa] += matmul_tn(x, dza);
  add_col_sums(g[kBa], dza);

  Matrix dx = matmul(dzb, m.p[kWb].transposed());
  dx += matmul(dza, m.p[kWa].transposed());
  dx += feature_backward(bq, x, m.p[kWq], m.p[kConvQ], kg.d_q, true, g[kWq], g[kConvQ]);
  dx += feature_backward(bk, x, m.p[kWk], m.p[kConvK], kg.d_k, true, g[kWk], g[kConvK]);
  dx += feature_backward(bv, x, m.p[kWv], m.p[kConvV], kg.d_v, false, g[kWv], g[kConvV]);
  for (std::size_t t = 0; t < n; ++t) {
    auto dst = g[kEmbed].row(static_cast<std::size_t>(inst.tokens[t]));
    const auto src = dx.row(t);
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }
  return st;
}

InstanceStats evaluate(const Model& m, const std::vector<TaskInstance>& set) {
  InstanceStats total;
  for (const auto& inst : set) {
    const auto s = run_instance(m, inst, nullptr, 0.0);
    total.loss_sum += s.loss_sum;
    total.correct += s.correct;
    total.supervised += s.supervised;
  }
  return total;
}

double mean_loss(const InstanceStats& s) { return s.supervised ? s.loss_sum / static_cast<double>(s.supervised) : 0.0; }
double accuracy(const InstanceStats& s) {
  return s.supervised ? static_cast<double>(s.correct) / static_cast<double>(s.supervised) : 0.0;
}

}  // namespace

TrainResult train_toy(const TaskStream& stream, const TrainConfig& cfg) {
  cfg.check();
  std::mt19937_64 rng(cfg.seed);
  Model model = init_model(cfg, stream.vocab_size(), rng);

  std::vector<TaskInstance> eval_set;
  if (stream.is_fixed()) {
    eval_set = stream.fixed_instances();
  } else {
    std::mt19937_64 eval_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    eval_set = stream.batch(cfg.eval_size, eval_rng);
  }

  TrainResult res;
  res.initial_eval_loss = mean_loss(evaluate(model, eval_set));

  std::vector<Matrix> grads(kNumParams), m1(kNumParams), m2(kNumParams);
  for (std::size_t i = 0; i < kNumParams; ++i) {
    m1[i] = Matrix(model.p[i].rows(), model.p[i].cols());
    m2[i] = m1[i];
  }
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto batch = stream.batch(cfg.batch_size, rng);
    std::size_t supervised = 0;
    for (const auto& inst : batch) supervised += inst.supervised();
    if (supervised == 0) throw ContractError("batch has no supervised positions");
    const double scale = 1.0 / static_cast<double>(supervised);

    for (std::size_t i = 0; i < kNumParams; ++i) grads[i] = Matrix(model.p[i].rows(), model.p[i].cols());
    InstanceStats st;
    for (const auto& inst : batch) {
      const auto s = run_instance(model, inst, &grads, scale);
      st.loss_sum += s.loss_sum;
      st.correct += s.correct;
      st.supervised += s.supervised;
    }
    const double loss = mean_loss(st);
    if (!std::isfinite(loss)) throw NumericError("training loss is not finite", step);
    if (step % cfg.log_every == 0 || step == cfg.steps || step == 1) res.curve.push_back({step, loss, accuracy(st)});

    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t i = 0; i < kNumParams; ++i) {
      auto p = model.p[i].data();
      const auto g = grads[i].data();
      if (cfg.optimizer == OptimizerKind::SGD) {
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= cfg.learning_rate * g[j];
        continue;
      }
      auto a = m1[i].data();
      auto b = m2[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        a[j] = b1 * a[j] + (1 - b1) * g[j];
        b[j] = b2 * b[j] + (1 - b2) * g[j] * g[j];
        p[j] -= cfg.learning_rate * (a[j] / c1) / (std::sqrt(b[j] / c2) + eps);
      }
    }
  }

  const auto fin = evaluate(model, eval_set);
  res.final_eval_loss = mean_loss(fin);
  res.final_eval_accuracy = accuracy(fin);
  return res;
}

}  // namespace kda
