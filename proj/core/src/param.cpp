#include "kda/param.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace kda {

namespace {

constexpr double kNormFloor = 1e-12;

void expect_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(name) + " must be " + shape_string(rows, cols) + ", got " +
                     shape_string(m.rows(), m.cols()));
  }
}

void expect_size(const Vector& v, std::size_t n, const char* name) {
  if (v.size() != n) throw ShapeError(std::string(name) + " must have " + std::to_string(n) + " entries");
}

Matrix apply(const Matrix& m, double (*f)(double)) {
  Matrix out = m;
  for (auto& x : out.data()) x = f(x);
  return out;
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double swish(double x) { return x * sigmoid(x); }

double decay_bias_for(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("target decay must lie in (0, 1)");
  return std::log(std::expm1(-std::log(alpha)));
}

void ParamWeights::check() const {
  const std::size_t d = model_dim, dk = key_dim, dv = value_dim;
  if (heads.empty()) throw ShapeError("at least one head is required");
  if (heads.size() * dv != d) throw ShapeError("heads × d_v must equal the model dimension");
  for (const auto& h : heads) {
    expect_shape(h.wq, d, dk, "wq");
    expect_shape(h.wk, d, dk, "wk");
    expect_shape(h.wv, d, dv, "wv");
    expect_shape(h.conv_q, dk, kConvWidth, "conv_q");
    expect_shape(h.conv_k, dk, kConvWidth, "conv_k");
    expect_shape(h.conv_v, dv, kConvWidth, "conv_v");
    expect_shape(h.alpha_down, d, dk, "alpha_down");
    expect_shape(h.alpha_up, dk, dk, "alpha_up");
    expect_size(h.decay_bias, dk, "decay_bias");
    expect_size(h.w_beta, d, "w_beta");
    expect_size(h.rms_weight, dv, "rms_weight");
  }
  expect_shape(gate_down, d, dv, "gate_down");
  expect_shape(gate_up, dv, d, "gate_up");
  expect_shape(wo, d, d, "wo");
}

ParamWeights make_param_weights(std::size_t model_dim, std::size_t key_dim, std::size_t value_dim,
                                std::size_t num_heads, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-scale, scale);
  auto mat = [&](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (auto& x : m.data()) x = uni(rng);
    return m;
  };
  auto vec = [&](std::size_t n) {
    Vector v(n);
    for (auto& x : v) x = uni(rng);
    return v;
  };

  ParamWeights w;
  w.model_dim = model_dim;
  w.key_dim = key_dim;
  w.value_dim = value_dim;
  const double bias = decay_bias_for(0.98);
  for (std::size_t h = 0; h < num_heads; ++h) {
    HeadWeights hw;
    hw.wq = mat(model_dim, key_dim);
    hw.wk = mat(model_dim, key_dim);
    hw.wv = mat(model_dim, value_dim);
    hw.conv_q = mat(key_dim, kConvWidth);
    hw.conv_k = mat(key_dim, kConvWidth);
    hw.conv_v = mat(value_dim, kConvWidth);
    hw.alpha_down = mat(model_dim, key_dim);
    hw.alpha_up = mat(key_dim, key_dim);
    hw.decay_bias = Vector(key_dim, bias);
    hw.w_beta = vec(model_dim);
    hw.rms_weight = Vector(value_dim, 1.0);
    w.heads.push_back(std::move(hw));
  }
  w.gate_down = mat(model_dim, value_dim);
  w.gate_up = mat(value_dim, model_dim);
  w.wo = mat(model_dim, model_dim);
  w.check();
  return w;
}

Matrix short_conv(const Matrix& x, const Matrix& kernels) {
  expect_shape(kernels, x.cols(), kConvWidth, "conv kernels");
  Matrix out(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double acc = 0;
      for (std::size_t j = 0; j < kConvWidth; ++j) {
        const std::size_t lag = kConvWidth - 1 - j;
        if (lag <= t) acc += kernels(c, j) * x(t - lag, c);
      }
      out(t, c) = acc;
    }
  }
  return out;
}

Matrix l2_normalize_rows(const Matrix& x) {
  Matrix out = x;
  for (std::size_t t = 0; t < out.rows(); ++t) {
    auto row = out.row(t);
    const double n = std::max(norm2<double>(row), kNormFloor);
    for (auto& e : row) e /= n;
  }
  return out;
}

Matrix rms_norm(const Matrix& y, std::span<const double> weight) {
  if (weight.size() != y.cols()) throw ShapeError("RMSNorm weight must match the row width");
  Matrix out = y;
  for (std::size_t t = 0; t < out.rows(); ++t) {
    auto row = out.row(t);
    double ss = 0;
    for (double e : row) ss += e * e;
    const double rms = std::max(std::sqrt(ss / static_cast<double>(row.size())), kNormFloor);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = row[c] / rms * weight[c];
  }
  return out;
}

HeadFeatures featurize(const Matrix& x, const HeadWeights& head) {
  if (!x.all_finite()) throw ContractError("token features must be finite");
  const std::size_t n = x.rows(), dk = head.wq.cols();

  HeadFeatures f;
  f.seq.q = l2_normalize_rows(apply(short_conv(matmul(x, head.wq), head.conv_q), swish));
  f.seq.k = l2_normalize_rows(apply(short_conv(matmul(x, head.wk), head.conv_k), swish));
  f.seq.v = apply(short_conv(matmul(x, head.wv), head.conv_v), swish);

  Matrix z = matmul(matmul(x, head.alpha_down), head.alpha_up);
  f.gates.log_alpha = Matrix(n, dk);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t c = 0; c < dk; ++c) f.gates.log_alpha(t, c) = -softplus(z(t, c) + head.decay_bias[c]);

  f.gates.beta.resize(n);
  for (std::size_t t = 0; t < n; ++t) f.gates.beta[t] = sigmoid(dot<double>(x.row(t), head.w_beta));
  return f;
}

std::vector<HeadFeatures> featurize(const Matrix& x, const ParamWeights& w) {
  w.check();
  if (x.cols() != w.model_dim) throw ShapeError("token features must have model_dim columns");
  std::vector<HeadFeatures> out;
  out.reserve(w.heads.size());
  for (const auto& h : w.heads) out.push_back(featurize(x, h));
  return out;
}

Matrix output_gate(std::span<const Matrix> core_out, const Matrix& x, const ParamWeights& w) {
  w.check();
  if (core_out.size() != w.heads.size()) throw ShapeError("one core output per head is required");
  const std::size_t n = x.rows(), dv = w.value_dim;
  if (x.cols() != w.model_dim) throw ShapeError("token features must have model_dim columns");

  Matrix mixed(n, w.model_dim);
  for (std::size_t h = 0; h < core_out.size(); ++h) {
    expect_shape(core_out[h], n, dv, "core output");
    const Matrix normed = rms_norm(core_out[h], w.heads[h].rms_weight);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t c = 0; c < dv; ++c) mixed(t, h * dv + c) = normed(t, c);
  }
  const Matrix gate = apply(matmul(matmul(x, w.gate_down), w.gate_up), sigmoid);
  return matmul(hadamard(gate, mixed), w.wo);
}

}  // namespace kda
