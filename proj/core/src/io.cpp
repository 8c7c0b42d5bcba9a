#include "kda/io.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace kda {

namespace {

using nlohmann::json;

json flat(const Matrix& m) { return json(m.storage()); }

Matrix matrix_field(const json& j, const char* key, std::size_t rows, std::size_t cols) {
  if (!j.contains(key)) throw IoError(std::string("missing field ") + key);
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != rows * cols) {
    throw ShapeError(std::string("field ") + key + " must hold " + std::to_string(rows * cols) + " numbers");
  }
  return Matrix(rows, cols, a.get<std::vector<double>>());
}

std::size_t size_field(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer() || j.at(key).get<long long>() < 0) {
    throw IoError(std::string("missing or invalid integer field ") + key);
  }
  return j.at(key).get<std::size_t>();
}

json tensor(const Matrix& m) { return {{"shape", {m.rows(), m.cols()}}, {"data", m.storage()}}; }
json tensor(const Vector& v) { return {{"shape", {v.size()}}, {"data", v}}; }

const json& named(const json& j, const std::string& name) {
  if (!j.contains(name)) throw IoError("weights file lacks " + name);
  return j.at(name);
}

Matrix tensor_matrix(const json& j, const std::string& name) {
  const auto& t = named(j, name);
  const auto shape = t.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) throw ShapeError(name + " must be two-dimensional");
  const auto data = t.at("data").get<std::vector<double>>();
  if (data.size() != shape[0] * shape[1]) throw ShapeError(name + " data does not match its shape");
  return Matrix(shape[0], shape[1], data);
}

Vector tensor_vector(const json& j, const std::string& name) {
  const auto& t = named(j, name);
  const auto shape = t.at("shape").get<std::vector<std::size_t>>();
  auto data = t.at("data").get<std::vector<double>>();
  if (shape.size() != 1 || data.size() != shape[0]) throw ShapeError(name + " must be one-dimensional");
  return data;
}

}  // namespace

std::string to_json(const TestVector& tv) {
  json j;
  j["T"] = tv.seq.length();
  j["C"] = tv.chunk_size;
  j["dk"] = tv.seq.key_dim();
  j["dv"] = tv.seq.value_dim();
  j["q"] = flat(tv.seq.q);
  j["k"] = flat(tv.seq.k);
  j["v"] = flat(tv.seq.v);
  j["log_alpha"] = flat(tv.gates.log_alpha);
  j["beta"] = tv.gates.beta;
  j["s0"] = tv.s0.empty() ? json(std::vector<double>(tv.seq.key_dim() * tv.seq.value_dim(), 0.0)) : flat(tv.s0);
  if (tv.expected_o) j["expected_o"] = flat(*tv.expected_o);
  if (tv.expected_s) j["expected_s"] = flat(*tv.expected_s);
  if (!tv.scratch.empty()) {
    json arr = json::array();
    for (const auto& s : tv.scratch) {
      arr.push_back({{"gamma_cum", flat(s.gamma_cum)}, {"a_inv", flat(s.a_inv)}, {"m_ut", flat(s.m_ut)},
                     {"w", flat(s.w)}, {"u", flat(s.u)}});
    }
    j["scratch"] = std::move(arr);
  }
  return j.dump(1);
}

TestVector parse_test_vector(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed test vector: ") + e.what());
  }
  if (!j.is_object()) throw IoError("test vector must be a JSON object");
  try {
    const std::size_t n = size_field(j, "T"), c = size_field(j, "C"), dk = size_field(j, "dk"), dv = size_field(j, "dv");
    TestVector tv;
    tv.chunk_size = c;
    tv.seq = {matrix_field(j, "q", n, dk), matrix_field(j, "k", n, dk), matrix_field(j, "v", n, dv)};
    tv.gates.log_alpha = matrix_field(j, "log_alpha", n, dk);
    tv.gates.beta = matrix_field(j, "beta", n, 1).storage();
    tv.s0 = matrix_field(j, "s0", dk, dv);
    if (j.contains("expected_o")) tv.expected_o = matrix_field(j, "expected_o", n, dv);
    if (j.contains("expected_s")) tv.expected_s = matrix_field(j, "expected_s", dk, dv);
    if (j.contains("scratch")) {
      for (const auto& s : j.at("scratch")) {
        tv.scratch.push_back({matrix_field(s, "gamma_cum", c, dk), matrix_field(s, "a_inv", c, c),
                              matrix_field(s, "m_ut", c, c), matrix_field(s, "w", c, dk), matrix_field(s, "u", c, dv)});
      }
    }
    return tv;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed test vector: ") + e.what());
  }
}

TestVector read_test_vector(const std::filesystem::path& path) { return parse_test_vector(read_file(path)); }

void write_test_vector(const std::filesystem::path& path, const TestVector& tv) { write_file(path, to_json(tv) + "\n"); }

void write_jsonl(std::ostream& out, const std::vector<TaskInstance>& instances) {
  for (const auto& inst : instances) {
    out << json{{"tokens", inst.tokens}, {"targets", inst.targets}, {"vocab_size", inst.vocab_size}}.dump() << '\n';
  }
  if (!out) throw IoError("failed to write JSONL");
}

std::vector<TaskInstance> read_jsonl(std::istream& in) {
  std::vector<TaskInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      TaskInstance inst{j.at("tokens").get<std::vector<int>>(), j.at("targets").get<std::vector<int>>(),
                        j.at("vocab_size").get<int>()};
      check_instance(inst);
      out.push_back(std::move(inst));
    } catch (const json::exception& e) {
      throw IoError("JSONL line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ContractError& e) {
      throw IoError("JSONL line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "step,loss,masked_accuracy\n";
  out << std::setprecision(10);
  for (const auto& p : curve) out << p.step << ',' << p.loss << ',' << p.masked_accuracy << '\n';
  if (!out) throw IoError("failed to write curve CSV");
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "variant,T,C,dh,dv,repeats,mean_ns,p50_ns,matmul_count,score_matrices_per_chunk\n";
  out << std::fixed << std::setprecision(0);
  for (const auto& r : rows) {
    out << to_string(r.spec.variant) << ',' << r.spec.T << ',' << r.spec.C << ',' << r.spec.d_h << ',' << r.spec.d_v
        << ',' << r.repeats << ',' << r.mean_ns << ',' << r.p50_ns << ',' << r.matmul_count << ','
        << r.score_matrices_per_chunk << '\n';
  }
  if (!out) throw IoError("failed to write bench CSV");
}

std::string weights_to_json(const ParamWeights& w) {
  w.check();
  json j;
  j["model_dim"] = w.model_dim;
  j["key_dim"] = w.key_dim;
  j["value_dim"] = w.value_dim;
  j["num_heads"] = w.heads.size();
  json arrays;
  for (std::size_t h = 0; h < w.heads.size(); ++h) {
    const auto& hw = w.heads[h];
    const std::string p = "head" + std::to_string(h) + ".";
    arrays[p + "wq"] = tensor(hw.wq);
    arrays[p + "wk"] = tensor(hw.wk);
    arrays[p + "wv"] = tensor(hw.wv);
    arrays[p + "conv_q"] = tensor(hw.conv_q);
    arrays[p + "conv_k"] = tensor(hw.conv_k);
    arrays[p + "conv_v"] = tensor(hw.conv_v);
    arrays[p + "alpha_down"] = tensor(hw.alpha_down);
    arrays[p + "alpha_up"] = tensor(hw.alpha_up);
    arrays[p + "decay_bias"] = tensor(hw.decay_bias);
    arrays[p + "w_beta"] = tensor(hw.w_beta);
    arrays[p + "rms_weight"] = tensor(hw.rms_weight);
  }
  arrays["gate_down"] = tensor(w.gate_down);
  arrays["gate_up"] = tensor(w.gate_up);
  arrays["wo"] = tensor(w.wo);
  j["arrays"] = std::move(arrays);
  return j.dump(1);
}

ParamWeights weights_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ParamWeights w;
    w.model_dim = size_field(j, "model_dim");
    w.key_dim = size_field(j, "key_dim");
    w.value_dim = size_field(j, "value_dim");
    const std::size_t heads = size_field(j, "num_heads");
    const json& a = named(j, "arrays");
    for (std::size_t h = 0; h < heads; ++h) {
      const std::string p = "head" + std::to_string(h) + ".";
      HeadWeights hw;
      hw.wq = tensor_matrix(a, p + "wq");
      hw.wk = tensor_matrix(a, p + "wk");
      hw.wv = tensor_matrix(a, p + "wv");
      hw.conv_q = tensor_matrix(a, p + "conv_q");
      hw.conv_k = tensor_matrix(a, p + "conv_k");
      hw.conv_v = tensor_matrix(a, p + "conv_v");
      hw.alpha_down = tensor_matrix(a, p + "alpha_down");
      hw.alpha_up = tensor_matrix(a, p + "alpha_up");
      hw.decay_bias = tensor_vector(a, p + "decay_bias");
      hw.w_beta = tensor_vector(a, p + "w_beta");
      hw.rms_weight = tensor_vector(a, p + "rms_weight");
      w.heads.push_back(std::move(hw));
    }
    w.gate_down = tensor_matrix(a, "gate_down");
    w.gate_up = tensor_matrix(a, "gate_up");
    w.wo = tensor_matrix(a, "wo");
    w.check();
    return w;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed weights file: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace kda
