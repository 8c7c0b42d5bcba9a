#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kda/chunkwise.hpp"
#include "kda/cost.hpp"
#include "kda/param.hpp"
#include "kda/tasks.hpp"
#include "kda/train.hpp"

namespace kda {

// Unreadable, unwritable or malformed file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat test vector: integer fields T, C, dk, dv; row-major arrays q, k, v,
// log_alpha, beta, s0; optional expected_o, expected_s and per-chunk scratch.
struct TestVector {
  std::size_t chunk_size = 64;
  AttnSequence seq;
  GateSequence gates;
  StateMatrix s0;
  std::optional<Matrix> expected_o;
  std::optional<Matrix> expected_s;
  std::vector<ChunkScratch> scratch;
};

std::string to_json(const TestVector& tv);
TestVector parse_test_vector(const std::string& text);
TestVector read_test_vector(const std::filesystem::path& path);
void write_test_vector(const std::filesystem::path& path, const TestVector& tv);

// One JSON object per line with keys tokens, targets (-1 = ignore) and vocab_size.
void write_jsonl(std::ostream& out, const std::vector<TaskInstance>& instances);
std::vector<TaskInstance> read_jsonl(std::istream& in);

// step,loss,masked_accuracy
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve);

// variant,T,C,dh,dv,repeats,mean_ns,p50_ns,matmul_count,score_matrices_per_chunk
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

// Named arrays, each {"shape": [...], "data": [...]}; per-head tensors are
// prefixed "head<i>.".
std::string weights_to_json(const ParamWeights& w);
ParamWeights weights_from_json(const std::string& text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace kda
