// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "esact/perfsim.hpp"
#include "esact/refblock.hpp"
#include "esact/sparsity.hpp"
#include "esact/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace esact::io {

// Filesystem-level failure (open/read/write).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TensorFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagicError : TensorFormatError {
  using TensorFormatError::TensorFormatError;
};
struct BadVersionError : TensorFormatError {
  using TensorFormatError::TensorFormatError;
};
struct TruncationError : TensorFormatError {
  using TensorFormatError::TensorFormatError;
};
struct DtypeMismatchError : TensorFormatError {
  using TensorFormatError::TensorFormatError;
};

struct ConfigError : std::runtime_error {
  int line;
  ConfigError(int line_no, const std::string& message)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + message), line(line_no) {}
};

/// Binary tensor container. Layout, all little-endian:
///   magic "ESAT" | version u8 (=1) | dtype u8 (0=int8, 1=int32, 2=float64)
///   | ndim u8 | dims u32[ndim] | scale f64 | payload row-major
enum class Dtype : std::uint8_t { Int8 = 0, Int32 = 1, Float64 = 2 };

struct AnyTensor {
  Dtype dtype{Dtype::Int8};
  std::vector<Index> dims;
  double scale{1.0};
  std::variant<MatrixI8, MatrixI32, MatrixF64> data;  // vectors load as 1 x n
};

std::string encode_tensor(const AnyTensor& t);
AnyTensor decode_tensor(std::span<const std::byte> bytes);

void write_tensor(const std::filesystem::path& path, const MatrixI8& m, double scale);
void write_tensor(const std::filesystem::path& path, const MatrixI32& m, double scale = 1.0);
void write_tensor(const std::filesystem::path& path, const MatrixF64& m, double scale = 1.0);
void write_tensor(const std::filesystem::path& path, const VectorF64& v, double scale = 1.0);

AnyTensor read_tensor(const std::filesystem::path& path);
QTensor read_qtensor(const std::filesystem::path& path);   // dtype must be int8
MatrixF64 read_f64(const std::filesystem::path& path);     // dtype must be float64
VectorF64 read_f64_vector(const std::filesystem::path& path);

/// Textual run configuration: one `key = value` per line, '#' comments,
/// unknown keys rejected. Grids hold comma-separated values.
struct SweepGrids {
  std::vector<Ratio> k;
  std::vector<Ratio> s;
  std::vector<int> f;
  std::vector<Index> w;
};

struct RunConfig {
  sparsity::SplsConfig spls;
  perfsim::HardwareConfig hw;
  std::uint64_t seed{1};
  std::string weights{"synthetic"};  // "synthetic" or a directory of tensor files
  Index cluster{8};
  int noise{3};
  SweepGrids sweep;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const refblock::MacCount& macs);
nlohmann::json to_json(const refblock::ReductionReport& red);
nlohmann::json to_json(const refblock::FidelityReport& fid);
nlohmann::json to_json(const perfsim::StageCycles& stages);
nlohmann::json to_json(const perfsim::CycleReport& report);
nlohmann::json plan_summary(const sparsity::SparsityPlan& plan, const sparsity::SplsConfig& cfg);

/// Deterministic serialization: sorted snake_case keys, full-precision
/// numbers, trailing newline. Writing the same value twice produces
/// byte-identical files.
std::string render_json(const nlohmann::json& j);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

struct SweepRow {
  Ratio k;
  Ratio s;
  int f{1};
  Index w{1};
  double q_sparsity{0.0};
  double kv_sparsity{0.0};
  double ffn_sparsity{0.0};
  refblock::ReductionReport reduction;
  refblock::FidelityReport fidelity;
  perfsim::Cycles dense_cycles{0};
  perfsim::Cycles sparse_cycles{0};
  double speedup_total{1.0};
};

std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace esact::io
