// SPDX-License-Identifier: Apache-2.0
#include "esact/io.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace esact::io {

namespace {

constexpr char kMagic[4] = {'E', 'S', 'A', 'T'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Cursor {
 public:
  explicit Cursor(std::span<const std::byte> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::span<const std::byte> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw TruncationError("tensor payload is truncated");
  }

  std::span<const std::byte> bytes_;
  std::size_t pos_{0};
};

std::size_t element_size(Dtype dtype) {
  switch (dtype) {
    case Dtype::Int8: return 1;
    case Dtype::Int32: return 4;
    case Dtype::Float64: return 8;
  }
  throw DtypeMismatchError("unknown dtype byte");
}

template <typename M>
AnyTensor make_tensor(Dtype dtype, const M& m, double scale) {
  AnyTensor t;
  t.dtype = dtype;
  t.dims = {m.rows(), m.cols()};
  t.scale = scale;
  t.data = m;
  return t;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string encode_tensor(const AnyTensor& t) {
  std::string out;
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(kVersion));
  out.push_back(static_cast<char>(t.dtype));
  out.push_back(static_cast<char>(t.dims.size()));
  for (const Index d : t.dims) put_u32(out, static_cast<std::uint32_t>(d));
  put_f64(out, t.scale);
  std::visit(
      [&out](const auto& m) {
        using Scalar = typename std::decay_t<decltype(m)>::Scalar;
        const char* raw = reinterpret_cast<const char*>(m.data());
        out.append(raw, sizeof(Scalar) * static_cast<std::size_t>(m.size()));
      },
      t.data);
  return out;
}

AnyTensor decode_tensor(std::span<const std::byte> bytes) {
  Cursor cur(bytes);
  const auto magic = cur.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw BadMagicError("bad magic bytes");
  const std::uint8_t version = cur.u8();
  if (version != kVersion) {
    throw BadVersionError("unsupported version " + std::to_string(version));
  }
  const std::uint8_t dtype_byte = cur.u8();
  if (dtype_byte > 2) throw DtypeMismatchError("unknown dtype byte");
  const Dtype dtype = static_cast<Dtype>(dtype_byte);
  const std::uint8_t ndim = cur.u8();
  if (ndim < 1 || ndim > 2) throw TensorFormatError("only 1- or 2-dimensional tensors supported");

  AnyTensor t;
  t.dtype = dtype;
  std::size_t count = 1;
  for (std::uint8_t i = 0; i < ndim; ++i) {
    const std::uint32_t d = cur.u32();
    t.dims.push_back(static_cast<Index>(d));
    count *= d;
  }
  t.scale = cur.f64();

  const std::size_t payload = count * element_size(dtype);
  const auto raw = cur.take(payload);
  if (cur.remaining() != 0) throw TensorFormatError("trailing bytes after payload");

  const Index rows = ndim == 2 ? t.dims[0] : 1;
  const Index cols = ndim == 2 ? t.dims[1] : t.dims[0];
  auto load = [&](auto scalar_tag) {
    using Scalar = decltype(scalar_tag);
    Matrix<Scalar> m(rows, cols);
    std::memcpy(m.data(), raw.data(), payload);
    t.data = std::move(m);
  };
  switch (dtype) {
    case Dtype::Int8: load(std::int8_t{}); break;
    case Dtype::Int32: load(std::int32_t{}); break;
    case Dtype::Float64: load(double{}); break;
  }
  return t;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const MatrixI8& m, double scale) {
  write_file(path, encode_tensor(make_tensor(Dtype::Int8, m, scale)));
}

void write_tensor(const std::filesystem::path& path, const MatrixI32& m, double scale) {
  write_file(path, encode_tensor(make_tensor(Dtype::Int32, m, scale)));
}

void write_tensor(const std::filesystem::path& path, const MatrixF64& m, double scale) {
  write_file(path, encode_tensor(make_tensor(Dtype::Float64, m, scale)));
}

void write_tensor(const std::filesystem::path& path, const VectorF64& v, double scale) {
  AnyTensor t;
  t.dtype = Dtype::Float64;
  t.dims = {v.size()};
  t.scale = scale;
  MatrixF64 m(1, v.size());
  for (Index i = 0; i < v.size(); ++i) m(0, i) = v(i);
  t.data = std::move(m);
  write_file(path, encode_tensor(t));
}

AnyTensor read_tensor(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return decode_tensor(std::as_bytes(std::span<const char>(bytes.data(), bytes.size())));
}

QTensor read_qtensor(const std::filesystem::path& path) {
  AnyTensor t = read_tensor(path);
  if (t.dtype != Dtype::Int8) {
    throw DtypeMismatchError("expected int8 tensor in '" + path.string() + "'");
  }
  return QTensor{std::get<MatrixI8>(std::move(t.data)), t.scale};
}

MatrixF64 read_f64(const std::filesystem::path& path) {
  AnyTensor t = read_tensor(path);
  if (t.dtype != Dtype::Float64) {
    throw DtypeMismatchError("expected float64 tensor in '" + path.string() + "'");
  }
  return std::get<MatrixF64>(std::move(t.data));
}

VectorF64 read_f64_vector(const std::filesystem::path& path) {
  const MatrixF64 m = read_f64(path);
  if (m.rows() != 1) throw TensorFormatError("expected a vector tensor");
  VectorF64 v(m.cols());
  for (Index i = 0; i < m.cols(); ++i) v(i) = m(0, i);
  return v;
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = s.find(',', pos);
    const std::string part = trim(s.substr(pos, comma == std::string::npos ? std::string::npos
                                                                           : comma - pos));
    parts.push_back(part);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return parts;
}

std::int64_t parse_int(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const std::int64_t n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return n;
  } catch (const std::exception&) {
    throw ConfigError(line, "expected an integer, got '" + v + "'");
  }
}

double parse_float(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(line, "expected a number, got '" + v + "'");
  }
}

Ratio parse_ratio(const std::string& v, int line) {
  try {
    return Ratio::parse(v);
  } catch (const std::exception& e) {
    throw ConfigError(line, e.what());
  }
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(line, "expected true or false, got '" + v + "'");
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, int> seen_line;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(line_no, "missing key");
    if (seen_line.count(key)) throw ConfigError(line_no, "duplicate key '" + key + "'");
    seen_line[key] = line_no;
    if (value.empty()) throw ConfigError(line_no, "empty value for '" + key + "'");

    if (key == "seq_len") cfg.spls.seq_len = parse_int(value, line_no);
    else if (key == "embed_dim") cfg.spls.embed_dim = parse_int(value, line_no);
    else if (key == "heads") cfg.spls.heads = parse_int(value, line_no);
    else if (key == "ffn_dim") cfg.spls.ffn_dim = parse_int(value, line_no);
    else if (key == "window") cfg.spls.window = parse_int(value, line_no);
    else if (key == "top_k") cfg.spls.top_k = parse_ratio(value, line_no);
    else if (key == "similarity") cfg.spls.similarity = parse_ratio(value, line_no);
    else if (key == "ffn_threshold") cfg.spls.ffn_threshold = static_cast<int>(parse_int(value, line_no));
    else if (key == "attach_nearest") cfg.spls.attach_nearest = parse_bool(value, line_no);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, line_no));
    else if (key == "weights") cfg.weights = value;
    else if (key == "cluster") cfg.cluster = parse_int(value, line_no);
    else if (key == "noise") cfg.noise = static_cast<int>(parse_int(value, line_no));
    else if (key == "pe_rows") cfg.hw.pe_rows = parse_int(value, line_no);
    else if (key == "pe_cols") cfg.hw.pe_cols = parse_int(value, line_no);
    else if (key == "clock_hz") cfg.hw.clock_hz = parse_float(value, line_no);
    else if (key == "bandwidth") cfg.hw.bandwidth_bytes_per_s = parse_float(value, line_no);
    else if (key == "fifo_depth") cfg.hw.fifo_depth = parse_int(value, line_no);
    else if (key == "tile_load_cycles") cfg.hw.tile_load_cycles = parse_int(value, line_no);
    else if (key == "predict_lanes") cfg.hw.predict_lanes = parse_int(value, line_no);
    else if (key == "sweep_k") {
      for (const std::string& p : split_list(value)) cfg.sweep.k.push_back(parse_ratio(p, line_no));
    } else if (key == "sweep_s") {
      for (const std::string& p : split_list(value)) cfg.sweep.s.push_back(parse_ratio(p, line_no));
    } else if (key == "sweep_f") {
      for (const std::string& p : split_list(value))
        cfg.sweep.f.push_back(static_cast<int>(parse_int(p, line_no)));
    } else if (key == "sweep_w") {
      for (const std::string& p : split_list(value)) cfg.sweep.w.push_back(parse_int(p, line_no));
    } else {
      throw ConfigError(line_no, "unknown key '" + key + "'");
    }
  }

  auto line_of = [&seen_line](const char* key) {
    const auto it = seen_line.find(key);
    return it == seen_line.end() ? 0 : it->second;
  };
  try {
    cfg.spls.validate();
  } catch (const std::invalid_argument& e) {
    // attribute the failure to the most relevant key when it appeared
    const std::string what = e.what();
    int line = 0;
    for (const char* key : {"seq_len", "embed_dim", "heads", "ffn_dim", "window", "top_k",
                            "similarity", "ffn_threshold"}) {
      if (what.find(key) != std::string::npos) line = line_of(key);
    }
    throw ConfigError(line, what);
  }
  try {
    cfg.hw.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
  if (cfg.cluster < 1) throw ConfigError(line_of("cluster"), "cluster must be >= 1");
  if (cfg.noise < 0) throw ConfigError(line_of("noise"), "noise must be >= 0");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

nlohmann::json to_json(const refblock::MacCount& macs) {
  return {{"qkv", macs.qkv},
          {"attention", macs.attention},
          {"ffn", macs.ffn},
          {"total", macs.total()}};
}

nlohmann::json to_json(const refblock::ReductionReport& red) {
  return {{"qkv", red.qkv},
          {"attention", red.attention},
          {"ffn", red.ffn},
          {"total", red.total}};
}

nlohmann::json to_json(const refblock::FidelityReport& fid) {
  return {{"max_abs_diff", fid.max_abs_diff},
          {"mean_abs_diff", fid.mean_abs_diff},
          {"cosine", fid.cosine}};
}

nlohmann::json to_json(const perfsim::StageCycles& stages) {
  return {{"prediction", stages.prediction},
          {"qkv", stages.qkv},
          {"attention", stages.attention},
          {"concat_ffn", stages.concat_ffn},
          {"makespan", stages.makespan}};
}

nlohmann::json to_json(const perfsim::CycleReport& report) {
  return {{"dense", to_json(report.dense)},
          {"sparse", to_json(report.sparse)},
          {"utilization",
           {{"prediction", report.utilization.prediction},
            {"qkv", report.utilization.qkv},
            {"attention", report.utilization.attention},
            {"concat_ffn", report.utilization.concat_ffn}}},
          {"speedup_spls", report.speedup_spls},
          {"speedup_progressive", report.speedup_progressive},
          {"speedup_dynamic", report.speedup_dynamic},
          {"speedup_total", report.speedup_total},
          {"peak_bandwidth_bytes_per_s", report.peak_bandwidth_demand},
          {"bandwidth_exceeded", report.bandwidth_exceeded}};
}

nlohmann::json plan_summary(const sparsity::SparsityPlan& plan, const sparsity::SplsConfig& cfg) {
  const double L = static_cast<double>(cfg.seq_len);
  nlohmann::json heads = nlohmann::json::array();
  for (std::size_t h = 0; h < plan.heads.size(); ++h) {
    const sparsity::HeadPlan& hp = plan.heads[h];
    std::int64_t kept = 0;
    for (const Index i : hp.q_rows) kept += hp.keep.row(i).count();
    nlohmann::json actives = nlohmann::json::array();
    for (const auto& cols : hp.window_active_cols) actives.push_back(cols.size());
    heads.push_back({{"head", h},
                     {"critical_rows", hp.q_rows.size()},
                     {"kv_rows", hp.kv_rows.size()},
                     {"kept_positions", kept},
                     {"q_sparsity", 1.0 - static_cast<double>(hp.q_rows.size()) / L},
                     {"kv_sparsity", 1.0 - static_cast<double>(hp.kv_rows.size()) / L},
                     {"window_active_cols", actives}});
  }
  return {{"seq_len", cfg.seq_len},
          {"window", plan.windows.window_size},
          {"windows", plan.windows.count()},
          {"heads", heads},
          {"ffn_kept_tokens", plan.ffn_keep.size()},
          {"ffn_sparsity", 1.0 - static_cast<double>(plan.ffn_keep.size()) / L}};
}

std::string render_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_file(path, render_json(j));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, text);
}

std::string read_text(const std::filesystem::path& path) { return read_file(path); }

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out =
      "k,s,f,w,q_sparsity,kv_sparsity,ffn_sparsity,"
      "reduction_qkv,reduction_attention,reduction_ffn,reduction_total,"
      "fidelity_max_abs,fidelity_mean_abs,fidelity_cosine,"
      "dense_cycles,sparse_cycles,speedup_total\n";
  for (const SweepRow& r : rows) {
    out += format_double(r.k.to_double());
    out += ',';
    out += format_double(r.s.to_double());
    out += ',';
    out += std::to_string(r.f);
    out += ',';
    out += std::to_string(r.w);
    for (const double v : {r.q_sparsity, r.kv_sparsity, r.ffn_sparsity, r.reduction.qkv,
                           r.reduction.attention, r.reduction.ffn, r.reduction.total,
                           r.fidelity.max_abs_diff, r.fidelity.mean_abs_diff,
                           r.fidelity.cosine}) {
      out += ',';
      out += format_double(v);
    }
    out += ',';
    out += std::to_string(r.dense_cycles);
    out += ',';
    out += std::to_string(r.sparse_cycles);
    out += ',';
    out += format_double(r.speedup_total);
    out += '\n';
  }
  return out;
}

}  // namespace esact::io
