// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: quantization tables, attention prediction, plan
// construction, reference execution and cycle-level simulation sweeps.

#include "esact/io.hpp"
#include "esact/perfsim.hpp"
#include "esact/prediction.hpp"
#include "esact/quant.hpp"
#include "esact/refblock.hpp"
#include "esact/sparsity.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace esact;

QTensor head_slice(const QTensor& w, Index head, Index head_dim) {
  QTensor out;
  out.data = w.data.middleCols(head * head_dim, head_dim);
  out.scale = w.scale;
  return out;
}

struct Problem {
  io::RunConfig run;
  QTensor x;
  refblock::BlockWeights weights;
};

Problem load_problem(const std::filesystem::path& config_path) {
  Problem p;
  p.run = io::load_config(config_path);
  if (p.run.weights == "synthetic") {
    p.weights = refblock::BlockWeights::synthetic(p.run.spls, p.run.seed);
    p.x = refblock::synthetic_input(p.run.spls, p.run.seed, p.run.cluster, p.run.noise);
  } else {
    const std::filesystem::path dir = p.run.weights;
    p.x = io::read_qtensor(dir / "x.esat");
    p.weights.wq = io::read_qtensor(dir / "wq.esat");
    p.weights.wk = io::read_qtensor(dir / "wk.esat");
    p.weights.wv = io::read_qtensor(dir / "wv.esat");
    p.weights.wo = io::read_qtensor(dir / "wo.esat");
    p.weights.w1 = io::read_qtensor(dir / "w1.esat");
    p.weights.w2 = io::read_qtensor(dir / "w2.esat");
    p.weights.ln1_gain = io::read_f64_vector(dir / "ln1_gain.esat");
    p.weights.ln1_bias = io::read_f64_vector(dir / "ln1_bias.esat");
    p.weights.ln2_gain = io::read_f64_vector(dir / "ln2_gain.esat");
    p.weights.ln2_bias = io::read_f64_vector(dir / "ln2_bias.esat");
  }
  return p;
}

std::vector<prediction::Pam> predict_all_heads(const Problem& p) {
  const sparsity::SplsConfig& cfg = p.run.spls;
  std::vector<prediction::Pam> pams;
  pams.reserve(static_cast<std::size_t>(cfg.heads));
  for (Index h = 0; h < cfg.heads; ++h) {
    pams.push_back(prediction::predict_attention(p.x, head_slice(p.weights.wq, h, cfg.head_dim()),
                                                 head_slice(p.weights.wk, h, cfg.head_dim()), h));
  }
  return pams;
}

sparsity::SparsityPlan make_plan(const sparsity::SplsConfig& cfg,
                                 const std::vector<prediction::Pam>& pams) {
  std::vector<prediction::Spa> spas;
  std::vector<sparsity::SimilarityMap> maps;
  const sparsity::WindowPartition part = sparsity::partition_windows(cfg.seq_len, cfg.window);
  for (const prediction::Pam& pam : pams) {
    spas.push_back(prediction::topk_rows(pam, cfg.top_k));
    maps.push_back(
        sparsity::window_similarity(spas.back(), part, cfg.similarity, cfg.attach_nearest));
  }
  return sparsity::build_plan(spas, maps, cfg);
}

void emit(const nlohmann::json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << io::render_json(j);
  } else {
    io::write_json(out_path, j);
  }
}

void emit_text(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    io::write_text(out_path, text);
  }
}

quant::Method method_from_name(const std::string& name) {
  if (name == "hlog") return quant::Method::HLog;
  if (name == "pot") return quant::Method::PoT;
  if (name == "apot") return quant::Method::APoT;
  throw std::invalid_argument("unknown quantization method '" + name + "'");
}

struct MethodErrors {
  double max_rel{0.0};
  double mean_abs{0.0};
};

MethodErrors scan_errors(const quant::LevelTable& table) {
  const std::int32_t top = std::int32_t{1} << (table.bitwidth - 1);
  MethodErrors err;
  double sum_abs = 0.0;
  for (std::int32_t mag = 1; mag <= top; ++mag) {
    const std::int32_t q = quant::project(mag, table);
    const double abs_err = std::abs(static_cast<double>(q - mag));
    err.max_rel = std::max(err.max_rel, abs_err / static_cast<double>(mag));
    sum_abs += abs_err;
  }
  err.mean_abs = sum_abs / static_cast<double>(top);
  return err;
}

int cmd_quant_table(const std::string& method_name, int bits, bool errors) {
  const quant::Method method = method_from_name(method_name);
  const quant::LevelTable table = quant::level_table(method, bits);
  std::printf("method: %s\n", method_name.c_str());
  std::printf("bitwidth: %d\n", table.bitwidth);
  std::printf("levels (%zu):", table.levels.size());
  for (const std::int32_t level : table.levels) std::printf(" %d", level);
  std::printf("\n");
  if (errors) {
    const std::int32_t top = std::int32_t{1} << (table.bitwidth - 1);
    std::printf("value,projected,abs_error\n");
    for (std::int32_t x = -top; x < top; ++x) {
      if (x == 0) {
        std::printf("0,0,0\n");
        continue;
      }
      const std::int32_t mag = x < 0 ? -x : x;
      const std::int32_t q = quant::project(mag, table);
      std::printf("%d,%d,%d\n", x, x < 0 ? -q : q, std::abs(q - mag));
    }
    const MethodErrors err = scan_errors(table);
    std::printf("max_rel_error: %.6f\n", err.max_rel);
    std::printf("mean_abs_error: %.6f\n", err.mean_abs);
  }
  return 0;
}

int cmd_compare_quant(int bits) {
  std::printf("method,levels,max_rel_error,mean_abs_error\n");
  for (const char* name : {"hlog", "pot", "apot"}) {
    const quant::LevelTable table = quant::level_table(method_from_name(name), bits);
    const MethodErrors err = scan_errors(table);
    std::printf("%s,%zu,%.6f,%.6f\n", name, table.levels.size(), err.max_rel, err.mean_abs);
  }
  return 0;
}

int cmd_predict(const std::string& config, const std::string& out_dir) {
  const Problem p = load_problem(config);
  const std::vector<prediction::Pam> pams = predict_all_heads(p);
  const std::filesystem::path dir = out_dir.empty() ? "." : out_dir;
  std::filesystem::create_directories(dir);

  nlohmann::json heads = nlohmann::json::array();
  for (const prediction::Pam& pam : pams) {
    const prediction::Spa spa = prediction::topk_rows(pam, p.run.spls.top_k);
    io::write_tensor(dir / ("pam_" + std::to_string(pam.head) + ".esat"), pam.scores);
    MatrixI8 mask(spa.keep.rows(), spa.keep.cols());
    for (Index i = 0; i < spa.keep.rows(); ++i)
      for (Index j = 0; j < spa.keep.cols(); ++j) mask(i, j) = spa.keep(i, j) ? 1 : 0;
    io::write_tensor(dir / ("spa_" + std::to_string(pam.head) + ".esat"), mask, 1.0);
    heads.push_back({{"head", pam.head},
                     {"kept_per_row", spa.kept_per_row()},
                     {"score_min", pam.scores.minCoeff()},
                     {"score_max", pam.scores.maxCoeff()}});
  }
  std::cout << io::render_json({{"heads", heads}, {"out_dir", dir.string()}});
  return 0;
}

int cmd_plan(const std::string& config, const std::string& out_path) {
  const Problem p = load_problem(config);
  const sparsity::SparsityPlan plan = make_plan(p.run.spls, predict_all_heads(p));
  emit(io::plan_summary(plan, p.run.spls), out_path);
  return 0;
}

int cmd_run(const std::string& config, const std::string& out_path) {
  const Problem p = load_problem(config);
  const sparsity::SparsityPlan plan = make_plan(p.run.spls, predict_all_heads(p));
  const refblock::ForwardResult dense = refblock::dense_forward(p.x, p.weights, p.run.spls);
  const refblock::SparseResult sparse =
      refblock::sparse_forward_with_reference(p.x, p.weights, plan, p.run.spls, dense.output);
  const refblock::ReductionReport red = refblock::reduction_report(dense.macs, sparse.macs);
  emit({{"dense_macs", io::to_json(dense.macs)},
        {"sparse_macs", io::to_json(sparse.macs)},
        {"reduction", io::to_json(red)},
        {"fidelity", io::to_json(sparse.fidelity)},
        {"plan", io::plan_summary(plan, p.run.spls)}},
       out_path);
  return 0;
}

int cmd_simulate(const std::string& config, const std::string& out_path) {
  const Problem p = load_problem(config);
  const sparsity::SparsityPlan plan = make_plan(p.run.spls, predict_all_heads(p));
  const perfsim::CycleReport report = perfsim::simulate(p.run.spls, plan, p.run.hw);
  emit({{"cycles", io::to_json(report)}, {"plan", io::plan_summary(plan, p.run.spls)}}, out_path);
  return 0;
}

int cmd_sweep(const std::string& config, const std::string& out_path) {
  const Problem p = load_problem(config);
  const sparsity::SplsConfig& base = p.run.spls;

  std::vector<Ratio> kgrid = p.run.sweep.k.empty() ? std::vector<Ratio>{base.top_k} : p.run.sweep.k;
  std::vector<Ratio> sgrid =
      p.run.sweep.s.empty() ? std::vector<Ratio>{base.similarity} : p.run.sweep.s;
  std::vector<int> fgrid =
      p.run.sweep.f.empty() ? std::vector<int>{base.ffn_threshold} : p.run.sweep.f;
  std::vector<Index> wgrid =
      p.run.sweep.w.empty() ? std::vector<Index>{base.window} : p.run.sweep.w;

  const std::vector<prediction::Pam> pams = predict_all_heads(p);
  const refblock::ForwardResult dense = refblock::dense_forward(p.x, p.weights, base);
  const double hl = static_cast<double>(base.heads) * static_cast<double>(base.seq_len);

  std::vector<io::SweepRow> rows;
  for (const Ratio& k : kgrid) {
    std::vector<prediction::Spa> spas;
    for (const prediction::Pam& pam : pams) spas.push_back(prediction::topk_rows(pam, k));
    for (const Ratio& s : sgrid) {
      for (const int f : fgrid) {
        for (const Index w : wgrid) {
          sparsity::SplsConfig cfg = base;
          cfg.top_k = k;
          cfg.similarity = s;
          cfg.ffn_threshold = f;
          cfg.window = w;
          cfg.validate();
          const sparsity::WindowPartition part = sparsity::partition_windows(cfg.seq_len, w);
          std::vector<sparsity::SimilarityMap> maps;
          for (const prediction::Spa& spa : spas) {
            maps.push_back(sparsity::window_similarity(spa, part, s, cfg.attach_nearest));
          }
          const sparsity::SparsityPlan plan = sparsity::build_plan(spas, maps, cfg);
          const refblock::SparseResult sparse =
              refblock::sparse_forward_with_reference(p.x, p.weights, plan, cfg, dense.output);
          const perfsim::CycleReport cycles = perfsim::simulate(cfg, plan, p.run.hw);

          io::SweepRow row;
          row.k = k;
          row.s = s;
          row.f = f;
          row.w = w;
          std::int64_t q_rows = 0, kv_rows = 0;
          for (const sparsity::HeadPlan& hp : plan.heads) {
            q_rows += static_cast<std::int64_t>(hp.q_rows.size());
            kv_rows += static_cast<std::int64_t>(hp.kv_rows.size());
          }
          row.q_sparsity = 1.0 - static_cast<double>(q_rows) / hl;
          row.kv_sparsity = 1.0 - static_cast<double>(kv_rows) / hl;
          row.ffn_sparsity = 1.0 - static_cast<double>(plan.ffn_keep.size()) /
                                       static_cast<double>(base.seq_len);
          row.reduction = refblock::reduction_report(dense.macs, sparse.macs);
          row.fidelity = sparse.fidelity;
          row.dense_cycles = cycles.dense.makespan;
          row.sparse_cycles = cycles.sparse.makespan;
          row.speedup_total = cycles.speedup_total;
          rows.push_back(row);
        }
      }
    }
  }
  emit_text(io::sweep_csv(rows), out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bit-exact model of a similarity-driven sparse transformer pipeline "
               "with a cycle-level accelerator simulator"};
  app.require_subcommand(1);

  std::string method = "hlog";
  int bits = 8;
  bool errors = false;
  std::string config_path;
  std::string out_path;

  CLI::App* quant_table = app.add_subcommand("quant-table", "Print a quantization level table");
  quant_table->add_option("--method", method, "hlog, pot or apot")->required();
  quant_table->add_option("--bits", bits, "bit-width in [2, 8]")->default_val(8);
  quant_table->add_flag("--errors", errors, "also print per-value projection errors");

  CLI::App* compare = app.add_subcommand("compare-quant", "Compare projection errors of all methods");
  compare->add_option("--bits", bits, "bit-width in [2, 8]")->default_val(8);

  auto add_config_out = [&](CLI::App* cmd, const char* out_help) {
    cmd->add_option("--config", config_path, "run configuration file")->required();
    cmd->add_option("--out", out_path, out_help);
  };
  add_config_out(app.add_subcommand("predict", "Write predicted score matrices and masks"),
                 "output directory (default: current)");
  add_config_out(app.add_subcommand("plan", "Build and summarize the sparsity plan"),
                 "summary path (default: stdout)");
  add_config_out(app.add_subcommand("run", "Reference execution: counts, reductions, fidelity"),
                 "report path (default: stdout)");
  add_config_out(app.add_subcommand("simulate", "Cycle-level simulation of one unit"),
                 "report path (default: stdout)");
  add_config_out(app.add_subcommand("sweep", "Grid sweep over (k, s, f, w), CSV output"),
                 "csv path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (quant_table->parsed()) return cmd_quant_table(method, bits, errors);
    if (compare->parsed()) return cmd_compare_quant(bits);
    if (app.get_subcommand("predict")->parsed()) return cmd_predict(config_path, out_path);
    if (app.get_subcommand("plan")->parsed()) return cmd_plan(config_path, out_path);
    if (app.get_subcommand("run")->parsed()) return cmd_run(config_path, out_path);
    if (app.get_subcommand("simulate")->parsed()) return cmd_simulate(config_path, out_path);
    if (app.get_subcommand("sweep")->parsed()) return cmd_sweep(config_path, out_path);
    return 3;
  } catch (const io::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const io::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const io::TensorFormatError& e) {
    std::cerr << "tensor format error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "filesystem error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
