// SPDX-License-Identifier: Apache-2.0
#include "esact/perfsim.hpp"

#include <algorithm>
#include <cassert>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace esact::perfsim {

namespace {

Cycles ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

struct Breakdown {
  Cycles prediction{0};
  Cycles qkv{0};
  Cycles attention{0};
  Cycles concat_unbal{0};
  Cycles concat_bal{0};
  Cycles ffn{0};
  Cycles kpred{0};
  std::vector<Cycles> pred_windows;
  std::vector<Cycles> gen_windows;

  std::int64_t macs_qkv{0};
  std::int64_t macs_attention{0};
  std::int64_t macs_concat{0};
  std::int64_t macs_ffn{0};
  std::int64_t predict_products{0};

  double bytes_prediction{0.0};
  double bytes_qkv{0.0};
  double bytes_attention{0.0};
  double bytes_concat_ffn{0.0};
};

// Splits total proportionally to weights, exactly (largest remainder).
std::vector<Cycles> split_by_weight(Cycles total, const std::vector<std::int64_t>& weights) {
  const std::int64_t wsum = std::accumulate(weights.begin(), weights.end(), std::int64_t{0});
  std::vector<Cycles> shares(weights.size(), 0);
  if (wsum == 0 || total == 0) return shares;
  std::vector<std::pair<std::int64_t, std::size_t>> remainders;
  Cycles assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const std::int64_t prod = total * weights[i];
    shares[i] = prod / wsum;
    assigned += shares[i];
    remainders.emplace_back(prod % wsum, i);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) {
    shares[remainders[r].second] += 1;
  }
  return shares;
}

Breakdown analyze(const sparsity::SparsityPlan& plan, const sparsity::SplsConfig& cfg,
                  const HardwareConfig& hw) {
  const Index L = cfg.seq_len, D = cfg.embed_dim, Dh = cfg.head_dim(), F = cfg.ffn_dim;
  const Index H = static_cast<Index>(plan.heads.size());
  const Index nwin = plan.windows.count();
  Breakdown bd;

  // Generation stage: compacted row counts through the GEMM model.
  for (const sparsity::HeadPlan& hp : plan.heads) {
    const Index nq = static_cast<Index>(hp.q_rows.size());
    const Index nkv = static_cast<Index>(hp.kv_rows.size());
    bd.qkv += gemm_cycles(nq, Dh, D, hw) + 2 * gemm_cycles(nkv, Dh, D, hw);
    bd.macs_qkv += static_cast<std::int64_t>(nq + 2 * nkv) * D * Dh;
  }

  // Attention: critical rows in waves of pe_rows; two phases per head
  // (scores, weighted values), each row costing ceil(kept*Dh/pe_cols).
  // Operands stay in the token buffer, so no tile fill applies.
  for (const sparsity::HeadPlan& hp : plan.heads) {
    Cycles phase = 0;
    Cycles wave_max = 0;
    Index in_wave = 0;
    for (const Index i : hp.q_rows) {
      const std::int64_t kept = hp.keep.row(i).count();
      wave_max = std::max<Cycles>(wave_max, ceil_div(kept * Dh, hw.pe_cols));
      bd.macs_attention += 2 * kept * Dh;
      if (++in_wave == hw.pe_rows) {
        phase += wave_max;
        wave_max = 0;
        in_wave = 0;
      }
    }
    phase += wave_max;
    bd.attention += 2 * phase;
  }

  // Concatenation: one partial-sum unit per (row, critical head) pair.
  std::vector<Index> counts(static_cast<std::size_t>(L), 0);
  for (const sparsity::HeadPlan& hp : plan.heads) {
    for (const Index i : hp.q_rows) ++counts[static_cast<std::size_t>(i)];
  }
  const DynamicAllocation alloc = dynamic_allocation_cycles(counts, hw);
  const Cycles unit_cost = ceil_div(Dh * D, hw.pe_cols);
  bd.concat_unbal = alloc.unbalanced * unit_cost;
  bd.concat_bal = alloc.balanced * unit_cost;
  const std::int64_t units = std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
  bd.macs_concat = units * Dh * D;

  const Index nkeep = static_cast<Index>(plan.ffn_keep.size());
  bd.ffn = gemm_cycles(nkeep, F, D, hw) + gemm_cycles(nkeep, D, F, hw);
  bd.macs_ffn = 2 * static_cast<std::int64_t>(nkeep) * D * F;

  // Prediction: all K first, then per-window Q, score and similarity work.
  const Index lanes = hw.predict_lanes;
  const Index w = plan.windows.window_size;
  bd.kpred = ceil_div(static_cast<std::int64_t>(L) * D * D, lanes);
  bd.pred_windows.reserve(static_cast<std::size_t>(nwin));
  for (const auto& [start, end] : plan.windows.ranges) {
    const std::int64_t wi = end - start;
    const Cycles qpred = ceil_div(wi * D * D, lanes);
    const Cycles apred = ceil_div(wi * L * D, lanes);
    const Cycles sim = ceil_div(wi * (w - 1) * L, hw.pe_cols);
    bd.pred_windows.push_back(qpred + apred + sim);
  }
  bd.prediction = bd.kpred +
                  std::accumulate(bd.pred_windows.begin(), bd.pred_windows.end(), Cycles{0});
  bd.predict_products = 2 * static_cast<std::int64_t>(L) * D * D +
                        static_cast<std::int64_t>(L) * L * D;

  // Generation work per window: critical rows born there plus K/V rows whose
  // column first becomes active there. Shares of the compacted stage total.
  std::vector<std::int64_t> weights(static_cast<std::size_t>(nwin), 0);
  std::vector<char> seen(static_cast<std::size_t>(L));
  for (const sparsity::HeadPlan& hp : plan.heads) {
    std::vector<char> critical(static_cast<std::size_t>(L), 0);
    for (const Index i : hp.q_rows) critical[static_cast<std::size_t>(i)] = 1;
    std::fill(seen.begin(), seen.end(), 0);
    for (Index wi = 0; wi < nwin; ++wi) {
      const auto& [start, end] = plan.windows.ranges[static_cast<std::size_t>(wi)];
      std::int64_t crit_here = 0;
      for (Index r = start; r < end; ++r) crit_here += critical[static_cast<std::size_t>(r)];
      std::int64_t kv_new = 0;
      for (const Index col : hp.window_active_cols[static_cast<std::size_t>(wi)]) {
        if (!seen[static_cast<std::size_t>(col)]) {
          seen[static_cast<std::size_t>(col)] = 1;
          ++kv_new;
        }
      }
      weights[static_cast<std::size_t>(wi)] += crit_here + 2 * kv_new;
    }
  }
  bd.gen_windows = split_by_weight(bd.qkv, weights);

  // Flat traffic model: weights stream from DRAM once per stage, the block
  // input is fetched once, attention operands live in the token buffer, and
  // the final output is written back. 1 byte per element.
  const double dd = static_cast<double>(D);
  bd.bytes_prediction = static_cast<double>(L) * dd + 2.0 * dd * dd;
  bd.bytes_qkv = 3.0 * dd * dd;
  bd.bytes_attention = 0.0;
  bd.bytes_concat_ffn = dd * dd + 2.0 * dd * static_cast<double>(F) + static_cast<double>(L) * dd;

  (void)H;
  return bd;
}

double stage_utilization(std::int64_t work, std::int64_t capacity_per_cycle, Cycles cycles) {
  if (cycles <= 0) return 1.0;
  return static_cast<double>(work) /
         (static_cast<double>(capacity_per_cycle) * static_cast<double>(cycles));
}

}  // namespace

void HardwareConfig::validate() const {
  if (pe_rows < 1 || pe_cols < 1) throw std::invalid_argument("PE grid must be at least 1x1");
  if (clock_hz <= 0.0) throw std::invalid_argument("clock must be positive");
  if (bandwidth_bytes_per_s <= 0.0) throw std::invalid_argument("bandwidth must be positive");
  if (fifo_depth < 1) throw std::invalid_argument("fifo_depth must be >= 1");
  if (tile_load_cycles < 0) throw std::invalid_argument("tile_load_cycles must be >= 0");
  if (predict_lanes < 1) throw std::invalid_argument("predict_lanes must be >= 1");
}

Cycles gemm_cycles(Index m, Index n, Index k, const HardwareConfig& hw) {
  if (m <= 0 || n <= 0 || k <= 0) return 0;
  const Cycles tiles = ceil_div(m, hw.pe_rows) * ceil_div(n, hw.pe_cols);
  return tiles * (k + hw.tile_load_cycles);
}

DynamicAllocation dynamic_allocation_cycles(std::span<const Index> row_counts,
                                            const HardwareConfig& hw) {
  std::int64_t total = 0;
  Cycles unbalanced = 0;
  Cycles wave_max = 0;
  Index in_wave = 0;
  for (const Index c : row_counts) {
    if (c < 0) throw std::invalid_argument("row counts must be nonnegative");
    total += c;
    wave_max = std::max<Cycles>(wave_max, c);
    if (++in_wave == hw.pe_rows) {
      unbalanced += wave_max;
      wave_max = 0;
      in_wave = 0;
    }
  }
  unbalanced += wave_max;

  DynamicAllocation out;
  out.unbalanced = unbalanced;
  if (total == 0) return out;

  const Cycles target = ceil_div(total, hw.pe_rows);
  bool split = false;
  for (const Index c : row_counts) {
    if (c > target) {
      split = true;
      break;
    }
  }
  out.balanced = target + (split ? 1 : 0);
  assert(out.balanced <= out.unbalanced);
  out.utilization = static_cast<double>(total) /
                    (static_cast<double>(hw.pe_rows) * static_cast<double>(out.balanced));
  return out;
}

Cycles progressive_makespan(Cycles k_pred, std::span<const Cycles> pred,
                            std::span<const Cycles> gen) {
  if (pred.size() != gen.size()) {
    throw std::invalid_argument("progressive_makespan: window vectors disagree");
  }
  if (pred.empty()) return k_pred;
  Cycles total = k_pred + pred[0];
  for (std::size_t i = 0; i + 1 < pred.size(); ++i) {
    total += std::max(pred[i + 1], gen[i]);
  }
  total += gen[gen.size() - 1];
  return total;
}

StageCycles dense_stage_cycles(const sparsity::SplsConfig& cfg, const HardwareConfig& hw) {
  cfg.validate();
  hw.validate();
  const Breakdown bd = analyze(sparsity::SparsityPlan::dense(cfg), cfg, hw);
  StageCycles stages;
  stages.prediction = 0;
  stages.qkv = bd.qkv;
  stages.attention = bd.attention;
  stages.concat_ffn = bd.concat_bal + bd.ffn;  // balanced == unbalanced when uniform
  stages.makespan = stages.stage_sum();
  return stages;
}

StageCycles sparse_stage_cycles(const sparsity::SparsityPlan& plan,
                                const sparsity::SplsConfig& cfg, const HardwareConfig& hw) {
  cfg.validate();
  hw.validate();
  const Breakdown bd = analyze(plan, cfg, hw);
  StageCycles stages;
  stages.prediction = bd.prediction;
  stages.qkv = bd.qkv;
  stages.attention = bd.attention;
  stages.concat_ffn = bd.concat_unbal + bd.ffn;
  stages.makespan = stages.stage_sum();
  return stages;
}

CycleReport simulate(const sparsity::SplsConfig& cfg, const sparsity::SparsityPlan& plan,
                     const HardwareConfig& hw) {
  cfg.validate();
  hw.validate();
  if (static_cast<Index>(plan.heads.size()) != cfg.heads || plan.seq_len() != cfg.seq_len) {
    throw std::invalid_argument("simulate: plan shape disagrees with configuration");
  }

  const std::int64_t pes = hw.pe_count();
  CycleReport report;
  report.dense = dense_stage_cycles(cfg, hw);

  auto peak_bandwidth = [&](const Breakdown& bd, Cycles pred, Cycles qkv, Cycles attn,
                            Cycles concat_ffn) {
    double peak = 0.0;
    const std::pair<double, Cycles> stages[] = {{bd.bytes_prediction, pred},
                                                {bd.bytes_qkv, qkv},
                                                {bd.bytes_attention, attn},
                                                {bd.bytes_concat_ffn, concat_ffn}};
    for (const auto& [bytes, cycles] : stages) {
      if (cycles <= 0) continue;
      peak = std::max(peak, bytes * hw.clock_hz / static_cast<double>(cycles));
    }
    return peak;
  };

  if (plan.is_dense()) {
    // Degenerate plan: this is the baseline device; nothing to predict.
    const Breakdown bd = analyze(plan, cfg, hw);
    report.sparse = report.dense;
    report.utilization.prediction = 1.0;
    report.utilization.qkv = stage_utilization(bd.macs_qkv, pes, bd.qkv);
    report.utilization.attention = stage_utilization(bd.macs_attention, pes, bd.attention);
    report.utilization.concat_ffn =
        stage_utilization(bd.macs_concat + bd.macs_ffn, pes, bd.concat_bal + bd.ffn);
    report.peak_bandwidth_demand =
        peak_bandwidth(bd, 0, bd.qkv, bd.attention, bd.concat_bal + bd.ffn);
    report.bandwidth_exceeded = report.peak_bandwidth_demand > hw.bandwidth_bytes_per_s;
    return report;
  }

  const Breakdown bd = analyze(plan, cfg, hw);
  const Cycles no_overlap = bd.prediction + bd.qkv + bd.attention + bd.concat_unbal + bd.ffn;
  const Cycles schedule = progressive_makespan(bd.kpred, bd.pred_windows, bd.gen_windows);
  const Cycles overlapped_unbal = schedule + bd.attention + bd.concat_unbal + bd.ffn;
  const Cycles overlapped_bal = schedule + bd.attention + bd.concat_bal + bd.ffn;

  report.sparse.prediction = bd.prediction;
  report.sparse.qkv = bd.qkv;
  report.sparse.attention = bd.attention;
  report.sparse.concat_ffn = bd.concat_bal + bd.ffn;
  report.sparse.makespan = overlapped_bal;

  const double dense_total = static_cast<double>(report.dense.makespan);
  report.speedup_spls = dense_total / static_cast<double>(no_overlap);
  report.speedup_progressive =
      static_cast<double>(no_overlap) / static_cast<double>(overlapped_unbal);
  report.speedup_dynamic =
      static_cast<double>(overlapped_unbal) / static_cast<double>(overlapped_bal);
  report.speedup_total = dense_total / static_cast<double>(overlapped_bal);

  report.utilization.prediction = stage_utilization(bd.predict_products, hw.predict_lanes,
                                                    bd.prediction);
  report.utilization.qkv = stage_utilization(bd.macs_qkv, pes, bd.qkv);
  report.utilization.attention = stage_utilization(bd.macs_attention, pes, bd.attention);
  report.utilization.concat_ffn =
      stage_utilization(bd.macs_concat + bd.macs_ffn, pes, bd.concat_bal + bd.ffn);

  report.peak_bandwidth_demand =
      peak_bandwidth(bd, bd.prediction, bd.qkv, bd.attention, bd.concat_bal + bd.ffn);
  report.bandwidth_exceeded = report.peak_bandwidth_demand > hw.bandwidth_bytes_per_s;
  return report;
}

}  // namespace esact::perfsim
