// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "esact/sparsity.hpp"
#include "esact/types.hpp"

#include <cstdint>
#include <span>

namespace esact::perfsim {

using Cycles = std::int64_t;

struct HardwareConfig {
  Index pe_rows{16};
  Index pe_cols{64};
  double clock_hz{5.0e8};
  double bandwidth_bytes_per_s{9.0e11 / 125.0};  // per-unit share of the system budget
  Index fifo_depth{8};
  Index tile_load_cycles{16};   // stationary-tile fill latency
  Index predict_lanes{1024};    // shift-add products per cycle

  Index pe_count() const { return pe_rows * pe_cols; }
  void validate() const;
};

struct StageCycles {
  Cycles prediction{0};
  Cycles qkv{0};
  Cycles attention{0};
  Cycles concat_ffn{0};
  Cycles makespan{0};

  Cycles stage_sum() const { return prediction + qkv + attention + concat_ffn; }
};

struct StageUtilization {
  double prediction{1.0};
  double qkv{1.0};
  double attention{1.0};
  double concat_ffn{1.0};
};

struct CycleReport {
  StageCycles dense;
  StageCycles sparse;
  StageUtilization utilization;  // of the sparse execution
  double speedup_spls{1.0};
  double speedup_progressive{1.0};
  double speedup_dynamic{1.0};
  double speedup_total{1.0};
  double peak_bandwidth_demand{0.0};  // bytes per second
  bool bandwidth_exceeded{false};
};

/// Weight-stationary GEMM latency: one MAC per PE per cycle over
/// ceil(n/pe_cols) * ceil(m/pe_rows) output tiles, k cycles each, plus the
/// tile fill latency. Zero if any extent is zero.
Cycles gemm_cycles(Index m, Index n, Index k, const HardwareConfig& hw);

struct DynamicAllocation {
  Cycles balanced{0};
  Cycles unbalanced{0};
  double utilization{1.0};
};

/// Load balancing of per-row work-unit counts over pe_rows lines. Unbalanced
/// executes rows in arrival waves of pe_rows, each costing that wave's
/// maximum count. Balanced packs the total evenly, at ceil(total/pe_rows)
/// plus one steering cycle whenever any row has to split across lines; the
/// allocator falls back to the wave schedule when splitting would not help,
/// so balanced never exceeds unbalanced.
DynamicAllocation dynamic_allocation_cycles(std::span<const Index> row_counts,
                                            const HardwareConfig& hw);

/// Window-pipelined makespan: K prediction runs first, then window i's
/// prediction overlaps window i-1's generation:
///   k_pred + pred[0] + sum_i max(pred[i+1], gen[i]) + gen
Cycles progressive_makespan(Cycles k_pred, std::span<const Cycles> pred,
                            std::span<const Cycles> gen);

/// Baseline device: no prediction, dense stages, sequential makespan.
StageCycles dense_stage_cycles(const sparsity::SplsConfig& cfg, const HardwareConfig& hw);

/// Per-stage latencies under a plan, with no overlap and no load balancing.
/// The qkv stage runs compacted row counts through the GEMM model; attention
/// processes critical rows in waves of pe_rows, each row costing
/// ceil(kept * head_dim / pe_cols) cycles per phase (scores, then weighted
/// values); concat_ffn covers the per-head output-projection partial sums
/// plus both feed-forward layers over kept tokens; prediction covers the
/// shift-add datapath over the prediction GEMMs plus the windowed similarity
/// comparisons at pe_cols element-ops per cycle.
StageCycles sparse_stage_cycles(const sparsity::SparsityPlan& plan,
                                const sparsity::SplsConfig& cfg, const HardwareConfig& hw);

/// Full report: dense baseline vs. plan-driven sparse execution with
/// progressive overlap and dynamic allocation. A fully dense plan models the
/// baseline device itself (no prediction pipeline), so every speedup is 1.
CycleReport simulate(const sparsity::SplsConfig& cfg, const sparsity::SparsityPlan& plan,
                     const HardwareConfig& hw);

}  // namespace esact::perfsim
