// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "esact/sparsity.hpp"
#include "esact/types.hpp"

#include <cstdint>

namespace esact::refblock {

struct BlockWeights {
  QTensor wq, wk, wv, wo;  // embed_dim x embed_dim
  QTensor w1;              // embed_dim x ffn_dim
  QTensor w2;              // ffn_dim x embed_dim
  VectorF64 ln1_gain, ln1_bias, ln2_gain, ln2_bias;

  /// Seeded random weights with unit layer-norm parameters.
  static BlockWeights synthetic(const sparsity::SplsConfig& cfg, std::uint64_t seed);
};

/// Seeded random block input. Rows come in clusters of `cluster` consecutive
/// tokens that share a base vector plus per-element noise in [-noise, noise],
/// so local row similarity is controllable.
QTensor synthetic_input(const sparsity::SplsConfig& cfg, std::uint64_t seed,
                        Index cluster = 8, int noise = 3);

/// Multiply counts of the three GEMM groups. qkv covers the Q/K/V projections
/// plus the output projection; attention covers the score and weighted-value
/// products; ffn covers both feed-forward layers.
struct MacCount {
  std::int64_t qkv{0};
  std::int64_t attention{0};
  std::int64_t ffn{0};

  std::int64_t total() const { return qkv + attention + ffn; }

  friend bool operator==(const MacCount&, const MacCount&) = default;
};

struct FidelityReport {
  double max_abs_diff{0.0};
  double mean_abs_diff{0.0};
  double cosine{1.0};
};

struct ForwardResult {
  MatrixF64 output;
  MacCount macs;
};

struct SparseResult {
  MatrixF64 output;
  MacCount macs;
  FidelityReport fidelity;
  MatrixF64 attention_concat;  // per-head attention outputs before the output projection
};

/// Full-precision reference execution of one block on dequantized tensors.
/// Integer GEMMs accumulate exactly; floating accumulation is fixed
/// left-to-right (the output projection sums per-head partial sums in head
/// order) so repeated runs and the degenerate sparse path are bit-identical.
ForwardResult dense_forward(const QTensor& x, const BlockWeights& w,
                            const sparsity::SplsConfig& cfg);

/// Sparse execution under a plan: Q rows only for critical rows, K/V rows
/// only for kept mask columns, scores only at kept positions of critical
/// rows, critical attention rows copied onto their similar rows, output
/// projection partial sums computed per head for critical rows and recovered
/// by copy elsewhere, and the FFN run only for kept tokens with results
/// copied from representatives after the second layer.
SparseResult sparse_forward(const QTensor& x, const BlockWeights& w,
                            const sparsity::SparsityPlan& plan,
                            const sparsity::SplsConfig& cfg);

/// Same, reusing an already-computed dense output as the fidelity reference.
SparseResult sparse_forward_with_reference(const QTensor& x, const BlockWeights& w,
                                           const sparsity::SparsityPlan& plan,
                                           const sparsity::SplsConfig& cfg,
                                           const MatrixF64& dense_output);

/// Closed-form dense counts: qkv = 4*L*D^2, attention = 2*L^2*D, ffn = 2*L*D*F.
MacCount dense_mac_formula(const sparsity::SplsConfig& cfg);

/// Closed-form sparse counts from plan set sizes.
MacCount sparse_mac_formula(const sparsity::SparsityPlan& plan,
                            const sparsity::SplsConfig& cfg);

struct ReductionReport {
  double qkv{0.0};
  double attention{0.0};
  double ffn{0.0};
  double total{0.0};
};

/// Fractional reduction 1 - sparse/dense per component; dense components must
/// be positive.
ReductionReport reduction_report(const MacCount& dense, const MacCount& sparse);

FidelityReport measure_fidelity(const MatrixF64& reference, const MatrixF64& candidate);

}  // namespace esact::refblock
