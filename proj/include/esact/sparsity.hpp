// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "esact/prediction.hpp"
#include "esact/types.hpp"

#include <utility>
#include <vector>

namespace esact::sparsity {

/// Non-overlapping row windows covering [0, L); all of size w except possibly
/// a shorter trailing remainder window.
struct WindowPartition {
  Index window_size{1};
  std::vector<std::pair<Index, Index>> ranges;  // half-open [start, end)

  Index count() const { return static_cast<Index>(ranges.size()); }
};

/// Per-row representative map for one head. rep[i] == i marks a critical row;
/// otherwise rep[i] is the earlier critical row inside the same window that
/// row i mirrors.
struct SimilarityMap {
  Index head{0};
  std::vector<Index> rep;

  bool is_critical(Index row) const { return rep[static_cast<std::size_t>(row)] == row; }
  Index critical_count() const;
};

struct SimilarityStats {
  std::int64_t distance_evals{0};
};

/// Pipeline hyperparameters and block dimensions.
struct SplsConfig {
  Index seq_len{64};
  Index embed_dim{64};
  Index heads{4};
  Index ffn_dim{256};
  Index window{8};
  Ratio top_k{1, 5};
  Ratio similarity{2, 5};
  int ffn_threshold{2};
  bool attach_nearest{false};  // attach similar rows to the nearest (not first) critical

  Index head_dim() const { return embed_dim / heads; }
  void validate() const;  // throws std::invalid_argument
};

/// Everything the sparse execution path needs, for one head.
struct HeadPlan {
  std::vector<Index> q_rows;    // critical rows, ascending
  std::vector<Index> kv_rows;   // K/V rows to generate (kept mask columns), ascending
  std::vector<std::vector<Index>> window_active_cols;  // per window, ascending
  SimilarityMap sim;
  MaskMatrix keep;              // kept score positions, L x L
};

struct SparsityPlan {
  WindowPartition windows;
  std::vector<HeadPlan> heads;
  std::vector<Index> ffn_keep;  // ascending
  std::vector<Index> ffn_rep;   // size L; ffn_rep[t] == t iff t is kept

  Index seq_len() const { return heads.empty() ? 0 : heads.front().keep.rows(); }
  bool is_dense() const;

  /// Degenerate plan: everything critical, everything kept.
  static SparsityPlan dense(const SplsConfig& cfg);
};

WindowPartition partition_windows(Index seq_len, Index window);

/// Mass-normalized L1 distance between two masked score rows, in [0, 1].
/// Zero when both masked rows are all-zero.
Ratio row_distance(const prediction::Spa& spa, Index i, Index c);

/// Greedy first-fit scan in ascending row order within each window: a row
/// becomes Similar to the first earlier critical row within threshold s,
/// else Critical. With attach_nearest, the closest qualifying critical wins.
SimilarityMap window_similarity(const prediction::Spa& spa, const WindowPartition& part,
                                Ratio s, bool attach_nearest = false,
                                SimilarityStats* stats = nullptr);

/// Token-level pruning by the most frequent critical index across heads.
/// Returns (kept tokens ascending, representative per token). A token is
/// pruned when its MFI differs from itself and occurs in at least
/// ffn_threshold heads; representatives chain to a kept token.
std::pair<std::vector<Index>, std::vector<Index>> mfi_tokens(
    const std::vector<SimilarityMap>& maps, int ffn_threshold, Index heads);

SparsityPlan build_plan(const std::vector<prediction::Spa>& spas,
                        const std::vector<SimilarityMap>& maps, const SplsConfig& cfg);

}  // namespace esact::sparsity
