// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "esact/prediction.hpp"
#include "esact/sparsity.hpp"
#include "esact/types.hpp"

#include <vector>

namespace esact::testsupport {

inline prediction::Pam random_pam(Index rows, Splitmix64& rng, Index head = 0,
                                  int score_range = 64) {
  prediction::Pam pam;
  pam.head = head;
  pam.scores.resize(rows, rows);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < rows; ++j)
      pam.scores(i, j) = static_cast<std::int32_t>(rng.next_range(-score_range, score_range));
  return pam;
}

/// Rows inside each cluster share a base score row plus small jitter, so
/// windowed similarity finds real structure.
inline prediction::Pam clustered_pam(Index rows, Splitmix64& rng, Index cluster, int jitter,
                                     Index head = 0) {
  prediction::Pam pam;
  pam.head = head;
  pam.scores.resize(rows, rows);
  std::vector<std::int32_t> base(static_cast<std::size_t>(rows));
  for (Index i = 0; i < rows; ++i) {
    if (i % cluster == 0) {
      for (Index j = 0; j < rows; ++j)
        base[static_cast<std::size_t>(j)] = static_cast<std::int32_t>(rng.next_range(-64, 64));
    }
    for (Index j = 0; j < rows; ++j) {
      pam.scores(i, j) = base[static_cast<std::size_t>(j)] +
                         static_cast<std::int32_t>(jitter > 0 ? rng.next_range(-jitter, jitter) : 0);
    }
  }
  return pam;
}

inline sparsity::SparsityPlan random_plan(const sparsity::SplsConfig& cfg, Splitmix64& rng,
                                          bool clustered = false) {
  std::vector<prediction::Spa> spas;
  std::vector<sparsity::SimilarityMap> maps;
  const sparsity::WindowPartition part = sparsity::partition_windows(cfg.seq_len, cfg.window);
  for (Index h = 0; h < cfg.heads; ++h) {
    const prediction::Pam pam = clustered ? clustered_pam(cfg.seq_len, rng, cfg.window, 2, h)
                                          : random_pam(cfg.seq_len, rng, h);
    spas.push_back(prediction::topk_rows(pam, cfg.top_k));
    maps.push_back(sparsity::window_similarity(spas.back(), part, cfg.similarity));
  }
  return sparsity::build_plan(spas, maps, cfg);
}

}  // namespace esact::testsupport
