// SPDX-License-Identifier: Apache-2.0
#include "esact/sparsity.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <stdexcept>

namespace esact::sparsity {

Index SimilarityMap::critical_count() const {
  Index n = 0;
  for (std::size_t i = 0; i < rep.size(); ++i) {
    if (rep[i] == static_cast<Index>(i)) ++n;
  }
  return n;
}

void SplsConfig::validate() const {
  if (seq_len < 1) throw std::invalid_argument("seq_len must be >= 1");
  if (embed_dim < 1) throw std::invalid_argument("embed_dim must be >= 1");
  if (heads < 1) throw std::invalid_argument("heads must be >= 1");
  if (ffn_dim < 1) throw std::invalid_argument("ffn_dim must be >= 1");
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (embed_dim % heads != 0) throw std::invalid_argument("embed_dim must be divisible by heads");
  if (!(Ratio(0, 1) < top_k) || !(top_k <= Ratio(1, 1))) {
    throw std::invalid_argument("top_k must be in (0, 1]");
  }
  if (similarity < Ratio(0, 1) || Ratio(1, 1) < similarity) {
    throw std::invalid_argument("similarity must be in [0, 1]");
  }
  if (ffn_threshold < 1 || ffn_threshold > heads) {
    throw std::invalid_argument("ffn_threshold must be in [1, heads]");
  }
}

WindowPartition partition_windows(Index seq_len, Index window) {
  if (seq_len < 1 || window < 1) throw std::invalid_argument("partition_windows: bad sizes");
  WindowPartition part;
  part.window_size = window;
  for (Index start = 0; start < seq_len; start += window) {
    part.ranges.emplace_back(start, std::min(start + window, seq_len));
  }
  return part;
}

Ratio row_distance(const prediction::Spa& spa, Index i, Index c) {
  const Index cols = spa.keep.cols();
  std::int64_t num = 0;
  std::int64_t den = 0;
  for (Index j = 0; j < cols; ++j) {
    const std::int64_t a = spa.keep(i, j) ? spa.pam.scores(i, j) : 0;
    const std::int64_t b = spa.keep(c, j) ? spa.pam.scores(c, j) : 0;
    num += std::abs(a - b);
    den += std::abs(a) + std::abs(b);
  }
  if (den == 0) return Ratio(0, 1);
  return Ratio(num, den);
}

SimilarityMap window_similarity(const prediction::Spa& spa, const WindowPartition& part,
                                Ratio s, bool attach_nearest, SimilarityStats* stats) {
  if (s < Ratio(0, 1) || Ratio(1, 1) < s) {
    throw std::invalid_argument("window_similarity: threshold must be in [0, 1]");
  }
  const Index rows = spa.rows();
  SimilarityMap map;
  map.head = spa.pam.head;
  map.rep.resize(static_cast<std::size_t>(rows));

  std::vector<Index> criticals;
  for (const auto& [start, end] : part.ranges) {
    criticals.clear();
    for (Index r = start; r < end; ++r) {
      Index attach = r;
      Ratio best(1, 1);
      for (Index c : criticals) {
        if (stats) ++stats->distance_evals;
        const Ratio d = row_distance(spa, r, c);
        if (d <= s) {
          if (!attach_nearest) {
            attach = c;
            break;
          }
          if (attach == r || d < best) {
            attach = c;
            best = d;
          }
        }
      }
      map.rep[static_cast<std::size_t>(r)] = attach;
      if (attach == r) criticals.push_back(r);
    }
  }
  return map;
}

std::pair<std::vector<Index>, std::vector<Index>> mfi_tokens(
    const std::vector<SimilarityMap>& maps, int ffn_threshold, Index heads) {
  if (static_cast<Index>(maps.size()) != heads) {
    throw std::invalid_argument("mfi_tokens: head count disagrees with maps");
  }
  if (ffn_threshold < 1 || ffn_threshold > heads) {
    throw std::invalid_argument("mfi_tokens: threshold must be in [1, heads]");
  }
  const Index tokens = static_cast<Index>(maps.front().rep.size());
  std::vector<Index> keep;
  std::vector<Index> rep(static_cast<std::size_t>(tokens));

  std::map<Index, int> counts;
  for (Index t = 0; t < tokens; ++t) {
    counts.clear();
    for (const SimilarityMap& m : maps) ++counts[m.rep[static_cast<std::size_t>(t)]];
    Index mfi = t;
    int best = 0;
    for (const auto& [value, count] : counts) {  // ascending keys: ties pick the smallest
      if (count > best) {
        best = count;
        mfi = value;
      }
    }
    if (mfi != t && best >= ffn_threshold) {
      rep[static_cast<std::size_t>(t)] = rep[static_cast<std::size_t>(mfi)];  // mfi < t, already resolved
    } else {
      rep[static_cast<std::size_t>(t)] = t;
      keep.push_back(t);
    }
  }
  return {std::move(keep), std::move(rep)};
}

bool SparsityPlan::is_dense() const {
  const Index rows = seq_len();
  if (static_cast<Index>(ffn_keep.size()) != rows) return false;
  for (const HeadPlan& hp : heads) {
    if (static_cast<Index>(hp.q_rows.size()) != rows) return false;
    if (static_cast<Index>(hp.kv_rows.size()) != rows) return false;
    if (!hp.keep.all()) return false;
  }
  return true;
}

SparsityPlan SparsityPlan::dense(const SplsConfig& cfg) {
  cfg.validate();
  const Index rows = cfg.seq_len;
  SparsityPlan plan;
  plan.windows = partition_windows(rows, cfg.window);

  std::vector<Index> all(static_cast<std::size_t>(rows));
  for (Index i = 0; i < rows; ++i) all[static_cast<std::size_t>(i)] = i;

  HeadPlan hp;
  hp.q_rows = all;
  hp.kv_rows = all;
  hp.keep = MaskMatrix::Constant(rows, rows, true);
  hp.sim.rep = all;
  hp.window_active_cols.assign(static_cast<std::size_t>(plan.windows.count()), all);
  for (Index h = 0; h < cfg.heads; ++h) {
    hp.sim.head = h;
    plan.heads.push_back(hp);
  }
  plan.ffn_keep = all;
  plan.ffn_rep = all;
  return plan;
}

SparsityPlan build_plan(const std::vector<prediction::Spa>& spas,
                        const std::vector<SimilarityMap>& maps, const SplsConfig& cfg) {
  cfg.validate();
  if (static_cast<Index>(spas.size()) != cfg.heads ||
      static_cast<Index>(maps.size()) != cfg.heads) {
    throw std::invalid_argument("build_plan: head count disagrees with configuration");
  }
  const Index rows = cfg.seq_len;
  for (const prediction::Spa& spa : spas) {
    if (spa.rows() != rows || spa.keep.cols() != rows) {
      throw std::invalid_argument("build_plan: mask shape disagrees with configuration");
    }
  }

  SparsityPlan plan;
  plan.windows = partition_windows(rows, cfg.window);

  for (Index h = 0; h < cfg.heads; ++h) {
    const prediction::Spa& spa = spas[static_cast<std::size_t>(h)];
    HeadPlan hp;
    hp.sim = maps[static_cast<std::size_t>(h)];
    hp.keep = spa.keep;

    for (Index r = 0; r < rows; ++r) {
      if (hp.sim.is_critical(r)) hp.q_rows.push_back(r);
    }
    for (Index j = 0; j < rows; ++j) {
      if (spa.keep.col(j).any()) hp.kv_rows.push_back(j);
    }
    for (const auto& [start, end] : plan.windows.ranges) {
      std::vector<Index> active;
      for (Index j = 0; j < rows; ++j) {
        bool hit = false;
        for (Index r = start; r < end && !hit; ++r) hit = spa.keep(r, j);
        if (hit) active.push_back(j);
      }
      hp.window_active_cols.push_back(std::move(active));
    }
    plan.heads.push_back(std::move(hp));
  }

  auto [keep, rep] = mfi_tokens(maps, cfg.ffn_threshold, cfg.heads);
  plan.ffn_keep = std::move(keep);
  plan.ffn_rep = std::move(rep);
  return plan;
}

}  // namespace esact::sparsity
