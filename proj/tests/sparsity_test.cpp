// SPDX-License-Identifier: Apache-2.0
#include "esact/sparsity.hpp"

#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace esact;
using namespace esact::sparsity;
using esact::prediction::Pam;
using esact::prediction::Spa;

namespace {

// Spa with hand-picked masked rows: scores and mask set together.
Spa literal_spa(const std::vector<std::vector<std::int32_t>>& rows) {
  const Index n = static_cast<Index>(rows.size());
  Spa spa;
  spa.pam.scores = MatrixI32::Zero(n, n);
  spa.keep = MaskMatrix::Constant(n, n, false);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < static_cast<Index>(rows[static_cast<std::size_t>(i)].size()); ++j) {
      const std::int32_t v = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      spa.pam.scores(i, j) = v;
      spa.keep(i, j) = v != 0;
    }
  }
  return spa;
}

}  // namespace

TEST_CASE("window partition") {
  const WindowPartition even = partition_windows(16, 8);
  CHECK(even.ranges == std::vector<std::pair<Index, Index>>{{0, 8}, {8, 16}});

  const WindowPartition remainder = partition_windows(13, 8);
  CHECK(remainder.ranges == std::vector<std::pair<Index, Index>>{{0, 8}, {8, 13}});

  const WindowPartition shorter = partition_windows(4, 8);
  CHECK(shorter.ranges == std::vector<std::pair<Index, Index>>{{0, 4}});
}

TEST_CASE("row distance") {
  const Spa spa = literal_spa({{4, 0, 4, 0}, {4, 0, 4, 0}, {4, 0, 0, 4}, {0, 0, 0, 0}});
  CHECK(row_distance(spa, 0, 1) == Ratio(0, 1));         // identical masked rows
  CHECK(row_distance(spa, 0, 2) == Ratio(1, 2));         // 8 / 16
  CHECK(row_distance(spa, 3, 3) == Ratio(0, 1));         // both empty
  const Spa disjoint = literal_spa({{7, 7, 0, 0}, {0, 0, 7, 7}});
  CHECK(row_distance(disjoint, 0, 1) == Ratio(1, 1));    // equal mass, disjoint support
}

TEST_CASE("window similarity") {
  SUBCASE("threshold one leaves a single critical per window") {
    Splitmix64 rng(31);
    for (const Index rows : {8, 16, 20}) {
      const Spa spa = prediction::topk_rows(testsupport::random_pam(rows, rng), Ratio(1, 4));
      const WindowPartition part = partition_windows(rows, 8);
      const SimilarityMap map = window_similarity(spa, part, Ratio(1, 1));
      CHECK(map.critical_count() == part.count());
      for (const auto& [start, end] : part.ranges) {
        CHECK(map.is_critical(start));
        for (Index r = start + 1; r < end; ++r) CHECK(map.rep[static_cast<std::size_t>(r)] == start);
      }
    }
  }

  SUBCASE("threshold zero on distinct rows keeps everything critical") {
    const Spa spa = literal_spa({{1, 0, 0, 0}, {0, 2, 0, 0}, {0, 0, 3, 0}, {0, 0, 0, 4}});
    const SimilarityMap map = window_similarity(spa, partition_windows(4, 8), Ratio(0, 1));
    CHECK(map.critical_count() == 4);
  }

  SUBCASE("three equal rows and one distinct") {
    const Spa spa = literal_spa({{4, 4, 0, 0}, {4, 4, 0, 0}, {4, 4, 0, 0}, {0, 0, 4, 4}});
    const SimilarityMap map = window_similarity(spa, partition_windows(4, 8), Ratio(1, 10));
    CHECK(map.rep == std::vector<Index>{0, 0, 0, 3});
  }

  SUBCASE("first-fit versus nearest attachment") {
    // row 3 qualifies for both criticals; row 1 is much closer.
    const Spa spa = literal_spa({
        {16, 16, 0, 0},   // critical 0
        {0, 0, 16, 16},   // critical 1 (distance 1 from row 0)
        {0, 0, 0, 0},     // padding, stays critical at s=0.6? no: empty row -> distance to row0 is 1
        {0, 0, 16, 12},   // near row 1, farther from row 0
    });
    const WindowPartition part = partition_windows(4, 8);
    const SimilarityMap first = window_similarity(spa, part, Ratio(3, 5), false);
    const SimilarityMap nearest = window_similarity(spa, part, Ratio(3, 5), true);
    // d(3,0) = 1 > 0.6, d(3,1) = 4/60 <= 0.6: both policies attach to 1;
    // rows 0..2: d(1,0)=1, d(2,0)=1, d(2,1)=1 -> criticals 0,1,2 either way.
    CHECK(first.rep == std::vector<Index>{0, 1, 2, 1});
    CHECK(nearest.rep == std::vector<Index>{0, 1, 2, 1});

    // make row 3 qualify for both: first-fit picks 0, nearest picks 1
    const Spa both = literal_spa({
        {16, 16, 0, 0},
        {0, 0, 16, 16},
        {0, 0, 0, 0},
        {4, 4, 16, 16},
    });
    // d(3,0) = (12+12+16+16)/(8+8+40) = 56/72 ~ 0.78 <= 0.8
    // d(3,1) = (4+4)/(32+40)          =  8/72 ~ 0.11 <= 0.8
    const SimilarityMap f2 = window_similarity(both, part, Ratio(4, 5), false);
    const SimilarityMap n2 = window_similarity(both, part, Ratio(4, 5), true);
    CHECK(f2.rep[3] == 0);
    CHECK(n2.rep[3] == 1);
  }

  SUBCASE("evaluation counts stay within the pairwise bound") {
    Splitmix64 rng(32);
    for (int trial = 0; trial < 20; ++trial) {
      const Index rows = 4 + static_cast<Index>(rng.next_below(28));
      const Index w = 1 + static_cast<Index>(rng.next_below(10));
      const Spa spa = prediction::topk_rows(testsupport::random_pam(rows, rng), Ratio(1, 2));
      const WindowPartition part = partition_windows(rows, w);
      SimilarityStats stats;
      window_similarity(spa, part, Ratio(1, 2), false, &stats);
      std::int64_t bound = 0;
      for (const auto& [start, end] : part.ranges) {
        const std::int64_t wi = end - start;
        bound += wi * (wi - 1) / 2;
      }
      CHECK(stats.distance_evals <= bound);
      CHECK(stats.distance_evals <= rows * (w - 1));
    }
  }

  SUBCASE("larger thresholds never lose similar rows") {
    Splitmix64 rng(33);
    for (int trial = 0; trial < 12; ++trial) {
      const Index rows = 16 + static_cast<Index>(rng.next_below(17));
      const Spa spa =
          prediction::topk_rows(testsupport::clustered_pam(rows, rng, 8, 3), Ratio(1, 4));
      const WindowPartition part = partition_windows(rows, 8);
      Index previous_similar = 0;
      for (int step = 0; step <= 10; ++step) {
        const SimilarityMap map = window_similarity(spa, part, Ratio(step, 10));
        const Index similar = rows - map.critical_count();
        CHECK(similar >= previous_similar);
        previous_similar = similar;
      }
    }
  }
}

TEST_CASE("plan construction") {
  SplsConfig cfg;
  cfg.seq_len = 6;
  cfg.embed_dim = 8;
  cfg.heads = 1;
  cfg.ffn_dim = 16;
  cfg.window = 6;
  cfg.top_k = Ratio(1, 3);
  cfg.similarity = Ratio(1, 2);
  cfg.ffn_threshold = 1;

  SUBCASE("columns never kept drop out of the K/V rows and window actives") {
    Spa spa = literal_spa({
        {9, 0, 0, 0, 0, 0},
        {0, 0, 8, 0, 0, 0},
        {0, 0, 0, 0, 7, 0},
        {0, 0, 0, 0, 0, 6},
        {9, 0, 0, 0, 0, 0},
        {0, 0, 8, 0, 0, 0},
    });
    const WindowPartition part = partition_windows(6, 6);
    const SimilarityMap map = window_similarity(spa, part, Ratio(0, 1));
    const SparsityPlan plan = build_plan({spa}, {map}, cfg);
    CHECK(plan.heads[0].kv_rows == std::vector<Index>{0, 2, 4, 5});
    CHECK(plan.heads[0].window_active_cols[0] == std::vector<Index>{0, 2, 4, 5});
  }

  SUBCASE("dense masks with distinct rows give the dense plan") {
    Pam pam;
    pam.scores.resize(6, 6);
    for (Index i = 0; i < 6; ++i)
      for (Index j = 0; j < 6; ++j) pam.scores(i, j) = static_cast<std::int32_t>(10 * i + j + 1);
    const Spa spa = prediction::topk_rows(pam, Ratio(1, 1));
    cfg.similarity = Ratio(0, 1);
    const SimilarityMap map =
        window_similarity(spa, partition_windows(6, 6), cfg.similarity);
    const SparsityPlan plan = build_plan({spa}, {map}, cfg);
    CHECK(plan.is_dense());
    CHECK(plan.heads[0].q_rows.size() == 6);
    CHECK(plan.heads[0].kv_rows.size() == 6);
    CHECK(plan.ffn_keep.size() == 6);
  }

  SUBCASE("kept columns of critical rows are always generated") {
    Splitmix64 rng(34);
    SplsConfig rcfg;
    rcfg.seq_len = 24;
    rcfg.embed_dim = 16;
    rcfg.heads = 2;
    rcfg.ffn_dim = 32;
    rcfg.window = 8;
    rcfg.top_k = Ratio(1, 4);
    rcfg.similarity = Ratio(3, 5);
    rcfg.ffn_threshold = 1;
    const SparsityPlan plan = testsupport::random_plan(rcfg, rng, true);
    for (const HeadPlan& hp : plan.heads) {
      std::set<Index> kv(hp.kv_rows.begin(), hp.kv_rows.end());
      for (const Index i : hp.q_rows) {
        for (Index j = 0; j < rcfg.seq_len; ++j) {
          if (hp.keep(i, j)) CHECK(kv.count(j) == 1);
        }
      }
    }
  }

  SUBCASE("head count mismatch is rejected") {
    const Spa spa = literal_spa({{1}});
    SplsConfig one;
    one.seq_len = 1;
    one.embed_dim = 4;
    one.heads = 2;
    one.ffn_dim = 8;
    one.window = 8;
    one.ffn_threshold = 1;
    const SimilarityMap map{0, {0}};
    CHECK_THROWS_AS(build_plan({spa}, {map}, one), std::invalid_argument);
  }
}

TEST_CASE("most frequent index pruning") {
  SUBCASE("unanimously critical tokens stay") {
    std::vector<SimilarityMap> maps(4);
    for (Index h = 0; h < 4; ++h) maps[static_cast<std::size_t>(h)] = {h, {0, 1, 2}};
    const auto [keep, rep] = mfi_tokens(maps, 2, 4);
    CHECK(keep == std::vector<Index>{0, 1, 2});
    CHECK(rep == std::vector<Index>{0, 1, 2});
  }

  SUBCASE("threshold decides pruning") {
    // 8 heads; token 9 maps to 5 in six of them
    std::vector<SimilarityMap> maps;
    for (Index h = 0; h < 8; ++h) {
      std::vector<Index> r(10);
      for (Index t = 0; t < 10; ++t) r[static_cast<std::size_t>(t)] = t;
      if (h < 6) r[9] = 5;
      maps.push_back({h, r});
    }
    const auto [keep5, rep5] = mfi_tokens(maps, 5, 8);
    CHECK(rep5[9] == 5);
    CHECK(std::find(keep5.begin(), keep5.end(), 9) == keep5.end());

    const auto [keep7, rep7] = mfi_tokens(maps, 7, 8);
    CHECK(rep7[9] == 9);
    CHECK(std::find(keep7.begin(), keep7.end(), 9) != keep7.end());
  }

  SUBCASE("representative chains resolve to kept tokens") {
    // heads 0,1: token1 -> 0; heads 2,3: token2 -> 1. Ties break low, so both
    // token1 and token2 are pruned and token2 chains through token1 to 0.
    std::vector<SimilarityMap> maps;
    maps.push_back({0, {0, 0, 2}});
    maps.push_back({1, {0, 0, 2}});
    maps.push_back({2, {0, 1, 1}});
    maps.push_back({3, {0, 1, 1}});
    const auto [keep, rep] = mfi_tokens(maps, 2, 4);
    CHECK(keep == std::vector<Index>{0});
    CHECK(rep == std::vector<Index>{0, 0, 0});
    for (Index t = 0; t < 3; ++t) {
      CHECK(rep[static_cast<std::size_t>(rep[static_cast<std::size_t>(t)])] ==
            rep[static_cast<std::size_t>(t)]);
    }
  }

  SUBCASE("idempotence on random plans") {
    Splitmix64 rng(35);
    SplsConfig cfg;
    cfg.seq_len = 32;
    cfg.embed_dim = 16;
    cfg.heads = 4;
    cfg.ffn_dim = 32;
    cfg.window = 8;
    cfg.top_k = Ratio(1, 4);
    cfg.similarity = Ratio(4, 5);
    cfg.ffn_threshold = 2;
    for (int trial = 0; trial < 10; ++trial) {
      const SparsityPlan plan = testsupport::random_plan(cfg, rng, true);
      for (Index t = 0; t < cfg.seq_len; ++t) {
        const Index r = plan.ffn_rep[static_cast<std::size_t>(t)];
        CHECK(plan.ffn_rep[static_cast<std::size_t>(r)] == r);
        CHECK((r == t) == (std::find(plan.ffn_keep.begin(), plan.ffn_keep.end(), t) !=
                           plan.ffn_keep.end()));
      }
    }
  }
}

TEST_CASE("configuration validation") {
  SplsConfig cfg;
  cfg.seq_len = 8;
  cfg.embed_dim = 12;
  cfg.heads = 4;
  cfg.ffn_dim = 16;
  cfg.window = 4;
  cfg.ffn_threshold = 2;
  CHECK_NOTHROW(cfg.validate());

  SplsConfig bad = cfg;
  bad.embed_dim = 10;  // not divisible by heads
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.ffn_threshold = 5;  // above head count
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.top_k = Ratio(0, 1);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = cfg;
  bad.similarity = Ratio(3, 2);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
