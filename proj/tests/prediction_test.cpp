// SPDX-License-Identifier: Apache-2.0
#include "esact/prediction.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace esact;
using namespace esact::prediction;

namespace {

// Independent oracle: quantize each scalar, multiply decoded integers, sum.
MatrixI32 oracle_matmul(const QTensor& a, const QTensor& b) {
  MatrixI32 out(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      std::int64_t acc = 0;
      for (Index t = 0; t < a.cols(); ++t) {
        acc += static_cast<std::int64_t>(quant::hlog_quantize(a.data(i, t)).decode()) *
               static_cast<std::int64_t>(quant::hlog_quantize(b.data(t, j)).decode());
      }
      out(i, j) = static_cast<std::int32_t>(acc);
    }
  }
  return out;
}

QTensor random_qtensor(Index rows, Index cols, Splitmix64& rng) {
  QTensor t;
  t.data.resize(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      t.data(i, j) = static_cast<std::int8_t>(rng.next_range(-127, 127));
  t.scale = 1.0;
  return t;
}

}  // namespace

TEST_CASE("predict_matmul on the worked 1x1 example") {
  QTensor a, b;
  a.data.resize(1, 1);
  a.data(0, 0) = 42;
  b.data.resize(1, 1);
  b.data(0, 0) = -18;
  const MatrixI32 out = predict_matmul(a, b);
  CHECK(out(0, 0) == -768);  // 48 * -16

  b.data(0, 0) = 0;
  CHECK(predict_matmul(a, b)(0, 0) == 0);
}

TEST_CASE("predict_matmul equals the quantize-then-multiply oracle") {
  Splitmix64 rng(21);
  const QTensor a = random_qtensor(4, 3, rng);
  const QTensor b = random_qtensor(3, 2, rng);
  CHECK(predict_matmul(a, b) == oracle_matmul(a, b));

  for (int trial = 0; trial < 20; ++trial) {
    const Index m = 1 + static_cast<Index>(rng.next_below(8));
    const Index k = 1 + static_cast<Index>(rng.next_below(12));
    const Index n = 1 + static_cast<Index>(rng.next_below(8));
    const QTensor x = random_qtensor(m, k, rng);
    const QTensor y = random_qtensor(k, n, rng);
    CHECK(predict_matmul(x, y) == oracle_matmul(x, y));
  }

  QTensor bad = random_qtensor(2, 5, rng);
  CHECK_THROWS_AS(predict_matmul(a, bad), std::invalid_argument);
}

TEST_CASE("bumping one entry to the next level keeps oracle equality") {
  Splitmix64 rng(22);
  QTensor a = random_qtensor(5, 6, rng);
  const QTensor b = random_qtensor(6, 4, rng);
  const std::int32_t decoded = quant::hlog_quantize(a.data(2, 3)).decode();
  const auto& levels = quant::hlog_levels(8).levels;
  std::int32_t next = decoded == 0 ? 1 : std::abs(decoded);
  for (const std::int32_t level : levels) {
    if (level > std::abs(decoded)) {
      next = level;
      break;
    }
  }
  a.data(2, 3) = static_cast<std::int8_t>(std::min<std::int32_t>(next, 127));
  CHECK(predict_matmul(a, b) == oracle_matmul(a, b));
}

TEST_CASE("requantize8") {
  MatrixI32 in_range(1, 2);
  in_range << 127, -127;
  const QTensor q1 = requantize8(in_range);
  CHECK(q1.scale == 1.0);
  CHECK(q1.data(0, 0) == 127);
  CHECK(q1.data(0, 1) == -127);

  MatrixI32 wide(1, 1);
  wide << 254;
  const QTensor q2 = requantize8(wide);
  CHECK(q2.scale == 2.0);
  CHECK(q2.data(0, 0) == 127);

  const MatrixI32 zeros = MatrixI32::Zero(3, 3);
  const QTensor q3 = requantize8(zeros);
  CHECK(q3.scale == 1.0);
  CHECK((q3.data.array() == 0).all());

  // half-away-from-zero at the midpoint
  MatrixI32 mid(1, 2);
  mid << 254, 1;  // 1 * 127/254 = 0.5 -> 1
  const QTensor q4 = requantize8(mid);
  CHECK(q4.data(0, 1) == 1);
}

TEST_CASE("predict_attention composes the two stages") {
  Splitmix64 rng(23);

  SUBCASE("single token") {
    const QTensor x = random_qtensor(1, 8, rng);
    const QTensor wq = random_qtensor(8, 4, rng);
    const QTensor wk = random_qtensor(8, 4, rng);
    const Pam pam = predict_attention(x, wq, wk, 0);
    const QTensor qp = requantize8(oracle_matmul(x, wq));
    const QTensor kp = requantize8(oracle_matmul(x, wk));
    CHECK(pam.scores == oracle_matmul(qp, transposed(kp)));
    CHECK(pam.scores.rows() == 1);
  }

  SUBCASE("random block") {
    const QTensor x = random_qtensor(4, 8, rng);
    const QTensor wq = random_qtensor(8, 4, rng);
    const QTensor wk = random_qtensor(8, 4, rng);
    const Pam pam = predict_attention(x, wq, wk, 2);
    CHECK(pam.head == 2);
    const QTensor qp = requantize8(oracle_matmul(x, wq));
    const QTensor kp = requantize8(oracle_matmul(x, wk));
    CHECK(pam.scores == oracle_matmul(qp, transposed(kp)));
  }

  SUBCASE("zero input") {
    QTensor x;
    x.data = MatrixI8::Zero(3, 8);
    const QTensor wq = random_qtensor(8, 4, rng);
    const QTensor wk = random_qtensor(8, 4, rng);
    const Pam pam = predict_attention(x, wq, wk, 0);
    CHECK((pam.scores.array() == 0).all());
  }
}

TEST_CASE("topk_rows") {
  SUBCASE("keep everything at ratio 1") {
    Splitmix64 rng(24);
    const Spa spa = topk_rows(testsupport::random_pam(6, rng), Ratio(1, 1));
    CHECK(spa.keep.all());
  }

  SUBCASE("stated rows") {
    Pam pam;
    pam.scores.resize(4, 4);
    pam.scores << 5, 9, 9, 1,  //
        1, 1, 1, 1,            //
        0, -1, -2, -3,         //
        -5, 0, 5, 0;
    const Spa two = topk_rows(pam, Ratio(1, 2));
    CHECK(two.keep(0, 1));
    CHECK(two.keep(0, 2));
    CHECK_FALSE(two.keep(0, 0));
    CHECK_FALSE(two.keep(0, 3));

    const Spa one = topk_rows(pam, Ratio(1, 4));
    CHECK(one.keep(1, 0));  // equal values: smallest column wins
    CHECK(one.keep.row(1).count() == 1);
  }

  SUBCASE("row sums are constant and kept scores dominate") {
    Splitmix64 rng(25);
    for (int trial = 0; trial < 30; ++trial) {
      const Index rows = 1 + static_cast<Index>(rng.next_below(24));
      const Ratio k(1 + static_cast<std::int64_t>(rng.next_below(10)), 10);
      const Pam pam = testsupport::random_pam(rows, rng);
      const Spa spa = topk_rows(pam, k);
      const Index expect = std::min<Index>(rows, k.ceil_mul(rows));
      for (Index i = 0; i < rows; ++i) {
        CHECK(spa.keep.row(i).count() == expect);
        std::int32_t kept_min = INT32_MAX, unkept_max = INT32_MIN;
        for (Index j = 0; j < rows; ++j) {
          if (spa.keep(i, j)) kept_min = std::min(kept_min, pam.scores(i, j));
          else unkept_max = std::max(unkept_max, pam.scores(i, j));
        }
        if (expect < rows) CHECK(kept_min >= unkept_max);
      }
    }
  }

  CHECK_THROWS_AS(topk_rows(Pam{0, MatrixI32::Zero(2, 2)}, Ratio(0, 1)),
                  std::invalid_argument);
}
