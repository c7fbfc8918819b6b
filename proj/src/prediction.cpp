// SPDX-License-Identifier: Apache-2.0
#include "esact/prediction.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace esact::prediction {

using quant::HLogCode;
using quant::hlog_quantize;
using quant::sja_multiply;

MatrixI32 predict_matmul(const QTensor& a, const QTensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("predict_matmul: inner dimensions disagree");
  }
  const Index rows = a.rows();
  const Index inner = a.cols();
  const Index cols = b.cols();

  std::vector<HLogCode> ca(static_cast<std::size_t>(rows * inner));
  std::vector<HLogCode> cb(static_cast<std::size_t>(inner * cols));
  for (Index i = 0; i < rows; ++i)
    for (Index t = 0; t < inner; ++t)
      ca[static_cast<std::size_t>(i * inner + t)] = hlog_quantize(a.data(i, t));
  for (Index t = 0; t < inner; ++t)
    for (Index j = 0; j < cols; ++j)
      cb[static_cast<std::size_t>(t * cols + j)] = hlog_quantize(b.data(t, j));

  MatrixI32 out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      quant::ConverterAccumulator acc;
      for (Index t = 0; t < inner; ++t) {
        acc.add(sja_multiply(ca[static_cast<std::size_t>(i * inner + t)],
                             cb[static_cast<std::size_t>(t * cols + j)]));
      }
      out(i, j) = static_cast<std::int32_t>(acc.total());
    }
  }
  return out;
}

QTensor requantize8(const MatrixI32& m) {
  if (m.size() == 0) throw std::invalid_argument("requantize8: empty matrix");
  std::int64_t max_abs = 0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      max_abs = std::max<std::int64_t>(max_abs, std::abs(static_cast<std::int64_t>(m(i, j))));

  QTensor out;
  out.data.resize(m.rows(), m.cols());
  if (max_abs == 0) {
    out.data.setZero();
    out.scale = 1.0;
    return out;
  }
  // round-half-away-from-zero(v * 127 / max_abs), in exact integer arithmetic
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const std::int64_t v = m(i, j);
      const std::int64_t mag = std::abs(v);
      std::int64_t q = (2 * mag * 127 + max_abs) / (2 * max_abs);
      q = std::min<std::int64_t>(q, 127);
      out.data(i, j) = static_cast<std::int8_t>(v < 0 ? -q : q);
    }
  }
  out.scale = static_cast<double>(max_abs) / 127.0;
  return out;
}

Pam predict_attention(const QTensor& x, const QTensor& wq, const QTensor& wk,
                      Index head) {
  if (x.cols() != wq.rows() || x.cols() != wk.rows() || wq.cols() != wk.cols()) {
    throw std::invalid_argument("predict_attention: shapes disagree");
  }
  const QTensor qp = requantize8(predict_matmul(x, wq));
  const QTensor kp = requantize8(predict_matmul(x, wk));
  Pam pam;
  pam.head = head;
  pam.scores = predict_matmul(qp, transposed(kp));
  return pam;
}

Spa topk_rows(const Pam& pam, Ratio k_ratio) {
  if (!(Ratio(0, 1) < k_ratio) || !(k_ratio <= Ratio(1, 1))) {
    throw std::invalid_argument("topk_rows: k ratio must be in (0, 1]");
  }
  const Index side = pam.scores.rows();
  if (pam.scores.cols() != side) throw std::invalid_argument("topk_rows: scores not square");

  Spa spa;
  spa.pam = pam;
  spa.k_ratio = k_ratio;
  spa.keep = MaskMatrix::Constant(side, side, false);

  const Index kept = std::min<Index>(side, k_ratio.ceil_mul(side));
  std::vector<Index> order(static_cast<std::size_t>(side));
  for (Index i = 0; i < side; ++i) {
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
      const std::int32_t sa = pam.scores(i, a);
      const std::int32_t sb = pam.scores(i, b);
      if (sa != sb) return sa > sb;
      return a < b;
    });
    for (Index r = 0; r < kept; ++r) spa.keep(i, order[static_cast<std::size_t>(r)]) = true;
  }
  return spa;
}

}  // namespace esact::prediction
