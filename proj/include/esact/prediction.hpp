// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "esact/quant.hpp"
#include "esact/types.hpp"

namespace esact::prediction {

/// Predicted attention scores for one head, pre-softmax.
struct Pam {
  Index head{0};
  MatrixI32 scores;
};

/// Predicted attention after row-wise top-k masking. Every row keeps exactly
/// min(L, ceil(k_ratio * L)) positions; kept scores dominate unkept ones.
struct Spa {
  Pam pam;
  MaskMatrix keep;
  Ratio k_ratio{1, 1};

  Index rows() const { return keep.rows(); }
  Index kept_per_row() const { return k_ratio.ceil_mul(keep.cols()); }
};

/// Integer matmul through the shift-add datapath: each operand scalar is
/// HLog-quantized, entries multiply through sja_multiply, and each output
/// cell is the exact sign-grouped accumulation of its product column.
MatrixI32 predict_matmul(const QTensor& a, const QTensor& b);

/// Symmetric per-tensor 8-bit requantization: scale = max|m| / 127 (1 when
/// all-zero), values rounded half away from zero and clamped to [-127, 127].
QTensor requantize8(const MatrixI32& m);

/// Quantized Q/K prediction followed by score prediction for one head.
Pam predict_attention(const QTensor& x, const QTensor& wq, const QTensor& wk,
                      Index head = 0);

/// Row-wise top-k mask; ties break toward the smaller column index.
Spa topk_rows(const Pam& pam, Ratio k_ratio);

}  // namespace esact::prediction
