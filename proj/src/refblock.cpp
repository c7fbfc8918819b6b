// SPDX-License-Identifier: Apache-2.0
#include "esact/refblock.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace esact::refblock {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kMaskedScore = std::numeric_limits<double>::lowest();

double gelu(double v) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * v * (1.0 + std::tanh(kSqrt2OverPi * (v + 0.044715 * v * v * v)));
}

void softmax_row(std::span<double> row) {
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : row) v /= sum;
}

void layer_norm_row(std::span<const double> in, const VectorF64& gain,
                    const VectorF64& bias, std::span<double> out) {
  const std::size_t n = in.size();
  double mean = 0.0;
  for (std::size_t t = 0; t < n; ++t) mean += in[t];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double d = in[t] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t t = 0; t < n; ++t) {
    out[t] = gain(static_cast<Index>(t)) * (in[t] - mean) * inv + bias(static_cast<Index>(t));
  }
}

void check_shapes(const QTensor& x, const BlockWeights& w, const sparsity::SplsConfig& cfg) {
  cfg.validate();
  const Index L = cfg.seq_len, D = cfg.embed_dim, F = cfg.ffn_dim;
  if (x.rows() != L || x.cols() != D) throw std::invalid_argument("input shape disagrees");
  for (const QTensor* t : {&w.wq, &w.wk, &w.wv, &w.wo}) {
    if (t->rows() != D || t->cols() != D) throw std::invalid_argument("projection shape disagrees");
  }
  if (w.w1.rows() != D || w.w1.cols() != F) throw std::invalid_argument("w1 shape disagrees");
  if (w.w2.rows() != F || w.w2.cols() != D) throw std::invalid_argument("w2 shape disagrees");
  for (const VectorF64* v : {&w.ln1_gain, &w.ln1_bias, &w.ln2_gain, &w.ln2_bias}) {
    if (v->size() != D) throw std::invalid_argument("layer-norm parameter length disagrees");
  }
}

// Integer projection of selected input rows onto one head's weight slice.
void project_rows(const MatrixI8& x, const MatrixI8& w, Index col_base, Index head_dim,
                  std::span<const Index> rows, MatrixI64& out) {
  const Index inner = x.cols();
  for (const Index i : rows) {
    for (Index c = 0; c < head_dim; ++c) {
      std::int64_t acc = 0;
      for (Index t = 0; t < inner; ++t) {
        acc += static_cast<std::int64_t>(x(i, t)) * static_cast<std::int64_t>(w(t, col_base + c));
      }
      out(i, c) = acc;
    }
  }
}

std::vector<Index> all_rows(Index n) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
  return rows;
}

// Residual + layer norm over every row.
MatrixF64 add_norm(const MatrixF64& residual, const MatrixF64& delta, const VectorF64& gain,
                   const VectorF64& bias) {
  const Index rows = residual.rows(), cols = residual.cols();
  MatrixF64 out(rows, cols);
  std::vector<double> buf(static_cast<std::size_t>(cols));
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) buf[static_cast<std::size_t>(j)] = residual(i, j) + delta(i, j);
    layer_norm_row(buf, gain, bias, std::span<double>(out.row(i).data(), static_cast<std::size_t>(cols)));
  }
  return out;
}

}  // namespace

BlockWeights BlockWeights::synthetic(const sparsity::SplsConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Splitmix64 rng(seed);
  auto fill = [&rng](Index rows, Index cols, double scale) {
    QTensor t;
    t.data.resize(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j)
        t.data(i, j) = static_cast<std::int8_t>(rng.next_range(-127, 127));
    t.scale = scale;
    return t;
  };
  const Index D = cfg.embed_dim, F = cfg.ffn_dim;
  BlockWeights w;
  w.wq = fill(D, D, 0.02);
  w.wk = fill(D, D, 0.02);
  w.wv = fill(D, D, 0.02);
  w.wo = fill(D, D, 0.02);
  w.w1 = fill(D, F, 0.02);
  w.w2 = fill(F, D, 0.02);
  w.ln1_gain = VectorF64::Ones(D);
  w.ln1_bias = VectorF64::Zero(D);
  w.ln2_gain = VectorF64::Ones(D);
  w.ln2_bias = VectorF64::Zero(D);
  return w;
}

QTensor synthetic_input(const sparsity::SplsConfig& cfg, std::uint64_t seed, Index cluster,
                        int noise) {
  cfg.validate();
  if (cluster < 1) throw std::invalid_argument("cluster must be >= 1");
  if (noise < 0) throw std::invalid_argument("noise must be >= 0");
  Splitmix64 rng(seed ^ 0xb10cULL);
  const Index L = cfg.seq_len, D = cfg.embed_dim;
  QTensor x;
  x.data.resize(L, D);
  x.scale = 0.05;
  std::vector<std::int64_t> base(static_cast<std::size_t>(D));
  for (Index i = 0; i < L; ++i) {
    if (i % cluster == 0) {
      for (Index j = 0; j < D; ++j) base[static_cast<std::size_t>(j)] = rng.next_range(-100, 100);
    }
    for (Index j = 0; j < D; ++j) {
      std::int64_t v = base[static_cast<std::size_t>(j)];
      if (noise > 0) v += rng.next_range(-noise, noise);
      v = std::clamp<std::int64_t>(v, -127, 127);
      x.data(i, j) = static_cast<std::int8_t>(v);
    }
  }
  return x;
}

ForwardResult dense_forward(const QTensor& x, const BlockWeights& w,
                            const sparsity::SplsConfig& cfg) {
  check_shapes(x, w, cfg);
  const Index L = cfg.seq_len, D = cfg.embed_dim, H = cfg.heads, Dh = cfg.head_dim(),
              F = cfg.ffn_dim;
  MacCount macs;
  const MatrixF64 x_real = x.dequantize();
  const std::vector<Index> rows = all_rows(L);

  const double score_scale =
      (x.scale * w.wq.scale) * (x.scale * w.wk.scale) / std::sqrt(static_cast<double>(Dh));
  const double v_scale = x.scale * w.wv.scale;

  MatrixF64 concat(L, D);
  MatrixI64 qi(L, Dh), ki(L, Dh), vi(L, Dh);
  std::vector<double> score_row(static_cast<std::size_t>(L));
  for (Index h = 0; h < H; ++h) {
    const Index base = h * Dh;
    project_rows(x.data, w.wq.data, base, Dh, rows, qi);
    project_rows(x.data, w.wk.data, base, Dh, rows, ki);
    project_rows(x.data, w.wv.data, base, Dh, rows, vi);
    macs.qkv += 3 * L * D * Dh;

    const MatrixF64 v_real = vi.cast<double>() * v_scale;
    for (Index i = 0; i < L; ++i) {
      for (Index j = 0; j < L; ++j) {
        std::int64_t dot = 0;
        for (Index c = 0; c < Dh; ++c) dot += qi(i, c) * ki(j, c);
        score_row[static_cast<std::size_t>(j)] = static_cast<double>(dot) * score_scale;
      }
      macs.attention += L * Dh;
      softmax_row(score_row);
      for (Index c = 0; c < Dh; ++c) {
        double acc = 0.0;
        for (Index j = 0; j < L; ++j) acc += score_row[static_cast<std::size_t>(j)] * v_real(j, c);
        concat(i, base + c) = acc;
      }
      macs.attention += L * Dh;
    }
  }

  // Output projection; per-head partial sums accumulate in head order.
  const MatrixF64 wo_real = w.wo.dequantize();
  MatrixF64 mha(L, D);
  for (Index i = 0; i < L; ++i) {
    for (Index j = 0; j < D; ++j) {
      double acc = 0.0;
      for (Index h = 0; h < H; ++h) {
        double psum = 0.0;
        for (Index t = h * Dh; t < (h + 1) * Dh; ++t) psum += concat(i, t) * wo_real(t, j);
        acc += psum;
      }
      mha(i, j) = acc;
    }
  }
  macs.qkv += L * D * D;

  const MatrixF64 ffn_in = add_norm(x_real, mha, w.ln1_gain, w.ln1_bias);

  const MatrixF64 w1_real = w.w1.dequantize();
  const MatrixF64 w2_real = w.w2.dequantize();
  MatrixF64 mid(L, F);
  for (Index i = 0; i < L; ++i) {
    for (Index c = 0; c < F; ++c) {
      double acc = 0.0;
      for (Index t = 0; t < D; ++t) acc += ffn_in(i, t) * w1_real(t, c);
      mid(i, c) = gelu(acc);
    }
  }
  macs.ffn += L * D * F;
  MatrixF64 ffn_out(L, D);
  for (Index i = 0; i < L; ++i) {
    for (Index c = 0; c < D; ++c) {
      double acc = 0.0;
      for (Index t = 0; t < F; ++t) acc += mid(i, t) * w2_real(t, c);
      ffn_out(i, c) = acc;
    }
  }
  macs.ffn += L * F * D;

  ForwardResult result;
  result.output = add_norm(ffn_in, ffn_out, w.ln2_gain, w.ln2_bias);
  result.macs = macs;
  return result;
}

SparseResult sparse_forward(const QTensor& x, const BlockWeights& w,
                            const sparsity::SparsityPlan& plan,
                            const sparsity::SplsConfig& cfg) {
  const ForwardResult dense = dense_forward(x, w, cfg);
  return sparse_forward_with_reference(x, w, plan, cfg, dense.output);
}

SparseResult sparse_forward_with_reference(const QTensor& x, const BlockWeights& w,
                                           const sparsity::SparsityPlan& plan,
                                           const sparsity::SplsConfig& cfg,
                                           const MatrixF64& dense_output) {
  check_shapes(x, w, cfg);
  const Index L = cfg.seq_len, D = cfg.embed_dim, H = cfg.heads, Dh = cfg.head_dim(),
              F = cfg.ffn_dim;
  if (static_cast<Index>(plan.heads.size()) != H || plan.seq_len() != L ||
      static_cast<Index>(plan.ffn_rep.size()) != L) {
    throw std::invalid_argument("sparse_forward: plan shape disagrees with configuration");
  }

  MacCount macs;
  const MatrixF64 x_real = x.dequantize();
  const double score_scale =
      (x.scale * w.wq.scale) * (x.scale * w.wk.scale) / std::sqrt(static_cast<double>(Dh));
  const double v_scale = x.scale * w.wv.scale;

  MatrixF64 concat = MatrixF64::Zero(L, D);
  MatrixI64 qi(L, Dh), ki(L, Dh), vi(L, Dh);
  MatrixF64 v_real(L, Dh);
  std::vector<double> score_row(static_cast<std::size_t>(L));
  for (Index h = 0; h < H; ++h) {
    const sparsity::HeadPlan& hp = plan.heads[static_cast<std::size_t>(h)];
    const Index base = h * Dh;
    project_rows(x.data, w.wq.data, base, Dh, hp.q_rows, qi);
    project_rows(x.data, w.wk.data, base, Dh, hp.kv_rows, ki);
    project_rows(x.data, w.wv.data, base, Dh, hp.kv_rows, vi);
    macs.qkv += static_cast<std::int64_t>(hp.q_rows.size() + 2 * hp.kv_rows.size()) * D * Dh;

    for (const Index j : hp.kv_rows) {
      for (Index c = 0; c < Dh; ++c) v_real(j, c) = static_cast<double>(vi(j, c)) * v_scale;
    }

    for (const Index i : hp.q_rows) {
      for (Index j = 0; j < L; ++j) score_row[static_cast<std::size_t>(j)] = kMaskedScore;
      Index kept = 0;
      for (Index j = 0; j < L; ++j) {
        if (!hp.keep(i, j)) continue;
        std::int64_t dot = 0;
        for (Index c = 0; c < Dh; ++c) dot += qi(i, c) * ki(j, c);
        score_row[static_cast<std::size_t>(j)] = static_cast<double>(dot) * score_scale;
        ++kept;
      }
      macs.attention += kept * Dh;
      softmax_row(score_row);
      for (Index c = 0; c < Dh; ++c) {
        double acc = 0.0;
        for (Index j = 0; j < L; ++j) {
          if (hp.keep(i, j)) acc += score_row[static_cast<std::size_t>(j)] * v_real(j, c);
        }
        concat(i, base + c) = acc;
      }
      macs.attention += kept * Dh;
    }
    // similar rows mirror their critical row's attention output
    for (Index i = 0; i < L; ++i) {
      const Index rep = hp.sim.rep[static_cast<std::size_t>(i)];
      if (rep != i) concat.block(i, base, 1, Dh) = concat.block(rep, base, 1, Dh);
    }
  }

  // Output projection: one partial sum per head, computed for critical rows
  // and recovered by copy for similar rows, then summed in head order.
  const MatrixF64 wo_real = w.wo.dequantize();
  std::vector<MatrixF64> psums(static_cast<std::size_t>(H));
  for (Index h = 0; h < H; ++h) {
    const sparsity::HeadPlan& hp = plan.heads[static_cast<std::size_t>(h)];
    MatrixF64& ps = psums[static_cast<std::size_t>(h)];
    ps.resize(L, D);
    for (const Index i : hp.q_rows) {
      for (Index j = 0; j < D; ++j) {
        double acc = 0.0;
        for (Index t = h * Dh; t < (h + 1) * Dh; ++t) acc += concat(i, t) * wo_real(t, j);
        ps(i, j) = acc;
      }
    }
    macs.qkv += static_cast<std::int64_t>(hp.q_rows.size()) * Dh * D;
  }
  MatrixF64 mha(L, D);
  for (Index i = 0; i < L; ++i) {
    for (Index j = 0; j < D; ++j) {
      double acc = 0.0;
      for (Index h = 0; h < H; ++h) {
        const Index rep = plan.heads[static_cast<std::size_t>(h)].sim.rep[static_cast<std::size_t>(i)];
        acc += psums[static_cast<std::size_t>(h)](rep, j);
      }
      mha(i, j) = acc;
    }
  }

  const MatrixF64 ffn_in = add_norm(x_real, mha, w.ln1_gain, w.ln1_bias);

  const MatrixF64 w1_real = w.w1.dequantize();
  const MatrixF64 w2_real = w.w2.dequantize();
  MatrixF64 mid = MatrixF64::Zero(L, F);
  MatrixF64 ffn_out = MatrixF64::Zero(L, D);
  for (const Index i : plan.ffn_keep) {
    for (Index c = 0; c < F; ++c) {
      double acc = 0.0;
      for (Index t = 0; t < D; ++t) acc += ffn_in(i, t) * w1_real(t, c);
      mid(i, c) = gelu(acc);
    }
    for (Index c = 0; c < D; ++c) {
      double acc = 0.0;
      for (Index t = 0; t < F; ++t) acc += mid(i, t) * w2_real(t, c);
      ffn_out(i, c) = acc;
    }
  }
  macs.ffn += static_cast<std::int64_t>(plan.ffn_keep.size()) * (D * F + F * D);
  for (Index t = 0; t < L; ++t) {
    const Index rep = plan.ffn_rep[static_cast<std::size_t>(t)];
    if (rep != t) ffn_out.row(t) = ffn_out.row(rep);
  }

  SparseResult result;
  result.output = add_norm(ffn_in, ffn_out, w.ln2_gain, w.ln2_bias);
  result.macs = macs;
  result.fidelity = measure_fidelity(dense_output, result.output);
  result.attention_concat = std::move(concat);
  return result;
}

MacCount dense_mac_formula(const sparsity::SplsConfig& cfg) {
  const std::int64_t L = cfg.seq_len, D = cfg.embed_dim, F = cfg.ffn_dim;
  MacCount macs;
  macs.qkv = 4 * L * D * D;
  macs.attention = 2 * L * L * D;
  macs.ffn = 2 * L * D * F;
  return macs;
}

MacCount sparse_mac_formula(const sparsity::SparsityPlan& plan,
                            const sparsity::SplsConfig& cfg) {
  const std::int64_t D = cfg.embed_dim, Dh = cfg.head_dim(), F = cfg.ffn_dim;
  MacCount macs;
  for (const sparsity::HeadPlan& hp : plan.heads) {
    const std::int64_t nq = static_cast<std::int64_t>(hp.q_rows.size());
    const std::int64_t nkv = static_cast<std::int64_t>(hp.kv_rows.size());
    macs.qkv += (2 * nq + 2 * nkv) * D * Dh;
    std::int64_t kept = 0;
    for (const Index i : hp.q_rows) kept += hp.keep.row(i).count();
    macs.attention += 2 * kept * Dh;
  }
  macs.ffn = 2 * static_cast<std::int64_t>(plan.ffn_keep.size()) * D * F;
  return macs;
}

ReductionReport reduction_report(const MacCount& dense, const MacCount& sparse) {
  if (dense.qkv <= 0 || dense.attention <= 0 || dense.ffn <= 0) {
    throw std::invalid_argument("reduction_report: dense counts must be positive");
  }
  ReductionReport r;
  r.qkv = 1.0 - static_cast<double>(sparse.qkv) / static_cast<double>(dense.qkv);
  r.attention = 1.0 - static_cast<double>(sparse.attention) / static_cast<double>(dense.attention);
  r.ffn = 1.0 - static_cast<double>(sparse.ffn) / static_cast<double>(dense.ffn);
  r.total = 1.0 - static_cast<double>(sparse.total()) / static_cast<double>(dense.total());
  return r;
}

FidelityReport measure_fidelity(const MatrixF64& reference, const MatrixF64& candidate) {
  if (reference.rows() != candidate.rows() || reference.cols() != candidate.cols()) {
    throw std::invalid_argument("measure_fidelity: shapes disagree");
  }
  FidelityReport rep;
  double sum_abs = 0.0, dot = 0.0, na = 0.0, nb = 0.0;
  for (Index i = 0; i < reference.rows(); ++i) {
    for (Index j = 0; j < reference.cols(); ++j) {
      const double a = reference(i, j), b = candidate(i, j);
      const double d = std::abs(a - b);
      rep.max_abs_diff = std::max(rep.max_abs_diff, d);
      sum_abs += d;
      dot += a * b;
      na += a * a;
      nb += b * b;
    }
  }
  const double n = static_cast<double>(reference.size());
  rep.mean_abs_diff = n > 0 ? sum_abs / n : 0.0;
  if (na == 0.0 || nb == 0.0) {
    rep.cosine = rep.max_abs_diff == 0.0 ? 1.0 : 0.0;
  } else {
    rep.cosine = dot / (std::sqrt(na) * std::sqrt(nb));
  }
  return rep;
}

}  // namespace esact::refblock
