// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>

namespace esact {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixI8 = Matrix<std::int8_t>;
using MatrixI32 = Matrix<std::int32_t>;
using MatrixI64 = Matrix<std::int64_t>;
using MatrixF64 = Matrix<double>;
using VectorF64 = Vector<double>;
using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Exact nonnegative rational. Ratio-valued hyperparameters (top-k ratio,
/// similarity threshold) stay exact so derived counts and threshold
/// comparisons never depend on floating-point rounding.
struct Ratio {
  std::int64_t num{0};
  std::int64_t den{1};

  Ratio() = default;
  Ratio(std::int64_t n, std::int64_t d);

  /// Parses a plain decimal literal such as "0.12", "1" or ".5".
  static Ratio parse(const std::string& text);

  /// Smallest integer >= value * count, for count >= 0.
  Index ceil_mul(Index count) const;

  double to_double() const {
    return static_cast<double>(num) / static_cast<double>(den);
  }

  friend bool operator==(const Ratio& a, const Ratio& b) = default;
};

bool operator<(const Ratio& a, const Ratio& b);
bool operator<=(const Ratio& a, const Ratio& b);

/// Per-tensor symmetric int8 quantization: real value = scale * data.
struct QTensor {
  MatrixI8 data;
  double scale{1.0};

  Index rows() const { return data.rows(); }
  Index cols() const { return data.cols(); }

  MatrixF64 dequantize() const { return data.cast<double>() * scale; }
};

QTensor transposed(const QTensor& t);

/// Small deterministic PRNG; identical streams on every platform.
struct Splitmix64 {
  std::uint64_t state{0};

  explicit Splitmix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, bound), bound > 0.
  std::uint64_t next_below(std::uint64_t bound) { return next() % bound; }

  /// Uniform integer in [lo, hi].
  std::int64_t next_range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
  }
};

}  // namespace esact
