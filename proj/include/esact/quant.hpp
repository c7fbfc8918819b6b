// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "esact/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace esact::quant {

enum class Form : std::uint8_t { Single, Sum };

/// One quantized scalar: sign * 2^exponent, or sign * (2^exponent + 2^(exponent-1))
/// when form is Sum. Zero inputs carry a dedicated flag instead of a level.
struct HLogCode {
  bool negative{false};
  int exponent{0};
  Form form{Form::Single};
  bool is_zero{false};

  std::int32_t decode() const;

  /// 5-bit wire word [sign | exponent(3) | form]. Zero codes have no wire form.
  std::uint8_t pack5() const;
  static HLogCode unpack5(std::uint8_t word);

  friend bool operator==(const HLogCode&, const HLogCode&) = default;
};

/// Product of two HLog codes: sign * (2^e1 [+ 2^e2]), e1 > e2 when e2 is present.
struct ProductCode {
  bool negative{false};
  int e1{0};
  std::optional<int> e2{};
  bool is_zero{false};

  std::int32_t decode() const;

  /// 9-bit wire word [sign | e1(4) | e2(4)]; an e2 field equal to e1 encodes absence.
  std::uint16_t pack9() const;
  static ProductCode unpack9(std::uint16_t word);

  friend bool operator==(const ProductCode&, const ProductCode&) = default;
};

/// Additive power-of-two code: sign * (2^e1 [+ 2^e2]).
struct ApotCode {
  bool negative{false};
  int e1{0};
  std::optional<int> e2{};
  bool is_zero{false};

  std::int32_t decode() const;

  friend bool operator==(const ApotCode&, const ApotCode&) = default;
};

enum class Method { HLog, PoT, APoT };

struct LevelTable {
  Method method{Method::HLog};
  int bitwidth{8};
  std::vector<std::int32_t> levels;  // ascending, positive
};

/// Powers of two plus the midpoints between adjacent powers:
/// {1, 2, 3, 4, 6, ..., 2^(n-2), 3*2^(n-3), 2^(n-1)}. Valid for 2 <= n <= 8.
LevelTable hlog_levels(int bitwidth);
LevelTable pot_levels(int bitwidth);
/// All single powers 2^i plus all two-term sums 2^i + 2^j (i > j), i < n.
LevelTable apot_levels(int bitwidth);
LevelTable level_table(Method method, int bitwidth);

/// Nearest level to |magnitude|, ties resolved toward the larger level.
std::int32_t project(std::int32_t magnitude, const LevelTable& table);

HLogCode hlog_quantize(std::int8_t x);
HLogCode pot_quantize(std::int8_t x);
ApotCode apot_quantize(std::int8_t x);

/// Bit-level realization of hlog_quantize: take the leading one of |x| at
/// position p and classify the next two bits b1 b2:
///   00 -> (p, Single)   01 -> (p, Sum)   10 -> (p, Sum)   11 -> (p+1, Single).
/// Equivalent to nearest-level-tie-high projection on the full int8 domain.
HLogCode shift_detect(std::int8_t x);

/// Addition-only product of two codes. Both operands decompose into at most
/// two powers of two, so the product is one of three exponent patterns:
///   Single*Single -> e1 = ma+mb            Single*Sum -> e1 = ma+mb, e2 = e1-1
///   Sum*Sum       -> e1 = ma+mb+1, e2 = ma+mb-2
ProductCode sja_multiply(const HLogCode& a, const HLogCode& b);

/// Sign-grouped exponent histogram; exact integer total of many products.
class ConverterAccumulator {
 public:
  void add(const ProductCode& p);
  std::int64_t total() const;

 private:
  std::array<std::int64_t, 16> positive_{};
  std::array<std::int64_t, 16> negative_{};
};

/// Exact signed sum of decoded products via sign-grouped histogramming.
std::int32_t converter_accumulate(std::span<const ProductCode> products);

}  // namespace esact::quant
