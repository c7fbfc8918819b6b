// SPDX-License-Identifier: Apache-2.0
#include "esact/quant.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <stdexcept>

namespace esact::quant {

namespace {

void check_bitwidth(int n) {
  if (n < 2 || n > 8) throw std::invalid_argument("bitwidth must be in [2, 8]");
}

int magnitude_of(std::int8_t x) {
  return x < 0 ? -static_cast<int>(x) : static_cast<int>(x);
}

int floor_log2(std::int32_t v) {
  return std::bit_width(static_cast<std::uint32_t>(v)) - 1;
}

HLogCode code_for_level(std::int32_t level, bool negative) {
  HLogCode code;
  code.negative = negative;
  if ((level & (level - 1)) == 0) {
    code.exponent = floor_log2(level);
    code.form = Form::Single;
  } else {
    code.exponent = floor_log2(level);
    code.form = Form::Sum;
  }
  return code;
}

}  // namespace

std::int32_t HLogCode::decode() const {
  if (is_zero) return 0;
  std::int32_t mag = std::int32_t{1} << exponent;
  if (form == Form::Sum) mag += std::int32_t{1} << (exponent - 1);
  return negative ? -mag : mag;
}

std::uint8_t HLogCode::pack5() const {
  assert(!is_zero);
  return static_cast<std::uint8_t>((negative ? 1u << 4 : 0u) |
                                   (static_cast<unsigned>(exponent) << 1) |
                                   (form == Form::Sum ? 1u : 0u));
}

HLogCode HLogCode::unpack5(std::uint8_t word) {
  HLogCode code;
  code.negative = (word >> 4) & 1u;
  code.exponent = static_cast<int>((word >> 1) & 7u);
  code.form = (word & 1u) ? Form::Sum : Form::Single;
  return code;
}

std::int32_t ProductCode::decode() const {
  if (is_zero) return 0;
  std::int32_t mag = std::int32_t{1} << e1;
  if (e2) mag += std::int32_t{1} << *e2;
  return negative ? -mag : mag;
}

std::uint16_t ProductCode::pack9() const {
  assert(!is_zero);
  const unsigned low = e2 ? static_cast<unsigned>(*e2) : static_cast<unsigned>(e1);
  return static_cast<std::uint16_t>((negative ? 1u << 8 : 0u) |
                                    (static_cast<unsigned>(e1) << 4) | low);
}

ProductCode ProductCode::unpack9(std::uint16_t word) {
  ProductCode p;
  p.negative = (word >> 8) & 1u;
  p.e1 = static_cast<int>((word >> 4) & 0xfu);
  const int low = static_cast<int>(word & 0xfu);
  if (low != p.e1) p.e2 = low;
  return p;
}

std::int32_t ApotCode::decode() const {
  if (is_zero) return 0;
  std::int32_t mag = std::int32_t{1} << e1;
  if (e2) mag += std::int32_t{1} << *e2;
  return negative ? -mag : mag;
}

LevelTable hlog_levels(int bitwidth) {
  check_bitwidth(bitwidth);
  LevelTable table{Method::HLog, bitwidth, {}};
  for (int m = 0; m < bitwidth; ++m) table.levels.push_back(std::int32_t{1} << m);
  for (int m = 1; m <= bitwidth - 2; ++m) {
    table.levels.push_back((std::int32_t{1} << m) + (std::int32_t{1} << (m - 1)));
  }
  std::sort(table.levels.begin(), table.levels.end());
  return table;
}

LevelTable pot_levels(int bitwidth) {
  check_bitwidth(bitwidth);
  LevelTable table{Method::PoT, bitwidth, {}};
  for (int m = 0; m < bitwidth; ++m) table.levels.push_back(std::int32_t{1} << m);
  return table;
}

LevelTable apot_levels(int bitwidth) {
  check_bitwidth(bitwidth);
  LevelTable table{Method::APoT, bitwidth, {}};
  for (int i = 0; i < bitwidth; ++i) {
    table.levels.push_back(std::int32_t{1} << i);
    for (int j = 0; j < i; ++j) {
      table.levels.push_back((std::int32_t{1} << i) + (std::int32_t{1} << j));
    }
  }
  std::sort(table.levels.begin(), table.levels.end());
  return table;
}

LevelTable level_table(Method method, int bitwidth) {
  switch (method) {
    case Method::HLog: return hlog_levels(bitwidth);
    case Method::PoT: return pot_levels(bitwidth);
    case Method::APoT: return apot_levels(bitwidth);
  }
  throw std::invalid_argument("unknown quantization method");
}

std::int32_t project(std::int32_t magnitude, const LevelTable& table) {
  assert(magnitude > 0);
  const auto& lv = table.levels;
  auto it = std::lower_bound(lv.begin(), lv.end(), magnitude);
  if (it == lv.end()) return lv.back();
  if (it == lv.begin()) return lv.front();
  const std::int32_t above = *it;
  const std::int32_t below = *(it - 1);
  // equidistant projects to the larger level
  return (magnitude - below < above - magnitude) ? below : above;
}

HLogCode hlog_quantize(std::int8_t x) {
  if (x == 0) return HLogCode{.is_zero = true};
  static const LevelTable table = hlog_levels(8);
  const std::int32_t level = project(magnitude_of(x), table);
  return code_for_level(level, x < 0);
}

HLogCode pot_quantize(std::int8_t x) {
  if (x == 0) return HLogCode{.is_zero = true};
  static const LevelTable table = pot_levels(8);
  const std::int32_t level = project(magnitude_of(x), table);
  HLogCode code;
  code.negative = x < 0;
  code.exponent = floor_log2(level);
  code.form = Form::Single;
  return code;
}

ApotCode apot_quantize(std::int8_t x) {
  if (x == 0) return ApotCode{.is_zero = true};
  static const LevelTable table = apot_levels(8);
  const std::int32_t level = project(magnitude_of(x), table);
  ApotCode code;
  code.negative = x < 0;
  const std::int32_t high = std::int32_t{1} << floor_log2(level);
  code.e1 = floor_log2(high);
  const std::int32_t rest = level - high;
  if (rest != 0) code.e2 = floor_log2(rest);
  return code;
}

HLogCode shift_detect(std::int8_t x) {
  if (x == 0) return HLogCode{.is_zero = true};
  const int mag = magnitude_of(x);
  const int p = floor_log2(mag);
  const int b1 = p >= 1 ? (mag >> (p - 1)) & 1 : 0;
  const int b2 = p >= 2 ? (mag >> (p - 2)) & 1 : 0;
  HLogCode code;
  code.negative = x < 0;
  if (b1 == 0 && b2 == 0) {
    code.exponent = p;
    code.form = Form::Single;
  } else if (b1 == 1 && b2 == 1) {
    code.exponent = p + 1;
    code.form = Form::Single;
  } else {
    code.exponent = p;
    code.form = Form::Sum;
  }
  return code;
}

ProductCode sja_multiply(const HLogCode& a, const HLogCode& b) {
  if (a.is_zero || b.is_zero) return ProductCode{.is_zero = true};
  ProductCode out;
  out.negative = a.negative != b.negative;
  const int s = a.exponent + b.exponent;
  const bool sum_a = a.form == Form::Sum;
  const bool sum_b = b.form == Form::Sum;
  if (sum_a && sum_b) {
    out.e1 = s + 1;
    out.e2 = s - 2;
  } else if (sum_a || sum_b) {
    out.e1 = s;
    out.e2 = s - 1;
  } else {
    out.e1 = s;
  }
  return out;
}

void ConverterAccumulator::add(const ProductCode& p) {
  if (p.is_zero) return;
  auto& group = p.negative ? negative_ : positive_;
  assert(p.e1 >= 0 && p.e1 < 16);
  ++group[static_cast<std::size_t>(p.e1)];
  if (p.e2) {
    assert(*p.e2 >= 0 && *p.e2 < p.e1);
    ++group[static_cast<std::size_t>(*p.e2)];
  }
}

std::int64_t ConverterAccumulator::total() const {
  std::int64_t acc = 0;
  for (int e = 0; e < 16; ++e) {
    acc += (positive_[static_cast<std::size_t>(e)] - negative_[static_cast<std::size_t>(e)])
           << e;
  }
  return acc;
}

std::int32_t converter_accumulate(std::span<const ProductCode> products) {
  ConverterAccumulator acc;
  for (const ProductCode& p : products) acc.add(p);
  const std::int64_t total = acc.total();
  assert(total >= INT32_MIN && total <= INT32_MAX);
  return static_cast<std::int32_t>(total);
}

}  // namespace esact::quant
