// SPDX-License-Identifier: Apache-2.0
#include "esact/types.hpp"

#include <numeric>
#include <stdexcept>

namespace esact {

namespace {

using Wide = __int128;

}  // namespace

Ratio::Ratio(std::int64_t n, std::int64_t d) : num(n), den(d) {
  if (den == 0) throw std::invalid_argument("Ratio: zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  if (num == 0) {
    den = 1;
    return;
  }
  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  num /= g;
  den /= g;
}

Ratio Ratio::parse(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("Ratio: empty literal");
  std::int64_t whole = 0;
  std::int64_t frac = 0;
  std::int64_t scale = 1;
  std::size_t pos = 0;
  bool any_digit = false;
  for (; pos < text.size() && text[pos] != '.'; ++pos) {
    const char c = text[pos];
    if (c < '0' || c > '9') throw std::invalid_argument("Ratio: bad literal '" + text + "'");
    whole = whole * 10 + (c - '0');
    any_digit = true;
    if (whole > (std::int64_t{1} << 56)) throw std::invalid_argument("Ratio: literal too large");
  }
  if (pos < text.size()) {
    ++pos;  // skip '.'
    for (; pos < text.size(); ++pos) {
      const char c = text[pos];
      if (c < '0' || c > '9') throw std::invalid_argument("Ratio: bad literal '" + text + "'");
      frac = frac * 10 + (c - '0');
      scale *= 10;
      any_digit = true;
      if (scale > 1000000000000000LL) throw std::invalid_argument("Ratio: too many digits");
    }
  }
  if (!any_digit) throw std::invalid_argument("Ratio: bad literal '" + text + "'");
  return Ratio(whole * scale + frac, scale);
}

Index Ratio::ceil_mul(Index count) const {
  const Wide n = static_cast<Wide>(num) * count + den - 1;
  return static_cast<Index>(n / den);
}

bool operator<(const Ratio& a, const Ratio& b) {
  return static_cast<Wide>(a.num) * b.den < static_cast<Wide>(b.num) * a.den;
}

bool operator<=(const Ratio& a, const Ratio& b) {
  return static_cast<Wide>(a.num) * b.den <= static_cast<Wide>(b.num) * a.den;
}

QTensor transposed(const QTensor& t) {
  QTensor out;
  out.data = t.data.transpose();
  out.scale = t.scale;
  return out;
}

}  // namespace esact
