// SPDX-License-Identifier: Apache-2.0
#include "esact/quant.hpp"

#include <doctest.h>

#include <cstdlib>
#include <vector>

using namespace esact;
using namespace esact::quant;

namespace {

// Independent oracle: linear scan for the nearest level, ties to the larger.
std::int32_t nearest_tie_high(std::int32_t mag, const std::vector<std::int32_t>& levels) {
  std::int32_t best = levels.front();
  std::int64_t best_d = std::abs(static_cast<std::int64_t>(levels.front()) - mag);
  for (const std::int32_t level : levels) {
    const std::int64_t d = std::abs(static_cast<std::int64_t>(level) - mag);
    if (d < best_d || (d == best_d && level > best)) {
      best = level;
      best_d = d;
    }
  }
  return best;
}

std::vector<HLogCode> all_valid_codes() {
  std::vector<HLogCode> codes;
  codes.push_back(HLogCode{.is_zero = true});
  for (const bool neg : {false, true}) {
    for (int m = 0; m <= 7; ++m) codes.push_back({neg, m, Form::Single, false});
    for (int m = 1; m <= 6; ++m) codes.push_back({neg, m, Form::Sum, false});
  }
  return codes;
}

ProductCode random_product(Splitmix64& rng) {
  ProductCode p;
  if (rng.next_below(16) == 0) {
    p.is_zero = true;
    return p;
  }
  p.negative = rng.next_below(2) == 1;
  p.e1 = static_cast<int>(rng.next_below(15));
  if (p.e1 > 0 && rng.next_below(2) == 1) p.e2 = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(p.e1)));
  return p;
}

}  // namespace

TEST_CASE("hlog level tables") {
  CHECK(hlog_levels(8).levels ==
        std::vector<std::int32_t>{1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128});
  CHECK(hlog_levels(2).levels == std::vector<std::int32_t>{1, 2});
  CHECK(hlog_levels(4).levels == std::vector<std::int32_t>{1, 2, 3, 4, 6, 8});
  CHECK(pot_levels(8).levels == std::vector<std::int32_t>{1, 2, 4, 8, 16, 32, 64, 128});
  CHECK(apot_levels(8).levels.size() == 36);  // 8 singles + 28 pairs
  CHECK_THROWS_AS(hlog_levels(1), std::invalid_argument);
  CHECK_THROWS_AS(hlog_levels(9), std::invalid_argument);
}

TEST_CASE("worked example: 42 and -18 through the datapath") {
  const HLogCode a = hlog_quantize(42);
  CHECK(a.exponent == 5);
  CHECK(a.form == Form::Sum);
  CHECK_FALSE(a.negative);
  CHECK(a.decode() == 48);
  CHECK(a.pack5() == 0b01011);

  const HLogCode b = hlog_quantize(-18);
  CHECK(b.exponent == 4);
  CHECK(b.form == Form::Single);
  CHECK(b.negative);
  CHECK(b.decode() == -16);
  CHECK(b.pack5() == 0b11000);

  const ProductCode p = sja_multiply(a, b);
  CHECK(p.negative);
  CHECK(p.e1 == 9);
  REQUIRE(p.e2.has_value());
  CHECK(*p.e2 == 8);
  CHECK(p.decode() == -768);
}

TEST_CASE("zero and tie handling") {
  CHECK(hlog_quantize(0).is_zero);
  CHECK(pot_quantize(0).is_zero);
  CHECK(apot_quantize(0).is_zero);

  // 5 is equidistant from 4 and 6; the larger level wins
  const HLogCode five = hlog_quantize(5);
  CHECK(five.decode() == 6);
  CHECK(five.exponent == 2);
  CHECK(five.form == Form::Sum);

  CHECK(pot_quantize(42).decode() == 32);
  CHECK(pot_quantize(96).decode() == 128);  // equidistant from 64 and 128
  CHECK(pot_quantize(1).decode() == 1);

  const ApotCode a42 = apot_quantize(42);
  CHECK(a42.decode() == 40);
  CHECK(a42.e1 == 5);
  REQUIRE(a42.e2.has_value());
  CHECK(*a42.e2 == 3);
  CHECK(apot_quantize(3).decode() == 3);
  const ApotCode a100 = apot_quantize(100);
  CHECK(a100.decode() == 96);
  CHECK(a100.e1 == 6);
  REQUIRE(a100.e2.has_value());
  CHECK(*a100.e2 == 5);
}

TEST_CASE("exhaustive projection matches the brute-force oracle") {
  const LevelTable hl = hlog_levels(8);
  const LevelTable pl = pot_levels(8);
  const LevelTable al = apot_levels(8);
  for (int x = -128; x <= 127; ++x) {
    const auto v = static_cast<std::int8_t>(x);
    const std::int32_t mag = std::abs(x);
    if (x == 0) continue;
    const std::int32_t sign = x < 0 ? -1 : 1;
    CHECK(hlog_quantize(v).decode() == sign * nearest_tie_high(mag, hl.levels));
    CHECK(pot_quantize(v).decode() == sign * nearest_tie_high(mag, pl.levels));
    CHECK(apot_quantize(v).decode() == sign * nearest_tie_high(mag, al.levels));
  }
}

TEST_CASE("shift detector reproduces the quantizer on the full domain") {
  for (int x = -128; x <= 127; ++x) {
    const auto v = static_cast<std::int8_t>(x);
    CHECK(shift_detect(v) == hlog_quantize(v));
  }
  CHECK(shift_detect(-18).pack5() == 0b11000);
  CHECK(shift_detect(42).pack5() == 0b01011);
}

TEST_CASE("sja product equals integer multiplication for all code pairs") {
  const std::vector<HLogCode> codes = all_valid_codes();
  for (const HLogCode& a : codes) {
    for (const HLogCode& b : codes) {
      const ProductCode p = sja_multiply(a, b);
      CHECK(p.decode() ==
            static_cast<std::int32_t>(a.decode()) * static_cast<std::int32_t>(b.decode()));
      if (!p.is_zero) {
        CHECK(p.e1 <= 15);
        if (p.e2) CHECK(*p.e2 < p.e1);
      }
    }
  }
  // the three exponent patterns, directly
  const HLogCode sum1{false, 1, Form::Sum, false};  // 3
  const ProductCode nine = sja_multiply(sum1, sum1);
  CHECK(nine.e1 == 3);
  REQUIRE(nine.e2.has_value());
  CHECK(*nine.e2 == 0);
  CHECK(nine.decode() == 9);
  CHECK(sja_multiply(sum1, HLogCode{.is_zero = true}).is_zero);
}

TEST_CASE("converter accumulation") {
  CHECK(converter_accumulate({}) == 0);

  const ProductCode pos{false, 9, 8, false};
  const ProductCode neg{true, 9, 8, false};
  const std::vector<ProductCode> cancel{pos, neg};
  CHECK(converter_accumulate(cancel) == 0);

  const ProductCode nine{false, 3, 0, false};
  const ProductCode minus_two{true, 1, std::nullopt, false};
  const std::vector<ProductCode> mixed{nine, nine, minus_two};
  CHECK(converter_accumulate(mixed) == 16);

  Splitmix64 rng(7);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = rng.next_below(64);
    std::vector<ProductCode> products;
    std::int64_t naive = 0;
    for (std::size_t i = 0; i < n; ++i) {
      products.push_back(random_product(rng));
      naive += products.back().decode();
    }
    CHECK(converter_accumulate(products) == naive);
  }
}

TEST_CASE("wire packing round-trips") {
  for (const HLogCode& code : all_valid_codes()) {
    if (code.is_zero) continue;
    CHECK(HLogCode::unpack5(code.pack5()) == code);
  }
  Splitmix64 rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const ProductCode p = random_product(rng);
    if (p.is_zero) continue;
    CHECK(ProductCode::unpack9(p.pack9()) == p);
  }
}

TEST_CASE("max relative error: hybrid levels beat pure powers of two") {
  const LevelTable hl = hlog_levels(8);
  const LevelTable pl = pot_levels(8);
  double hlog_max = 0.0, pot_max = 0.0;
  for (std::int32_t mag = 1; mag <= 128; ++mag) {
    hlog_max = std::max(hlog_max, std::abs(project(mag, hl) - mag) / static_cast<double>(mag));
    pot_max = std::max(pot_max, std::abs(project(mag, pl) - mag) / static_cast<double>(mag));
  }
  CHECK(hlog_max < pot_max);
  CHECK(hlog_max == doctest::Approx(0.2));
  CHECK(pot_max == doctest::Approx(1.0 / 3.0));
}
