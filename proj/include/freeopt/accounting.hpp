#pragma once

#include <compare>
#include <span>
#include <string>
#include <string_view>

namespace freeopt {

__extension__ typedef __int128 int128_t;

// Fixed-point quantity with 18 fractional digits (wei for ETH amounts, the
// same scale for token amounts and prices). Sums are exact; products go
// through double at the point of use.
class Amount {
 public:
  static constexpr long long scale = 1'000'000'000'000'000'000LL;

  constexpr Amount() = default;
  static constexpr Amount from_raw(int128_t raw) noexcept { return Amount(raw); }

  // Accepts [-]digits[.digits] with at most 18 fractional digits.
  // Throws DomainError on anything else.
  static Amount parse(std::string_view text);

  // Nearest representable amount; DomainError for non-finite or out-of-range input.
  static Amount from_double(double value);

  int128_t raw() const noexcept { return raw_; }
  double to_double() const noexcept;
  // Shortest exact decimal ("0.0659", "-3", "12.000000000000000001").
  std::string to_string() const;

  Amount operator+(Amount o) const noexcept { return Amount(raw_ + o.raw_); }
  Amount operator-(Amount o) const noexcept { return Amount(raw_ - o.raw_); }
  Amount& operator+=(Amount o) noexcept { raw_ += o.raw_; return *this; }
  Amount& operator-=(Amount o) noexcept { raw_ -= o.raw_; return *this; }
  auto operator<=>(const Amount&) const = default;

 private:
  constexpr explicit Amount(int128_t raw) : raw_(raw) {}
  int128_t raw_ = 0;
};

// Rounds through the 18-digit grid: the value a CSV round trip would yield.
inline double quantize(double value) { return Amount::from_double(value).to_double(); }

// CEX taker fee used by default when marking trades: 1.725 bp of notional.
inline constexpr double default_taker_fee_rate = 0.0001725;

// pi = x P_A - y P_B - base_fee - rate (x P_A + y P_B), all in ETH.
double markout_value(double amount_buy, double price_buy, double amount_sell, double price_sell, double base_fee,
                     double taker_fee_rate) noexcept;

// Pi_b = (v_b - payments) + sum of markouts + carried value, summed in a fixed order.
double block_value(Amount non_position_value, std::span<const double> markouts, double carried) noexcept;

}  // namespace freeopt
