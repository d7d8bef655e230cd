#include "freeopt/accounting.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "freeopt/errors.hpp"

namespace freeopt {

namespace {

constexpr int kDigits = 18;
// |raw| below 2^126 keeps sums of a few amounts from overflowing.
constexpr long double kMaxMagnitude = 8.5e19L;

}  // namespace

Amount Amount::parse(std::string_view text) {
  const std::string_view original = text;
  auto fail = [&](const char* why) { return DomainError("bad amount '" + std::string(original) + "': " + why); };
  bool negative = false;
  if (!text.empty() && (text.front() == '-' || text.front() == '+')) {
    negative = text.front() == '-';
    text.remove_prefix(1);
  }
  if (text.empty()) throw fail("empty");
  const auto dot = text.find('.');
  const std::string_view whole = text.substr(0, dot);
  const std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
  if (whole.empty() && frac.empty()) throw fail("no digits");
  if (frac.size() > kDigits) throw fail("more than 18 fractional digits");
  if (whole.size() > 20) throw fail("out of range");
  int128_t raw = 0;
  for (char c : whole) {
    if (c < '0' || c > '9') throw fail("not a decimal number");
    raw = raw * 10 + (c - '0');
  }
  for (std::size_t i = 0; i < kDigits; ++i) {
    int digit = 0;
    if (i < frac.size()) {
      if (frac[i] < '0' || frac[i] > '9') throw fail("not a decimal number");
      digit = frac[i] - '0';
    }
    raw = raw * 10 + digit;
  }
  return Amount(negative ? -raw : raw);
}

Amount Amount::from_double(double value) {
  if (!std::isfinite(value) || std::abs(static_cast<long double>(value)) > kMaxMagnitude)
    throw DomainError("amount out of range: " + std::to_string(value));
  // glibc prints the exact binary value correctly rounded to 18 places.
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.18f", value);
  return parse(buf);
}

double Amount::to_double() const noexcept {
  const int128_t whole = raw_ / scale;
  const int128_t frac = raw_ % scale;
  return static_cast<double>(static_cast<long double>(whole) + static_cast<long double>(frac) / scale);
}

std::string Amount::to_string() const {
  int128_t v = raw_ < 0 ? -raw_ : raw_;
  const int128_t whole = v / scale;
  long long frac = static_cast<long long>(v % scale);
  std::string digits;
  if (whole == 0) {
    digits = "0";
  } else {
    for (int128_t w = whole; w > 0; w /= 10) digits.insert(digits.begin(), static_cast<char>('0' + static_cast<int>(w % 10)));
  }
  std::string out = raw_ < 0 ? "-" + digits : digits;
  if (frac != 0) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%018lld", frac);
    std::string f(buf);
    while (!f.empty() && f.back() == '0') f.pop_back();
    out += "." + f;
  }
  return out;
}

double markout_value(double amount_buy, double price_buy, double amount_sell, double price_sell, double base_fee,
                     double taker_fee_rate) noexcept {
  const double long_leg = amount_buy * price_buy;
  const double short_leg = amount_sell * price_sell;
  return long_leg - short_leg - base_fee - taker_fee_rate * (long_leg + short_leg);
}

double block_value(Amount non_position_value, std::span<const double> markouts, double carried) noexcept {
  double total = non_position_value.to_double();
  for (double m : markouts) total += m;
  return total + carried;
}

}  // namespace freeopt
