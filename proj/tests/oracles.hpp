#pragma once

// Test-only reference computations. Nothing here calls into the library's
// numerical paths, so they can check it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

inline long double phi(long double z) { return std::exp(-0.5L * z * z) / std::sqrt(2.0L * 3.14159265358979323846L); }
inline long double cdf(long double z) { return 0.5L * std::erfc(-z / std::sqrt(2.0L)); }

// Direct ratio in extended precision; fine for |z| < 25.
inline double hazard(double z) { return static_cast<double>(phi(z) / (0.5L * std::erfc(z / std::sqrt(2.0L)))); }

template <class F>
double bisect(F&& f, double lo, double hi, double tol = 1e-15) {
  double flo = f(lo);
  for (int i = 0; i < 200 && hi - lo > tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Root of lambda(z) = 2z.
inline double hazard_fixed_point() {
  return bisect([](double z) { return hazard(z) - 2.0 * z; }, 0.0, 2.0);
}

// Quadratic-cost commit profit written out longhand.
inline double commit_profit(double mu, double y, double L, double P0, double delta) {
  const double x = y / P0;
  const double spot = P0 * (1.0 - delta);
  return mu + y - (spot * x + spot * x * x / (L / P0));
}

// Composite Simpson on [a, b] with n (even) intervals.
template <class F>
long double simpson(F&& f, double a, double b, int n) {
  if (!(b > a)) return 0.0L;
  const double h = (b - a) / n;
  long double acc = 0.0L;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * f(a + i * h);
  }
  return acc * h / 3.0L;
}

// E[max{-p, Pi_0 + sigma Z y}] by Simpson over z in [-14, 14], split at the kink.
inline double objective_quadrature(double mu, double y, double L, double P0, double delta, double sigma, double p) {
  const double pi0 = commit_profit(mu, y, L, P0, delta);
  const double a = -14.0, b = 14.0;
  if (sigma * y == 0.0) return std::max(-p, pi0);
  const double kink = std::clamp(-(pi0 + p) / (sigma * y), a, b);
  const long double left = simpson([&](double z) { return -p * phi(z); }, a, kink, 4000);
  const long double right = simpson([&](double z) { return (pi0 + sigma * z * y) * phi(z); }, kink, b, 20000);
  return static_cast<double>(left + right);
}

struct McEstimate {
  double mean;
  double se;
};

// Plain Monte Carlo with the standard library generator.
inline McEstimate objective_mc(double mu, double y, double L, double P0, double delta, double sigma, double p,
                               std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const double pi0 = commit_profit(mu, y, L, P0, delta);
  long double s = 0.0L, ss = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::max(-p, pi0 + sigma * z(gen) * y);
    s += v;
    ss += static_cast<long double>(v) * v;
  }
  const long double m = s / n;
  const long double var = ss / n - m * m;
  return {static_cast<double>(m), static_cast<double>(std::sqrt(var / n))};
}

// Brute-force maximum of the quadrature objective over a dense grid plus a
// local refinement. Slow; meant for a handful of problems.
inline double brute_force_value(double mu, double L, double P0, double delta, double sigma, double p, double y_hi) {
  double best_y = 0.0, best = std::max(-p, mu);
  const int n = 400;
  for (int i = 1; i <= n; ++i) {
    const double y = y_hi * i / n;
    const double v = objective_quadrature(mu, y, L, P0, delta, sigma, p);
    if (v > best) best = v, best_y = y;
  }
  double lo = std::max(0.0, best_y - y_hi / n), hi = best_y + y_hi / n;
  for (int it = 0; it < 60; ++it) {
    const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
    if (objective_quadrature(mu, m1, L, P0, delta, sigma, p) < objective_quadrature(mu, m2, L, P0, delta, sigma, p))
      lo = m1;
    else
      hi = m2;
  }
  return std::max(best, objective_quadrature(mu, 0.5 * (lo + hi), L, P0, delta, sigma, p));
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n, mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace oracle
