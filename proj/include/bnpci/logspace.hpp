#pragma once

#include <cmath>
#include <limits>
#include <span>

// Log-space arithmetic helpers. Everything downstream (marginal likelihoods,
// the optional-stopping recursion, Bayes factors) stays in logs; these are the
// only places where exp/log1p mix.

namespace bnpci {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)) without overflow. Exact identity when one side is
// -inf: returns the other operand unchanged (bitwise), which the rho = 1
// diagnostic mode of the stopping recursion relies on.
inline double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

inline double log_sum_exp(std::span<const double> xs) {
  double hi = kNegInf;
  for (double x : xs) hi = x > hi ? x : hi;
  if (hi == kNegInf || std::isinf(hi)) return hi;  // empty, all -inf, or +inf
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

}  // namespace bnpci
