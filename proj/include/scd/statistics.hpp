#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "scd/error.hpp"

namespace scd {

struct KSResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
};

/// Survival function of the Kolmogorov distribution, Q(lambda) =
/// 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2). The series is cut once a
/// term drops below 1e-10; if it never does (lambda near 0) the result is 1.
inline double kolmogorov_survival(double lambda) {
  constexpr double tolerance = 1e-10;
  constexpr int max_terms = 1000;
  double sum = 0.0;
  double sign = 1.0;
  const double a = -2.0 * lambda * lambda;
  for (int k = 1; k <= max_terms; ++k) {
    const double term = 2.0 * sign * std::exp(a * k * k);
    sum += term;
    if (std::abs(term) < tolerance) return std::clamp(sum, 0.0, 1.0);
    sign = -sign;
  }
  return 1.0;
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value at
/// effective size n_a*n_b/(n_a+n_b).
inline KSResult ks_two_sample(std::span<const double> a, std::span<const double> b, double alpha) {
  if (a.empty() || b.empty()) throw Error(Errc::EmptySample, "KS test needs two non-empty samples");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::InvalidArgument, "alpha must lie in (0, 1)");

  std::vector<double> xs(a.begin(), a.end()), ys(b.begin(), b.end());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  const double na = static_cast<double>(xs.size());
  const double nb = static_cast<double>(ys.size());

  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < xs.size() || j < ys.size()) {
    double x;
    if (i == xs.size()) x = ys[j];
    else if (j == ys.size()) x = xs[i];
    else x = std::min(xs[i], ys[j]);
    while (i < xs.size() && xs[i] == x) ++i;
    while (j < ys.size() && ys[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }

  KSResult r;
  r.statistic = d;
  const double ne = na * nb / (na + nb);
  r.p_value = kolmogorov_survival(std::sqrt(ne) * d);
  r.reject = r.p_value < alpha;
  return r;
}

/// The single comparison shared by every likelihood-ratio decision: a ratio
/// at or above the log threshold retains equivalence.
inline bool retains_equivalence(double lambda, double log_threshold) { return lambda >= log_threshold; }

/// GLRT on a log-likelihood ratio: true keeps the equivalence hypothesis,
/// false rejects it (lambda below log c).
inline bool glrt_decision(double lambda, double c) { return retains_equivalence(lambda, std::log(c)); }

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  bool operator==(const ConfusionCounts&) const = default;
};

// Undefined ratios (zero denominators) are reported as 0.

inline double precision(const ConfusionCounts& c) {
  const double den = static_cast<double>(c.tp + c.fp);
  return den == 0.0 ? 0.0 : static_cast<double>(c.tp) / den;
}

inline double recall(const ConfusionCounts& c) {
  const double den = static_cast<double>(c.tp + c.fn);
  return den == 0.0 ? 0.0 : static_cast<double>(c.tp) / den;
}

inline double f1(const ConfusionCounts& c) {
  const double p = precision(c), r = recall(c);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
inline double mcc(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (den == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(den);
}

}  // namespace scd
