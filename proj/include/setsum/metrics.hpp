#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

namespace setsum {

// Mean squared / absolute difference between two equal-length series (n >= 2).
double mse(std::span<const double> truth, std::span<const double> prediction);
double mae(std::span<const double> truth, std::span<const double> prediction);

// ICC(2,1): two-way random effects, absolute agreement, single measurement,
// over the n x 2 table (truth, prediction):
//   (MS_R - MS_E) / (MS_R + MS_E + (2/n)(MS_C - MS_E))
// Empty when not computable (n < 3 or zero denominator, e.g. no between-target variance).
std::optional<double> icc(std::span<const double> truth, std::span<const double> prediction);

struct MetricsReport {
  double mse = 0.0;
  double mae = 0.0;
  std::optional<double> icc;
  std::size_t n = 0;
};

MetricsReport evaluate(std::span<const double> truth, std::span<const double> prediction);

// Two-sided Williams' test of H0: rho12 == rho13 for correlations sharing variable 1.
//   t = (r12 - r13) sqrt( (n-1)(1+r23) / (2K(n-1)/(n-3) + rbar^2 (1-r23)^3) )
//   K = 1 - r12^2 - r13^2 - r23^2 + 2 r12 r13 r23,  rbar = (r12 + r13)/2,  df = n - 3
struct WilliamsResult {
  double t = 0.0;
  double p = 1.0;
  double degrees_of_freedom = 0.0;
};

// Empty when the inputs are degenerate (K <= 0). Throws on |r| > 1 or n < 4.
std::optional<WilliamsResult> williams_test(double r12, double r13, double r23, std::size_t n);

// Student's t cumulative distribution function.
double student_t_cdf(double t, double degrees_of_freedom);

// Pearson correlation; empty when either series is constant.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

// "NA" for an empty optional, shortest round-trip text otherwise.
std::string format_optional(const std::optional<double>& value);

}  // namespace setsum
