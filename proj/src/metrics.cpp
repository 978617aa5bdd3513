#include "setsum/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "detail/text.hpp"

namespace setsum {

namespace {

void require_series(std::span<const double> truth, std::span<const double> prediction) {
  if (truth.size() != prediction.size()) {
    throw std::invalid_argument("paired series differ in length: " + std::to_string(truth.size()) +
                                " vs " + std::to_string(prediction.size()));
  }
  if (truth.size() < 2) throw std::invalid_argument("paired series need at least 2 entries");
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!std::isfinite(truth[i]) || !std::isfinite(prediction[i])) {
      throw std::invalid_argument("paired series contain a non-finite value at index " +
                                  std::to_string(i));
    }
  }
}

}  // namespace

double mse(std::span<const double> truth, std::span<const double> prediction) {
  require_series(truth, prediction);
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = prediction[i] - truth[i];
    total += d * d;
  }
  return total / static_cast<double>(truth.size());
}

double mae(std::span<const double> truth, std::span<const double> prediction) {
  require_series(truth, prediction);
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) total += std::abs(prediction[i] - truth[i]);
  return total / static_cast<double>(truth.size());
}

std::optional<double> icc(std::span<const double> truth, std::span<const double> prediction) {
  require_series(truth, prediction);
  const std::size_t n = truth.size();
  if (n < 3) return std::nullopt;
  const double nd = static_cast<double>(n);

  double mean_truth = 0.0;
  double mean_pred = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_truth += truth[i];
    mean_pred += prediction[i];
  }
  mean_truth /= nd;
  mean_pred /= nd;
  const double grand = (mean_truth + mean_pred) / 2.0;

  double ss_rows = 0.0;
  double ss_error = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double row_mean = (truth[i] + prediction[i]) / 2.0;
    ss_rows += 2.0 * (row_mean - grand) * (row_mean - grand);
    // Residuals of the additive two-way model, computed directly.
    const double e1 = truth[i] - row_mean - mean_truth + grand;
    const double e2 = prediction[i] - row_mean - mean_pred + grand;
    ss_error += e1 * e1 + e2 * e2;
  }
  const double ss_cols =
      nd * ((mean_truth - grand) * (mean_truth - grand) + (mean_pred - grand) * (mean_pred - grand));

  const double ms_rows = ss_rows / (nd - 1.0);
  const double ms_cols = ss_cols;  // k - 1 = 1
  const double ms_error = ss_error / (nd - 1.0);
  const double denominator = ms_rows + ms_error + (2.0 / nd) * (ms_cols - ms_error);
  if (ms_rows == 0.0 || denominator == 0.0 || !std::isfinite(denominator)) return std::nullopt;
  return (ms_rows - ms_error) / denominator;
}

MetricsReport evaluate(std::span<const double> truth, std::span<const double> prediction) {
  MetricsReport report;
  report.mse = mse(truth, prediction);
  report.mae = mae(truth, prediction);
  report.icc = icc(truth, prediction);
  report.n = truth.size();
  return report;
}

double student_t_cdf(double t, double degrees_of_freedom) {
  if (!(degrees_of_freedom > 0.0)) throw std::invalid_argument("t distribution needs df > 0");
  const boost::math::students_t_distribution<double> dist(degrees_of_freedom);
  return boost::math::cdf(dist, t);
}

std::optional<WilliamsResult> williams_test(double r12, double r13, double r23, std::size_t n) {
  for (double r : {r12, r13, r23}) {
    if (!(r >= -1.0 && r <= 1.0)) throw std::invalid_argument("correlations must lie in [-1, 1]");
  }
  if (n < 4) throw std::invalid_argument("williams_test needs n >= 4");
  const double nd = static_cast<double>(n);
  const double k = 1.0 - r12 * r12 - r13 * r13 - r23 * r23 + 2.0 * r12 * r13 * r23;
  if (!(k > 0.0)) return std::nullopt;
  const double rbar = (r12 + r13) / 2.0;
  const double one_minus = 1.0 - r23;
  const double denominator =
      2.0 * k * (nd - 1.0) / (nd - 3.0) + rbar * rbar * one_minus * one_minus * one_minus;
  const double numerator = (nd - 1.0) * (1.0 + r23);
  if (!(denominator > 0.0)) return std::nullopt;
  WilliamsResult result;
  result.degrees_of_freedom = nd - 3.0;
  result.t = (r12 - r13) * std::sqrt(numerator / denominator);
  result.p = std::min(1.0, 2.0 * student_t_cdf(-std::abs(result.t), result.degrees_of_freedom));
  return result;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  require_series(a, b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0;
  double mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

std::string format_optional(const std::optional<double>& value) {
  return value ? detail::format_double(*value) : "NA";
}

}  // namespace setsum
