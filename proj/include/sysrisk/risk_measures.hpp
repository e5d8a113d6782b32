#pragma once

#include "sysrisk/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace sysrisk {

/// Marginal risk measure applied to one coordinate of the conditional sample.
struct MarginalRiskMeasure {
  enum class Kind { Mean, VaR, RVaR, ES };

  Kind kind = Kind::Mean;
  double level1 = 0.0;  // beta (VaR, ES) or beta1 (RVaR)
  double level2 = 1.0;  // beta2 (RVaR); 1 for ES

  static MarginalRiskMeasure mean() { return {}; }
  static MarginalRiskMeasure var(double beta) {
    check_level(beta, "VaR");
    return {Kind::VaR, beta, 1.0};
  }
  static MarginalRiskMeasure rvar(double beta1, double beta2) {
    if (!(beta1 > 0.0 && beta1 < beta2 && beta2 <= 1.0)) {
      throw ConfigError("RVaR levels must satisfy 0 < beta1 < beta2 <= 1");
    }
    return {Kind::RVaR, beta1, beta2};
  }
  static MarginalRiskMeasure es(double beta) {
    check_level(beta, "ES");
    return {Kind::ES, beta, 1.0};
  }

  std::string name() const {
    std::ostringstream os;
    switch (kind) {
      case Kind::Mean: os << "mean"; break;
      case Kind::VaR: os << "VaR(" << level1 << ")"; break;
      case Kind::RVaR: os << "RVaR(" << level1 << "," << level2 << ")"; break;
      case Kind::ES: os << "ES(" << level1 << ")"; break;
    }
    return os.str();
  }

  bool operator==(const MarginalRiskMeasure&) const = default;

 private:
  static void check_level(double b, const char* what) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError(std::string(what) + " level must lie in (0,1)");
  }
};

/// Point estimate with batch-means standard error.
struct EstimateWithSE {
  double point = 0.0;
  double se = 0.0;
  int n_batches = 0;
  bool few_batches = false;  // fewer than 10 batches: se unreliable
};

namespace detail {

// ceil(n * level) robust to representation error (0.95 * 100 must give 95).
inline std::size_t ceil_rank(std::size_t n, double level) {
  const double x = static_cast<double>(n) * level;
  const double r = std::round(x);
  if (std::abs(x - r) < 1e-9 * std::max(1.0, x)) return static_cast<std::size_t>(r);
  return static_cast<std::size_t>(std::ceil(x));
}

}  // namespace detail

/// Generalised-inverse empirical quantile: order statistic x_(k), k = ceil(n alpha).
inline double empirical_quantile(std::span<const double> sample, double alpha) {
  if (sample.empty()) throw DomainError("empirical_quantile: empty sample");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("empirical_quantile: level outside (0,1]");
  const std::size_t n = sample.size();
  const std::size_t k = std::clamp<std::size_t>(detail::ceil_rank(n, alpha), 1, n);
  std::vector<double> s(sample.begin(), sample.end());
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(k - 1), s.end());
  return s[k - 1];
}

inline double empirical_quantile(const Vector& sample, double alpha) {
  return empirical_quantile(std::span<const double>(sample.data(), static_cast<std::size_t>(sample.size())),
                            alpha);
}

/// Risk measure of the empirical distribution of `sample`.
///
/// RVaR(b1, b2) averages the order statistics with (1-based) ranks
/// ceil(n b1) + 1, ..., ceil(n b2); ES(b) is RVaR(b, 1).
inline double empirical_measure(std::span<const double> sample, const MarginalRiskMeasure& m) {
  using Kind = MarginalRiskMeasure::Kind;
  if (sample.empty()) throw DomainError("empirical_measure: empty sample");
  const std::size_t n = sample.size();
  switch (m.kind) {
    case Kind::Mean:
      return std::accumulate(sample.begin(), sample.end(), 0.0) / static_cast<double>(n);
    case Kind::VaR:
      return empirical_quantile(sample, m.level1);
    case Kind::RVaR:
    case Kind::ES: {
      const std::size_t lo = detail::ceil_rank(n, m.level1) + 1;
      const std::size_t hi = std::min(n, detail::ceil_rank(n, m.level2));
      if (lo > hi) {
        std::ostringstream os;
        os << "empirical_measure: " << m.name() << " has no order statistics strictly between levels "
           << m.level1 << " and " << m.level2 << " for n = " << n;
        throw DomainError(os.str());
      }
      std::vector<double> s(sample.begin(), sample.end());
      std::sort(s.begin(), s.end());
      double acc = 0.0;
      for (std::size_t k = lo; k <= hi; ++k) acc += s[k - 1];
      return acc / static_cast<double>(hi - lo + 1);
    }
  }
  return 0.0;
}

inline double empirical_measure(const Vector& sample, const MarginalRiskMeasure& m) {
  return empirical_measure(std::span<const double>(sample.data(), static_cast<std::size_t>(sample.size())), m);
}

/// Batch-means standard error with batch length L = ceil(sqrt(N)).
///
/// The functional is evaluated on each batch; a trailing short batch is kept
/// only if it holds at least L/2 points. se = sd(batch values) / sqrt(B).
inline EstimateWithSE batch_means_se(std::span<const double> path, const MarginalRiskMeasure& m) {
  const std::size_t n = path.size();
  if (n < 100) throw DomainError("batch_means_se: need N >= 100, got " + std::to_string(n));
  const auto len = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  std::vector<double> values;
  for (std::size_t start = 0; start < n; start += len) {
    const std::size_t size = std::min(len, n - start);
    if (2 * size < len) break;
    values.push_back(empirical_measure(path.subspan(start, size), m));
  }
  EstimateWithSE out;
  out.point = empirical_measure(path, m);
  out.n_batches = static_cast<int>(values.size());
  out.few_batches = values.size() < 10;
  if (values.size() >= 2) {
    const double b = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / b;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    out.se = std::sqrt(ss / (b - 1.0)) / std::sqrt(b);
  }
  return out;
}

inline EstimateWithSE batch_means_se(const Vector& path, const MarginalRiskMeasure& m) {
  return batch_means_se(std::span<const double>(path.data(), static_cast<std::size_t>(path.size())), m);
}

/// Sample autocorrelations at lags 0..max_lag; nullopt when the path has zero variance.
inline std::optional<std::vector<double>> acf(std::span<const double> path, std::size_t max_lag) {
  const std::size_t n = path.size();
  if (n <= max_lag) throw DomainError("acf: path length must exceed max_lag");
  const double mean = std::accumulate(path.begin(), path.end(), 0.0) / static_cast<double>(n);
  double c0 = 0.0;
  for (double x : path) c0 += (x - mean) * (x - mean);
  if (!(c0 > 0.0)) return std::nullopt;
  std::vector<double> out(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double ck = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) ck += (path[t] - mean) * (path[t + k] - mean);
    out[k] = ck / c0;
  }
  return out;
}

inline std::optional<std::vector<double>> acf(const Vector& path, std::size_t max_lag) {
  return acf(std::span<const double>(path.data(), static_cast<std::size_t>(path.size())), max_lag);
}

inline double acceptance_rate(const std::vector<bool>& decisions) {
  if (decisions.empty()) throw DomainError("acceptance_rate: no decisions recorded");
  const auto accepted = std::count(decisions.begin(), decisions.end(), true);
  return static_cast<double>(accepted) / static_cast<double>(decisions.size());
}

}  // namespace sysrisk
