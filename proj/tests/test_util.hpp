#pragma once

#include "sysrisk/core.hpp"


#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace sysrisk::testing {

inline Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    g(j) = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous cdf.
inline double ks_statistic(const Vector& sample, const std::function<double(double)>& cdf) {
  std::vector<double> s(sample.data(), sample.data() + sample.size());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = cdf(s[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample(const Vector& a, const Vector& b) {
  std::vector<double> x(a.data(), a.data() + a.size()), y(b.data(), b.data() + b.size());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= v) ++i;
    while (j < y.size() && y[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / x.size() - static_cast<double>(j) / y.size()));
  }
  return d;
}

/// Asymptotic critical value of the two-sample KS statistic at level `alpha`.
inline double ks_two_sample_critical(std::size_t n, std::size_t m, double alpha) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return c * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * m));
}

/// Kendall's tau-a, O(n^2).
inline double kendall_tau(const Vector& x, const Vector& y) {
  const Eigen::Index n = x.size();
  long long s = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double a = (x(i) - x(j)) * (y(i) - y(j));
      s += (a > 0) - (a < 0);
    }
  }
  return 2.0 * static_cast<double>(s) / (static_cast<double>(n) * (n - 1));
}

}  // namespace sysrisk::testing
