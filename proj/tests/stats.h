/*
 * Copyright 2026 The pemb Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PEMB_TESTS_STATS_H_
#define PEMB_TESTS_STATS_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace pemb::testing {

// CDF of t = mu^T z for a vMF in `dim` dimensions, tabulated by integrating
// sin^(dim-2)(theta) exp(kappa (cos theta - 1)) over theta.
class VmfCosineCdf {
 public:
  VmfCosineCdf(std::size_t dim, double kappa, std::size_t grid = 200000)
      : theta_(grid + 1), cdf_from_pi_(grid + 1) {
    const double h = std::numbers::pi / static_cast<double>(grid);
    auto density = [&](double th) {
      return std::pow(std::sin(th), static_cast<double>(dim) - 2.0) *
             std::exp(kappa * (std::cos(th) - 1.0));
    };
    // Accumulate from theta = pi down to 0 so cdf_from_pi_[i] is
    // P(theta >= theta_i) = P(t <= cos theta_i).
    for (std::size_t i = 0; i <= grid; ++i) {
      theta_[i] = h * static_cast<double>(i);
    }
    cdf_from_pi_[grid] = 0.0;
    for (std::size_t i = grid; i > 0; --i) {
      const double a = theta_[i - 1], b = theta_[i];
      // Simpson on each panel.
      const double panel =
          (b - a) / 6.0 * (density(a) + 4.0 * density(0.5 * (a + b)) +
                           density(b));
      cdf_from_pi_[i - 1] = cdf_from_pi_[i] + panel;
    }
    const double total = cdf_from_pi_[0];
    for (double& v : cdf_from_pi_) v /= total;
  }

  double operator()(double t) const {
    t = std::clamp(t, -1.0, 1.0);
    const double th = std::acos(t);
    const double h = theta_[1];
    std::size_t i = static_cast<std::size_t>(th / h);
    if (i >= theta_.size() - 1) return 0.0;
    const double f = (th - theta_[i]) / h;
    return cdf_from_pi_[i] * (1.0 - f) + cdf_from_pi_[i + 1] * f;
  }

 private:
  std::vector<double> theta_;
  std::vector<double> cdf_from_pi_;
};

// Two-sided Kolmogorov-Smirnov statistic of a sample against a CDF.
template <typename Cdf>
double KsStatistic(std::vector<double> sample, const Cdf& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f,
                  f - static_cast<double>(i) / n});
  }
  return d;
}

// Asymptotic 1% critical value of the one-sample KS statistic.
inline double KsCritical1Percent(std::size_t n) {
  return 1.6276 / std::sqrt(static_cast<double>(n));
}

struct MeanAndError {
  double mean = 0.0;
  double standard_error = 0.0;
};

inline MeanAndError MeanWithError(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

}  // namespace pemb::testing

#endif  // PEMB_TESTS_STATS_H_
