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

#include "pemb/special.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "pemb/errors.h"

namespace pemb {
namespace {

constexpr int kDebyeTerms = 16;

// Coefficients of the Debye polynomials u_k(t), k < kDebyeTerms, built once
// from the recurrence
//   u_{k+1}(t) = t^2 (1 - t^2) u_k'(t) / 2 + (1/8) int_0^t (1 - 5 s^2) u_k(s) ds
// coeffs[k][j] multiplies t^j.
const std::vector<std::vector<double>>& DebyeCoefficients() {
  static const std::vector<std::vector<double>> coeffs = [] {
    std::vector<std::vector<double>> u(kDebyeTerms);
    u[0] = {1.0};
    for (int k = 0; k + 1 < kDebyeTerms; ++k) {
      const std::vector<double>& p = u[k];
      std::vector<double> next(p.size() + 3, 0.0);
      for (std::size_t j = 1; j < p.size(); ++j) {
        // t^2 (1 - t^2) / 2 * j c_j t^{j-1}
        const double d = 0.5 * static_cast<double>(j) * p[j];
        next[j + 1] += d;
        next[j + 3] -= d;
      }
      for (std::size_t j = 0; j < p.size(); ++j) {
        // (1/8) int_0^t (c_j s^j - 5 c_j s^{j+2}) ds
        next[j + 1] += p[j] / (8.0 * static_cast<double>(j + 1));
        next[j + 3] -= 5.0 * p[j] / (8.0 * static_cast<double>(j + 3));
      }
      u[k + 1] = std::move(next);
    }
    return u;
  }();
  return coeffs;
}

double LogBesselISeries(double order, double x) {
  // sum_k (x/2)^{2k+v} / (k! Gamma(k+v+1)), accumulated relative to k = 0.
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  double log_scale = 0.0;
  for (int k = 0; k < 100000; ++k) {
    term *= q / ((k + 1.0) * (k + 1.0 + order));
    sum += term;
    if (sum > 1e280) {
      sum *= 1e-280;
      term *= 1e-280;
      log_scale += 280.0 * std::numbers::ln10;
    }
    if (term < sum * 1e-17 && (k + 1.0) * (k + 1.0 + order) > q) break;
  }
  return order * std::log(0.5 * x) - std::lgamma(order + 1.0) +
         std::log(sum) + log_scale;
}

double LogBesselIDebye(double order, double x) {
  const double p = std::hypot(order, x);
  const double t = order / p;
  const auto& u = DebyeCoefficients();
  // sum_k u_k(t) / order^k with t^j / order^k rewritten as t^{j-k} / p^k so
  // the expansion stays defined at order = 0.
  double series = 1.0;
  double inv_p_pow = 1.0;
  for (int k = 1; k < kDebyeTerms; ++k) {
    inv_p_pow /= p;
    double poly = 0.0;
    for (std::size_t j = u[k].size(); j-- > static_cast<std::size_t>(k);) {
      poly = poly * t + u[k][j];
    }
    const double term = poly * inv_p_pow;
    series += term;
    if (std::abs(term) < 1e-17 * std::abs(series)) break;
  }
  const double eta_term =
      order > 0.0 ? order * std::log(x / (order + p)) : 0.0;
  return p + eta_term - 0.5 * std::log(2.0 * std::numbers::pi * p) +
         std::log(series);
}

}  // namespace

double LogBesselI(double order, double x) {
  if (!(order >= 0.0) || !(x >= 0.0) || !std::isfinite(order) ||
      !std::isfinite(x)) {
    throw DomainError("LogBesselI requires order >= 0 and x >= 0");
  }
  if (x == 0.0) {
    return order == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  if (x < std::max(30.0, 2.0 * order)) return LogBesselISeries(order, x);
  return LogBesselIDebye(order, x);
}

double BesselIRatio(double order, double x) {
  if (!(order >= 0.0) || !(x >= 0.0)) {
    throw DomainError("BesselIRatio requires order >= 0 and x >= 0");
  }
  if (x == 0.0) return 0.0;
  constexpr double kTiny = 1e-300;
  // Continued fraction 1 / (b1 + 1 / (b2 + ...)), b_k = 2 (order + k) / x.
  double f = kTiny;
  double c = f;
  double d = 0.0;
  for (int k = 1; k < 10000000; ++k) {
    const double b = 2.0 * (order + k) / x;
    d = b + d;
    if (d == 0.0) d = kTiny;
    c = b + 1.0 / c;
    if (c == 0.0) c = kTiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) return f;
  }
  throw NumericalError("BesselIRatio continued fraction did not converge");
}

double LogBesselIDerivative(double order, double x) {
  if (x == 0.0) {
    if (order == 0.0) return 0.0;
    throw DomainError("d/dx log I_v(x) is unbounded at x = 0 for v > 0");
  }
  return BesselIRatio(order, x) + order / x;
}

double LogSumExp(std::span<const double> v) {
  if (v.empty()) throw DomainError("LogSumExp of empty input");
  const double m = *std::max_element(v.begin(), v.end());
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace pemb
