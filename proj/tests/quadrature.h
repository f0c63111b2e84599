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

#ifndef PEMB_TESTS_QUADRATURE_H_
#define PEMB_TESTS_QUADRATURE_H_

#include <boost/math/quadrature/gauss.hpp>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "pemb/distributions.h"
#include "pemb/tensor.h"

namespace pemb::testing {

// log of the trapezoid integral of p_a * p_b over [-12, 12]^D, D in {1, 2}.
inline double LogNormalProductQuadrature(const DiagonalNormal& a,
                                         const DiagonalNormal& b,
                                         int points = 2401) {
  const double lo = -12.0, hi = 12.0;
  const double h = (hi - lo) / (points - 1);
  auto weight = [&](int i) { return (i == 0 || i == points - 1) ? 0.5 : 1.0; };
  double acc = 0.0;
  if (a.mu.size() == 1) {
    for (int i = 0; i < points; ++i) {
      const Tensor z = Tensor::Vector({lo + h * i});
      acc += weight(i) * std::exp(NormalLogPdf(a, z) + NormalLogPdf(b, z));
    }
    return std::log(acc * h);
  }
  for (int i = 0; i < points; ++i) {
    for (int j = 0; j < points; ++j) {
      const Tensor z = Tensor::Vector({lo + h * i, lo + h * j});
      acc += weight(i) * weight(j) *
             std::exp(NormalLogPdf(a, z) + NormalLogPdf(b, z));
    }
  }
  return std::log(acc * h * h);
}

// log of the integral of p_a * p_b over the unit 2-sphere. Coordinates are
// (u = cos theta, phi) about the pole kappa_a mu_a + kappa_b mu_b: 64-point
// Gauss-Legendre in u, periodic trapezoid in phi.
inline double LogVmfProductQuadrature(const VonMisesFisher& a,
                                      const VonMisesFisher& b,
                                      int phi_points = 256) {
  double pole[3];
  for (int i = 0; i < 3; ++i) pole[i] = a.kappa * a.mu[i] + b.kappa * b.mu[i];
  double pn = std::sqrt(pole[0] * pole[0] + pole[1] * pole[1] +
                        pole[2] * pole[2]);
  if (pn < 1e-12) {
    pole[0] = 0, pole[1] = 0, pole[2] = 1, pn = 1;
  }
  for (double& v : pole) v /= pn;
  // Orthonormal frame (e1, e2, pole).
  double e1[3] = {1, 0, 0};
  if (std::abs(pole[0]) > 0.9) e1[0] = 0, e1[1] = 1;
  const double proj = e1[0] * pole[0] + e1[1] * pole[1] + e1[2] * pole[2];
  for (int i = 0; i < 3; ++i) e1[i] -= proj * pole[i];
  const double n1 = std::sqrt(e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]);
  for (double& v : e1) v /= n1;
  const double e2[3] = {pole[1] * e1[2] - pole[2] * e1[1],
                        pole[2] * e1[0] - pole[0] * e1[2],
                        pole[0] * e1[1] - pole[1] * e1[0]};
  auto ring = [&](double u) {
    const double r = std::sqrt(std::max(0.0, 1.0 - u * u));
    double acc = 0.0;
    for (int j = 0; j < phi_points; ++j) {
      const double ph = 2 * std::numbers::pi * j / phi_points;
      const double c = r * std::cos(ph), s = r * std::sin(ph);
      Tensor z({3});
      for (int i = 0; i < 3; ++i) z[i] = c * e1[i] + s * e2[i] + u * pole[i];
      acc += std::exp(VmfLogPdf(a, z) + VmfLogPdf(b, z));
    }
    return acc * 2 * std::numbers::pi / phi_points;
  };
  return std::log(
      boost::math::quadrature::gauss<double, 64>::integrate(ring, -1.0, 1.0));
}

}  // namespace pemb::testing

#endif  // PEMB_TESTS_QUADRATURE_H_
