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

#ifndef PEMB_SPECIAL_H_
#define PEMB_SPECIAL_H_

#include <span>

namespace pemb {

// log I_order(x), the modified Bessel function of the first kind, evaluated
// without forming I itself. Uses the ascending power series for
// x < max(30, 2 * order) and the uniform (Debye) asymptotic expansion
// otherwise. Accurate to ~1e-12 absolute in the log for order <= 256 and
// x <= 1e4. Returns -inf for x == 0 and order > 0.
// Throws DomainError for negative order or negative x.
double LogBesselI(double order, double x);

// I_{order+1}(x) / I_order(x) by continued fraction (modified Lentz).
double BesselIRatio(double order, double x);

// d/dx log I_order(x) = I_{order+1}(x)/I_order(x) + order/x.
double LogBesselIDerivative(double order, double x);

// log(sum(exp(v))) with the maximum factored out.
// Throws DomainError on empty input.
double LogSumExp(std::span<const double> v);

}  // namespace pemb

#endif  // PEMB_SPECIAL_H_
