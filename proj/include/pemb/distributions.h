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

#ifndef PEMB_DISTRIBUTIONS_H_
#define PEMB_DISTRIBUTIONS_H_

#include <cstddef>
#include <variant>
#include <vector>

#include "pemb/autodiff.h"
#include "pemb/random.h"
#include "pemb/tensor.h"

namespace pemb {

// Diagonal normal; variance is always carried as log-variance.
struct DiagonalNormal {
  Tensor mu;
  Tensor log_var;
};

struct VonMisesFisher {
  Tensor mu;  // unit norm
  double kappa = 0.0;
};

using PredictedDistribution = std::variant<DiagonalNormal, VonMisesFisher>;

const Tensor& MeanOf(const PredictedDistribution& d);
std::size_t DimOf(const PredictedDistribution& d);

double NormalLogPdf(const DiagonalNormal& d, const Tensor& z);

// log C_D(kappa). kappa == 0 gives the log inverse area of the unit
// (D-1)-sphere.
double VmfLogNormalizer(std::size_t dim, double kappa);

double VmfLogPdf(const VonMisesFisher& d, const Tensor& z);

// mu + sigma * eps.
Tensor SampleNormal(const DiagonalNormal& d, const Tensor& eps);

// Draws t = mu^T z for a vMF in `dim` dimensions (Wood's rejection scheme).
double SampleVmfCosine(std::size_t dim, double kappa, Rng& rng);

// Draws a point from the vMF in canonical orientation: the first axis
// carries sign * t, the remaining axes a uniform tangent direction scaled to
// keep unit norm.
Tensor SampleVmfCanonical(std::size_t dim, double kappa, double sign, Rng& rng);

Tensor SampleVmf(const VonMisesFisher& d, Rng& rng);

double KlNormalToStandard(const DiagonalNormal& d);

// -mean(log sigma^2) for normals, kappa for vMF.
double ConfidenceOf(const PredictedDistribution& d);

// Batched graph forms. Rows index samples; log_var may be [B, D] or [B, 1]
// (one variance shared by every dimension).

// [B] log densities of rows of z under N(mu_b, diag(exp(log_var_b))).
Var NormalLogPdfRows(const Var& mu, const Var& log_var, const Var& z);

// [B] KL(N(mu_b, sigma_b^2) || N(0, I)) in dimension mu.cols().
Var KlNormalToStandardRows(const Var& mu, const Var& log_var);

// Elementwise log C_D(kappa); kappa must be positive.
Var VmfLogNormalizerRows(std::size_t dim, const Var& kappa);

// mu + exp(log_var / 2) * eps with eps held constant.
Var SampleNormalRows(const Var& mu, const Var& log_var, const Tensor& eps);

// Pre-drawn canonical vMF draws together with the reflection sign used for
// each row. Drawing is separated from the graph so callers can replay the
// same draws in finite-difference checks.
struct VmfDraws {
  Tensor canonical;           // [B, D]
  std::vector<double> signs;  // one per row
};

// signs[b] is -1 when mu[b][0] >= 0 and +1 otherwise, which keeps the
// Householder vector away from zero.
VmfDraws DrawVmfRows(const Tensor& mu, const std::vector<double>& kappas,
                     Rng& rng);

// Maps canonical draws onto each row's mean by the Householder reflection
// that sends sign * e_0 to mu. Differentiable in mu only.
Var ReflectVmfRows(const Var& mu, const VmfDraws& draws);

}  // namespace pemb

#endif  // PEMB_DISTRIBUTIONS_H_
