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

#include "pemb/distributions.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pemb/errors.h"
#include "pemb/special.h"

namespace pemb {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void CheckSameDim(const Tensor& a, const Tensor& b, const char* what) {
  if (a.size() != b.size()) {
    throw ContractError(std::string(what) + ": dimension mismatch " +
                        ShapeString(a.shape()) + " vs " +
                        ShapeString(b.shape()));
  }
}

}  // namespace

const Tensor& MeanOf(const PredictedDistribution& d) {
  return std::visit([](const auto& v) -> const Tensor& { return v.mu; }, d);
}

std::size_t DimOf(const PredictedDistribution& d) { return MeanOf(d).size(); }

double NormalLogPdf(const DiagonalNormal& d, const Tensor& z) {
  CheckSameDim(d.mu, z, "NormalLogPdf");
  CheckSameDim(d.mu, d.log_var, "NormalLogPdf");
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double diff = z[i] - d.mu[i];
    acc += kLog2Pi + d.log_var[i] + diff * diff * std::exp(-d.log_var[i]);
  }
  return -0.5 * acc;
}

double VmfLogNormalizer(std::size_t dim, double kappa) {
  if (dim < 2) throw DomainError("VmfLogNormalizer: dimension must be >= 2");
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
    throw DomainError("VmfLogNormalizer: kappa must be finite and >= 0");
  }
  const double nu = 0.5 * static_cast<double>(dim) - 1.0;
  const double half = 0.5 * static_cast<double>(dim);
  if (kappa == 0.0) {
    // I_nu(k) ~ (k/2)^nu / Gamma(nu+1), so k^nu / I_nu(k) -> 2^nu Gamma(nu+1).
    return nu * std::numbers::ln2 + std::lgamma(nu + 1.0) - half * kLog2Pi;
  }
  return nu * std::log(kappa) - half * kLog2Pi - LogBesselI(nu, kappa);
}

double VmfLogPdf(const VonMisesFisher& d, const Tensor& z) {
  CheckSameDim(d.mu, z, "VmfLogPdf");
  const double norm = Norm(z.values());
  if (std::abs(norm - 1.0) > 1e-6) {
    throw ContractError("VmfLogPdf: z must be unit norm, got norm " +
                        std::to_string(norm));
  }
  return VmfLogNormalizer(z.size(), d.kappa) + d.kappa * Dot(d.mu.values(), z.values());
}

Tensor SampleNormal(const DiagonalNormal& d, const Tensor& eps) {
  CheckSameDim(d.mu, eps, "SampleNormal");
  CheckSameDim(d.mu, d.log_var, "SampleNormal");
  Tensor z = d.mu;
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] += std::exp(0.5 * d.log_var[i]) * eps[i];
  }
  return z;
}

double SampleVmfCosine(std::size_t dim, double kappa, Rng& rng) {
  if (dim < 2) throw DomainError("SampleVmf: dimension must be >= 2");
  if (!(kappa > 0.0) || !std::isfinite(kappa)) {
    throw DomainError("SampleVmf: kappa must be finite and > 0");
  }
  const double m1 = static_cast<double>(dim) - 1.0;
  // b = (-2k + sqrt(4k^2 + m1^2)) / m1, written without cancellation.
  const double b = m1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + m1 * m1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + m1 * std::log(1.0 - x0 * x0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double beta = rng.Beta(0.5 * m1, 0.5 * m1);
    const double w = (1.0 - (1.0 + b) * beta) / (1.0 - (1.0 - b) * beta);
    const double u = rng.UniformOpen();
    if (kappa * w + m1 * std::log(1.0 - x0 * w) - c >= std::log(u)) {
      return std::clamp(w, -1.0, 1.0);
    }
  }
  throw NumericalError("SampleVmf: rejection sampler exceeded 1000 tries");
}

Tensor SampleVmfCanonical(std::size_t dim, double kappa, double sign,
                          Rng& rng) {
  const double w = SampleVmfCosine(dim, kappa, rng);
  const std::vector<double> v = rng.UnitVector(dim - 1);
  const double r = std::sqrt(std::max(0.0, 1.0 - w * w));
  Tensor z({dim});
  z[0] = sign * w;
  for (std::size_t i = 1; i < dim; ++i) z[i] = r * v[i - 1];
  return z;
}

namespace {

double ReflectionSign(double mu0) { return mu0 >= 0.0 ? -1.0 : 1.0; }

// Householder reflection with u = sign * e_0 - mu applied to z.
void Reflect(std::span<const double> mu, double sign, std::span<double> z) {
  double dot = sign * z[0];
  double nsq = (sign - mu[0]) * (sign - mu[0]);
  dot -= mu[0] * z[0];
  for (std::size_t i = 1; i < z.size(); ++i) {
    dot -= mu[i] * z[i];
    nsq += mu[i] * mu[i];
  }
  const double f = 2.0 * dot / nsq;
  z[0] -= f * (sign - mu[0]);
  for (std::size_t i = 1; i < z.size(); ++i) z[i] += f * mu[i];
}

}  // namespace

Tensor SampleVmf(const VonMisesFisher& d, Rng& rng) {
  const double sign = ReflectionSign(d.mu[0]);
  Tensor z = SampleVmfCanonical(d.mu.size(), d.kappa, sign, rng);
  Reflect(d.mu.values(), sign, z.values());
  return z;
}

double KlNormalToStandard(const DiagonalNormal& d) {
  CheckSameDim(d.mu, d.log_var, "KlNormalToStandard");
  double acc = 0.0;
  for (std::size_t i = 0; i < d.mu.size(); ++i) {
    acc += std::exp(d.log_var[i]) + d.mu[i] * d.mu[i] - 1.0 - d.log_var[i];
  }
  return 0.5 * acc;
}

double ConfidenceOf(const PredictedDistribution& d) {
  if (const auto* n = std::get_if<DiagonalNormal>(&d)) {
    double acc = 0.0;
    for (double lv : n->log_var.values()) acc += lv;
    return -acc / static_cast<double>(n->log_var.size());
  }
  return std::get<VonMisesFisher>(d).kappa;
}

// Graph forms.

namespace {

// Expands a [B, 1] log-variance to [B, D] so per-dimension sums count every
// dimension.
Var ExpandColumns(const Var& log_var, std::size_t cols) {
  if (log_var.value().cols() == cols) return log_var;
  Graph& g = *log_var.graph;
  return log_var + g.Constant(Tensor({log_var.value().rows(), cols}, 0.0));
}

}  // namespace

Var NormalLogPdfRows(const Var& mu, const Var& log_var, const Var& z) {
  const std::size_t dim = mu.value().cols();
  const Var lv = ExpandColumns(log_var, dim);
  const Var diff = z - mu;
  const Var terms = lv + diff * diff * Exp(-lv);
  return (SumLast(terms) + kLog2Pi * static_cast<double>(dim)) * -0.5;
}

Var KlNormalToStandardRows(const Var& mu, const Var& log_var) {
  const Var lv = ExpandColumns(log_var, mu.value().cols());
  return SumLast(Exp(lv) + mu * mu - lv - 1.0) * 0.5;
}

Var VmfLogNormalizerRows(std::size_t dim, const Var& kappa) {
  if (dim < 2) throw DomainError("VmfLogNormalizer: dimension must be >= 2");
  const double nu = 0.5 * static_cast<double>(dim) - 1.0;
  const double half = 0.5 * static_cast<double>(dim);
  Var out = -LogBesselI(nu, kappa) - half * kLog2Pi;
  if (nu != 0.0) out = out + Log(kappa) * nu;
  return out;
}

Var SampleNormalRows(const Var& mu, const Var& log_var, const Tensor& eps) {
  Graph& g = *mu.graph;
  return mu + Exp(log_var * 0.5) * g.Constant(eps);
}

VmfDraws DrawVmfRows(const Tensor& mu, const std::vector<double>& kappas,
                     Rng& rng) {
  const std::size_t rows = mu.rows();
  const std::size_t dim = mu.cols();
  if (kappas.size() != rows) {
    throw ContractError("DrawVmfRows: one kappa per row required");
  }
  VmfDraws draws{Tensor({rows, dim}), std::vector<double>(rows)};
  for (std::size_t b = 0; b < rows; ++b) {
    draws.signs[b] = ReflectionSign(mu.at(b, 0));
    const Tensor z = SampleVmfCanonical(dim, kappas[b], draws.signs[b], rng);
    std::copy(z.values().begin(), z.values().end(),
              draws.canonical.row(b).begin());
  }
  return draws;
}

Var ReflectVmfRows(const Var& mu, const VmfDraws& draws) {
  Graph& g = *mu.graph;
  const std::size_t rows = mu.value().rows();
  const std::size_t dim = mu.value().cols();
  Tensor axis({rows, dim}, 0.0);
  for (std::size_t b = 0; b < rows; ++b) axis.at(b, 0) = draws.signs[b];
  const Var u = g.Constant(axis) - mu;
  const Var z0 = g.Constant(draws.canonical);
  const Var factor = SumLast(u * z0) * 2.0 / SumLast(u * u);
  return z0 - u * Reshape(factor, {rows, 1});
}

}  // namespace pemb
