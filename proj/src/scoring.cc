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

#include "pemb/scoring.h"

#include <algorithm>
#include <cmath>

#include "pemb/errors.h"

namespace pemb {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void CheckDims(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw ContractError("score: dimension mismatch " + ShapeString(a.shape()) +
                        " vs " + ShapeString(b.shape()));
  }
}

double Distance(std::span<const double> a, std::span<const double> b,
                DistanceMetric metric) {
  switch (metric) {
    case DistanceMetric::kCosine:
      return Dot(a, b) / (Norm(a) * Norm(b));
    case DistanceMetric::kL2:
    case DistanceMetric::kSquaredL2: {
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        acc += (a[i] - b[i]) * (a[i] - b[i]);
      }
      return metric == DistanceMetric::kL2 ? -std::sqrt(acc) : -acc;
    }
  }
  return 0.0;
}

// Mean of the normalized samples. The average pairwise cosine of two sample
// sets is the dot product of these.
Tensor MeanDirection(const std::vector<Tensor>& samples) {
  Tensor acc(samples.front().shape(), 0.0);
  for (const Tensor& s : samples) {
    const std::vector<double> u = Normalized(s.values());
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += u[i];
  }
  for (double& v : acc.values()) v /= static_cast<double>(samples.size());
  return acc;
}

double SampleSetScore(const std::vector<Tensor>& a,
                      const std::vector<Tensor>& b, DistanceMetric metric) {
  double acc = 0.0;
  for (const Tensor& x : a) {
    for (const Tensor& y : b) acc += Distance(x.values(), y.values(), metric);
  }
  return acc / static_cast<double>(a.size() * b.size());
}

}  // namespace

std::string ScoringKind::Name() const {
  switch (type) {
    case ScoringType::kMeanCosine:
      return "mean_cosine";
    case ScoringType::kMeanL2:
      return "mean_l2";
    case ScoringType::kMls:
      return "mls";
    case ScoringType::kSampled:
      switch (metric) {
        case DistanceMetric::kCosine:
          return "sampled_cosine";
        case DistanceMetric::kL2:
          return "sampled_l2";
        case DistanceMetric::kSquaredL2:
          return "sampled_squared_l2";
      }
  }
  return "unknown";
}

ScoringKind ParseScoringKind(const std::string& name, std::size_t samples) {
  if (name == "mean_cosine") return ScoringKind::MeanCosine();
  if (name == "mean_l2") return ScoringKind::MeanL2();
  if (name == "mls") return ScoringKind::Mls();
  if (samples < 1) throw ConfigError("scoring: sample count must be >= 1");
  if (name == "sampled_cosine") {
    return ScoringKind::Sampled(samples, DistanceMetric::kCosine);
  }
  if (name == "sampled_l2") {
    return ScoringKind::Sampled(samples, DistanceMetric::kL2);
  }
  throw ConfigError("unknown scoring kind '" + name + "'");
}

double MeanScore(const PredictedDistribution& a, const PredictedDistribution& b,
                 DistanceMetric metric) {
  const Tensor& ma = MeanOf(a);
  const Tensor& mb = MeanOf(b);
  CheckDims(ma, mb);
  if (metric == DistanceMetric::kCosine &&
      (Norm(ma.values()) == 0.0 || Norm(mb.values()) == 0.0)) {
    throw DegenerateInputError("cosine score of a zero-norm mean");
  }
  return Distance(ma.values(), mb.values(), metric);
}

std::vector<Tensor> DrawSamples(const PredictedDistribution& d, std::size_t k,
                                Rng& rng) {
  if (k < 1) throw ContractError("DrawSamples: k must be >= 1");
  std::vector<Tensor> out;
  out.reserve(k);
  if (const auto* n = std::get_if<DiagonalNormal>(&d)) {
    for (std::size_t i = 0; i < k; ++i) {
      out.push_back(
          SampleNormal(*n, Tensor::Vector(rng.NormalVector(n->mu.size()))));
    }
  } else {
    const auto& v = std::get<VonMisesFisher>(d);
    for (std::size_t i = 0; i < k; ++i) out.push_back(SampleVmf(v, rng));
  }
  return out;
}

double SampledScore(const PredictedDistribution& a,
                    const PredictedDistribution& b, std::size_t k,
                    DistanceMetric metric, Rng& rng) {
  CheckDims(MeanOf(a), MeanOf(b));
  const auto sa = DrawSamples(a, k, rng);
  const auto sb = DrawSamples(b, k, rng);
  if (metric == DistanceMetric::kCosine) {
    return Dot(MeanDirection(sa).values(), MeanDirection(sb).values());
  }
  return SampleSetScore(sa, sb, metric);
}

double MlsNormal(const DiagonalNormal& a, const DiagonalNormal& b) {
  CheckDims(a.mu, b.mu);
  CheckDims(a.log_var, b.log_var);
  CheckDims(a.mu, a.log_var);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.mu.size(); ++i) {
    const double var = std::exp(a.log_var[i]) + std::exp(b.log_var[i]);
    const double diff = a.mu[i] - b.mu[i];
    acc += diff * diff / var + std::log(var) + kLog2Pi;
  }
  return -0.5 * acc;
}

double MlsVmf(const VonMisesFisher& a, const VonMisesFisher& b) {
  CheckDims(a.mu, b.mu);
  const std::size_t dim = a.mu.size();
  double sq = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double v = a.kappa * a.mu[i] + b.kappa * b.mu[i];
    sq += v * v;
  }
  return VmfLogNormalizer(dim, a.kappa) + VmfLogNormalizer(dim, b.kappa) -
         VmfLogNormalizer(dim, std::sqrt(sq));
}

double Score(const PredictedDistribution& a, const PredictedDistribution& b,
             const ScoringKind& kind, Rng& rng) {
  switch (kind.type) {
    case ScoringType::kMeanCosine:
      return MeanScore(a, b, DistanceMetric::kCosine);
    case ScoringType::kMeanL2:
      return MeanScore(a, b, DistanceMetric::kL2);
    case ScoringType::kSampled:
      if (kind.samples < 1) throw ConfigError("scoring: K must be >= 1");
      return SampledScore(a, b, kind.samples, kind.metric, rng);
    case ScoringType::kMls:
      if (a.index() != b.index()) {
        throw ConfigError("MLS scoring between different distribution families");
      }
      if (const auto* n = std::get_if<DiagonalNormal>(&a)) {
        return MlsNormal(*n, std::get<DiagonalNormal>(b));
      }
      return MlsVmf(std::get<VonMisesFisher>(a), std::get<VonMisesFisher>(b));
  }
  throw ConfigError("unknown scoring kind");
}

SetScorer::SetScorer(std::vector<PredictedDistribution> items,
                     ScoringKind kind, Rng& rng)
    : items_(std::move(items)), kind_(kind) {
  if (kind_.type == ScoringType::kMls) {
    for (const auto& d : items_) {
      if (d.index() != items_.front().index()) {
        throw ConfigError("MLS scoring between different distribution families");
      }
    }
  }
  if (kind_.type == ScoringType::kSampled) {
    if (kind_.samples < 1) throw ConfigError("scoring: K must be >= 1");
    samples_.reserve(items_.size());
    for (const auto& d : items_) {
      samples_.push_back(DrawSamples(d, kind_.samples, rng));
    }
    if (kind_.metric == DistanceMetric::kCosine) {
      for (const auto& s : samples_) directions_.push_back(MeanDirection(s));
    }
  } else if (kind_.type == ScoringType::kMeanCosine) {
    for (const auto& d : items_) {
      if (Norm(MeanOf(d).values()) == 0.0) {
        throw DegenerateInputError("cosine score of a zero-norm mean");
      }
      directions_.push_back(Tensor::Vector(Normalized(MeanOf(d).values())));
    }
  }
}

double SetScorer::operator()(std::size_t i, std::size_t j) const {
  switch (kind_.type) {
    case ScoringType::kMeanCosine:
      return Dot(directions_[i].values(), directions_[j].values());
    case ScoringType::kMeanL2:
      return MeanScore(items_[i], items_[j], DistanceMetric::kL2);
    case ScoringType::kSampled:
      if (kind_.metric == DistanceMetric::kCosine) {
        return Dot(directions_[i].values(), directions_[j].values());
      }
      // Fixed operand order keeps the summation, and so the score,
      // exactly symmetric.
      return SampleSetScore(samples_[std::min(i, j)], samples_[std::max(i, j)],
                            kind_.metric);
    case ScoringType::kMls:
      if (const auto* n = std::get_if<DiagonalNormal>(&items_[i])) {
        return MlsNormal(*n, std::get<DiagonalNormal>(items_[j]));
      }
      return MlsVmf(std::get<VonMisesFisher>(items_[i]),
                    std::get<VonMisesFisher>(items_[j]));
  }
  return 0.0;
}

}  // namespace pemb
