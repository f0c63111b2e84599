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

#ifndef PEMB_SCORING_H_
#define PEMB_SCORING_H_

#include <cstddef>
#include <string>
#include <vector>

#include "pemb/distributions.h"
#include "pemb/random.h"
#include "pemb/tensor.h"

namespace pemb {

enum class DistanceMetric {
  kCosine,
  kL2,
  kSquaredL2,  // test mode for moment checks
};

enum class ScoringType { kMeanCosine, kMeanL2, kSampled, kMls };

struct ScoringKind {
  ScoringType type = ScoringType::kMeanCosine;
  std::size_t samples = 8;
  DistanceMetric metric = DistanceMetric::kCosine;

  static ScoringKind MeanCosine() { return {ScoringType::kMeanCosine}; }
  static ScoringKind MeanL2() { return {ScoringType::kMeanL2}; }
  static ScoringKind Sampled(std::size_t k, DistanceMetric metric) {
    return {ScoringType::kSampled, k, metric};
  }
  static ScoringKind Mls() { return {ScoringType::kMls}; }

  // mean_cosine, mean_l2, sampled_cosine, sampled_l2, mls.
  std::string Name() const;
  bool operator==(const ScoringKind&) const = default;
};

// Inverse of ScoringKind::Name; throws ConfigError on unknown names.
ScoringKind ParseScoringKind(const std::string& name, std::size_t samples = 8);

// All scores are oriented so that larger means more similar.
double MeanScore(const PredictedDistribution& a, const PredictedDistribution& b,
                 DistanceMetric metric);

double SampledScore(const PredictedDistribution& a,
                    const PredictedDistribution& b, std::size_t k,
                    DistanceMetric metric, Rng& rng);

// log of the integral of p_a * p_b.
double MlsNormal(const DiagonalNormal& a, const DiagonalNormal& b);
double MlsVmf(const VonMisesFisher& a, const VonMisesFisher& b);

// Throws ConfigError when the kind does not fit the distributions.
double Score(const PredictedDistribution& a, const PredictedDistribution& b,
             const ScoringKind& kind, Rng& rng);

std::vector<Tensor> DrawSamples(const PredictedDistribution& d, std::size_t k,
                                Rng& rng);

// Scores every pair of a fixed set. Sampled kinds draw their K samples per
// item once, so pair scores are symmetric and independent of query order.
class SetScorer {
 public:
  SetScorer(std::vector<PredictedDistribution> items, ScoringKind kind,
            Rng& rng);

  std::size_t size() const { return items_.size(); }
  double operator()(std::size_t i, std::size_t j) const;

 private:
  std::vector<PredictedDistribution> items_;
  ScoringKind kind_;
  std::vector<std::vector<Tensor>> samples_;
  // Mean of normalized samples (sampled cosine) or normalized mean.
  std::vector<Tensor> directions_;
};

}  // namespace pemb

#endif  // PEMB_SCORING_H_
