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

#ifndef PEMB_EVAL_H_
#define PEMB_EVAL_H_

#include <cstddef>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "pemb/data.h"
#include "pemb/distributions.h"
#include "pemb/encoder.h"
#include "pemb/random.h"
#include "pemb/scoring.h"
#include "pemb/tensor.h"

namespace pemb {

// [N, N] pairwise scores of a set; the diagonal is never consulted.
Tensor ScoreMatrix(const std::vector<PredictedDistribution>& items,
                   const ScoringKind& kind, Rng& rng);

// Gallery order for one query: descending score, ties by ascending index,
// query excluded.
std::vector<std::size_t> RankGallery(const Tensor& scores, std::size_t query);

// Whether each query's top-ranked gallery item shares its label.
std::vector<bool> NearestNeighborCorrect(const Tensor& scores,
                                         const std::vector<std::size_t>& labels);

// Both throw DomainError on fewer than two samples; MapAtR also when no
// query has a same-class gallery item.
double RecallAt1(const Tensor& scores, const std::vector<std::size_t>& labels);
double MapAtR(const Tensor& scores, const std::vector<std::size_t>& labels);

double RecallAt1(const std::vector<PredictedDistribution>& items,
                 const std::vector<std::size_t>& labels,
                 const ScoringKind& kind, Rng& rng);
double MapAtR(const std::vector<PredictedDistribution>& items,
              const std::vector<std::size_t>& labels, const ScoringKind& kind,
              Rng& rng);

// Best accuracy of "same class iff score >= t" over t in {-inf, midpoints of
// sorted unique scores, +inf}.
double VerificationAccuracy(const std::vector<VerificationPair>& pairs,
                            const std::vector<double>& scores);

struct ConfidenceRecord {
  double confidence = 0.0;
  bool nn_correct = false;
  std::optional<double> quality;
};

// Best accuracy of "error iff confidence <= t" over the same threshold
// sweep as VerificationAccuracy.
double Ceda(const std::vector<ConfidenceRecord>& records);

// Metric over the kept sample indices; nullopt when the subset is too small.
using SubsetMetric =
    std::function<std::optional<double>(const std::vector<std::size_t>&)>;

struct CurvePoint {
  double alpha = 0.0;
  std::optional<double> value;
};

// For each rate drops floor(N alpha) lowest-confidence samples (ties by
// ascending index) and evaluates the metric on the rest, in index order.
std::vector<CurvePoint> FilterOutCurve(const std::vector<double>& confidence,
                                       const std::vector<double>& rates,
                                       const SubsetMetric& metric);

// Default filter-out grid 0, 0.1, ..., 0.9.
std::vector<double> DefaultFilterRates();

// Pearson correlation of average ranks; nullopt when either side is
// constant. Throws DomainError on mismatched lengths or fewer than 3 items.
std::optional<double> Spearman(const std::vector<double>& a,
                               const std::vector<double>& b);

// Average (1-based) ranks with ties sharing the mean of their positions.
std::vector<double> AverageRanks(const std::vector<double>& v);

enum class BaselineKind { kMaxPosterior, kMagnitude };

// Max over classes of softmax(scale * class_logits), or the pre-norm mean
// magnitude. kMaxPosterior needs a classification head (ConfigError).
std::vector<double> BaselineConfidences(const EncoderModel& model,
                                        const Tensor& xs, BaselineKind kind,
                                        double scale);

// Sub-matrix of scores restricted to `keep`, in the given order.
Tensor RestrictScores(const Tensor& scores, const std::vector<std::size_t>& keep);

}  // namespace pemb

#endif  // PEMB_EVAL_H_
