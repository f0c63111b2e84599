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

#include "pemb/eval.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pemb/errors.h"
#include "pemb/special.h"

namespace pemb {
namespace {

void CheckSquare(const Tensor& scores, std::size_t n) {
  if (scores.rank() != 2 || scores.rows() != n || scores.cols() != n) {
    throw ContractError("score matrix must be [N, N] with N labels");
  }
  if (n < 2) throw DomainError("retrieval metrics need at least two samples");
}

// Best accuracy of predicting `positive[i]` iff value[i] >= t, over t in
// {-inf, midpoints of sorted unique values, +inf}.
double BestThresholdAccuracy(const std::vector<double>& value,
                             const std::vector<bool>& positive) {
  const std::size_t n = value.size();
  if (n == 0) throw DomainError("threshold sweep on an empty set");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });
  std::size_t total_pos = 0;
  for (bool p : positive) total_pos += p;
  // t = -inf: everything predicted positive.
  std::size_t best = total_pos;
  std::size_t neg_below = 0, pos_below = 0;
  for (std::size_t k = 0; k < n;) {
    std::size_t e = k;
    while (e < n && value[order[e]] == value[order[k]]) {
      positive[order[e]] ? ++pos_below : ++neg_below;
      ++e;
    }
    // Threshold just above this group of equal values (a midpoint, or +inf
    // after the last group).
    best = std::max(best, neg_below + (total_pos - pos_below));
    k = e;
  }
  return static_cast<double>(best) / static_cast<double>(n);
}

}  // namespace

Tensor ScoreMatrix(const std::vector<PredictedDistribution>& items,
                   const ScoringKind& kind, Rng& rng) {
  const SetScorer scorer(items, kind, rng);
  const std::size_t n = items.size();
  Tensor out({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = scorer(i, j);
      out.at(i, j) = s;
      out.at(j, i) = s;
    }
  }
  return out;
}

std::vector<std::size_t> RankGallery(const Tensor& scores, std::size_t query) {
  const std::size_t n = scores.cols();
  std::vector<std::size_t> order;
  order.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (j != query) order.push_back(j);
  }
  const auto row = scores.row(query);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  return order;
}

std::vector<bool> NearestNeighborCorrect(const Tensor& scores,
                                         const std::vector<std::size_t>& labels) {
  const std::size_t n = labels.size();
  CheckSquare(scores, n);
  std::vector<bool> out(n);
  for (std::size_t q = 0; q < n; ++q) {
    const auto row = scores.row(q);
    std::size_t best = q == 0 ? 1 : 0;
    for (std::size_t j = best + 1; j < n; ++j) {
      if (j != q && row[j] > row[best]) best = j;
    }
    out[q] = labels[best] == labels[q];
  }
  return out;
}

double RecallAt1(const Tensor& scores, const std::vector<std::size_t>& labels) {
  const auto correct = NearestNeighborCorrect(scores, labels);
  const double hits = static_cast<double>(
      std::count(correct.begin(), correct.end(), true));
  return hits / static_cast<double>(labels.size());
}

double MapAtR(const Tensor& scores, const std::vector<std::size_t>& labels) {
  const std::size_t n = labels.size();
  CheckSquare(scores, n);
  double total = 0.0;
  std::size_t queries = 0;
  for (std::size_t q = 0; q < n; ++q) {
    std::size_t r = 0;
    for (std::size_t j = 0; j < n; ++j) r += (j != q && labels[j] == labels[q]);
    if (r == 0) continue;
    const auto order = RankGallery(scores, q);
    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < r; ++i) {
      if (labels[order[i]] == labels[q]) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(i + 1);
      }
    }
    total += ap / static_cast<double>(r);
    ++queries;
  }
  if (queries == 0) throw DomainError("MAP@R: every class is a singleton");
  return total / static_cast<double>(queries);
}

double RecallAt1(const std::vector<PredictedDistribution>& items,
                 const std::vector<std::size_t>& labels,
                 const ScoringKind& kind, Rng& rng) {
  if (items.size() < 2) throw DomainError("Recall@1 needs at least two samples");
  return RecallAt1(ScoreMatrix(items, kind, rng), labels);
}

double MapAtR(const std::vector<PredictedDistribution>& items,
              const std::vector<std::size_t>& labels, const ScoringKind& kind,
              Rng& rng) {
  if (items.size() < 2) throw DomainError("MAP@R needs at least two samples");
  return MapAtR(ScoreMatrix(items, kind, rng), labels);
}

double VerificationAccuracy(const std::vector<VerificationPair>& pairs,
                            const std::vector<double>& scores) {
  if (pairs.empty()) throw DomainError("verification accuracy: no pairs");
  if (pairs.size() != scores.size()) {
    throw ContractError("verification accuracy: one score per pair required");
  }
  std::vector<bool> same(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) same[i] = pairs[i].same_class;
  return BestThresholdAccuracy(scores, same);
}

double Ceda(const std::vector<ConfidenceRecord>& records) {
  if (records.empty()) throw DomainError("CEDA: no records");
  // "error iff confidence <= t" is "correct iff confidence > t"; the sweep
  // over midpoints covers both strict and non-strict forms.
  std::vector<double> conf(records.size());
  std::vector<bool> correct(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    conf[i] = records[i].confidence;
    correct[i] = records[i].nn_correct;
  }
  return BestThresholdAccuracy(conf, correct);
}

std::vector<CurvePoint> FilterOutCurve(const std::vector<double>& confidence,
                                       const std::vector<double>& rates,
                                       const SubsetMetric& metric) {
  const std::size_t n = confidence.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return confidence[a] < confidence[b];
  });
  std::vector<CurvePoint> out;
  double prev = 0.0;
  for (double alpha : rates) {
    if (!(alpha >= 0.0 && alpha < 1.0) || alpha < prev) {
      throw ContractError("filter-out rates must be ascending in [0, 1)");
    }
    prev = alpha;
    const auto drop = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * alpha));
    std::vector<std::size_t> keep(order.begin() + static_cast<long>(drop),
                                  order.end());
    std::sort(keep.begin(), keep.end());
    out.push_back({alpha, metric(keep)});
  }
  return out;
}

std::vector<double> DefaultFilterRates() {
  std::vector<double> rates;
  for (int i = 0; i < 10; ++i) rates.push_back(i / 10.0);
  return rates;
}

std::vector<double> AverageRanks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  for (std::size_t k = 0; k < n;) {
    std::size_t e = k;
    while (e < n && v[order[e]] == v[order[k]]) ++e;
    // Positions k+1 .. e share their mean.
    const double mean = 0.5 * static_cast<double>(k + 1 + e);
    for (std::size_t t = k; t < e; ++t) ranks[order[t]] = mean;
    k = e;
  }
  return ranks;
}

std::optional<double> Spearman(const std::vector<double>& a,
                               const std::vector<double>& b) {
  if (a.size() != b.size()) throw DomainError("Spearman: length mismatch");
  if (a.size() < 3) throw DomainError("Spearman: need at least 3 items");
  const auto ra = AverageRanks(a);
  const auto rb = AverageRanks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1) / 2;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
    vb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (va == 0.0 || vb == 0.0) return std::nullopt;
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

std::vector<double> BaselineConfidences(const EncoderModel& model,
                                        const Tensor& xs, BaselineKind kind,
                                        double scale) {
  if (kind == BaselineKind::kMagnitude) return PrenormMagnitudes(model, xs);
  if (!model.params.Contains(kTargetsName)) {
    throw ConfigError("max-posterior confidence needs a classification head");
  }
  const TargetEmbeddings targets = TargetsOf(model);
  std::vector<double> out;
  for (const auto& d : EncodeBatch(model, xs)) {
    Tensor mu = MeanOf(d);
    const std::vector<double> unit = Normalized(mu.values());
    const Tensor logits = ClassLogits(targets, Tensor::Vector(unit));
    std::vector<double> scaled(logits.values().begin(), logits.values().end());
    for (double& v : scaled) v *= scale;
    const double mx = *std::max_element(scaled.begin(), scaled.end());
    out.push_back(std::exp(mx - LogSumExp(scaled)));
  }
  return out;
}

Tensor RestrictScores(const Tensor& scores, const std::vector<std::size_t>& keep) {
  Tensor out({keep.size(), keep.size()}, 0.0);
  for (std::size_t a = 0; a < keep.size(); ++a) {
    for (std::size_t b = 0; b < keep.size(); ++b) {
      out.at(a, b) = scores.at(keep[a], keep[b]);
    }
  }
  return out;
}

}  // namespace pemb
