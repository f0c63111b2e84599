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

#ifndef PEMB_HARNESS_H_
#define PEMB_HARNESS_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pemb/config.h"
#include "pemb/eval.h"
#include "pemb/train.h"

namespace pemb {

enum class ConfidenceSource { kMethod, kMaxPosterior, kMagnitude };

std::string ConfidenceSourceName(ConfidenceSource source);

// Per-sample confidence of a trained model. kMethod is the predicted
// distribution's confidence, or the max posterior for deterministic
// methods. kMaxPosterior needs a classification head (ConfigError).
std::vector<double> Confidences(const RunConfig& config,
                                const EncoderModel& model, Method method,
                                ConfidenceSource source, const Tensor& xs);

struct EvalResult {
  double recall_at_1 = 0.0;
  double map_at_r = 0.0;
  double verification_accuracy = 0.0;
  double ceda = 0.0;
  std::optional<double> spearman;  // corrupted split; absent if undefined
  std::vector<CurvePoint> filter_out;  // MAP@R on the corrupted split
};

// Retrieval, verification and CEDA on the clean test split; Spearman against
// quality and the filter-out curve on the corrupted test split.
EvalResult Evaluate(const RunConfig& config, const PreparedData& data,
                    const EncoderModel& model, Method method,
                    const ScoringKind& scoring, std::uint64_t seed,
                    ConfidenceSource source = ConfidenceSource::kMethod);

// Filter-out MAP@R curve and Spearman on the corrupted test split for one
// confidence source.
struct ConfidenceCurve {
  ConfidenceSource source;
  std::vector<CurvePoint> points;
  std::optional<double> spearman;
};
ConfidenceCurve CorruptedConfidenceCurve(const RunConfig& config,
                                         const PreparedData& data,
                                         const EncoderModel& model,
                                         Method method,
                                         const ScoringKind& scoring,
                                         ConfidenceSource source,
                                         std::uint64_t seed);

inline constexpr std::size_t kNumMetrics = 5;
// recall_at_1, map_at_r, verification_accuracy, ceda, spearman.
const std::array<std::string, kNumMetrics>& MetricNames();

struct ReportRow {
  std::string method;
  std::string axis_value;
  std::string seed;    // decimal seed, or "all" on aggregate rows
  std::string status;  // ok, error: ..., skipped: ..., aggregate
  std::array<std::optional<double>, kNumMetrics> values;
  std::array<std::optional<double>, kNumMetrics> stds;  // aggregate rows only
  std::vector<CurvePoint> filter_out;  // not written to the CSV
};

struct BenchmarkReport {
  std::vector<ReportRow> rows;
  // method,axis_value,seed,status, the metrics, then <metric>_std columns.
  std::string ToCsv() const;
};

// Mean and sample standard deviation of every metric over the ok rows.
ReportRow Aggregate(const std::string& method, const std::string& axis_value,
                    const std::vector<ReportRow>& seed_rows);

using ProgressFn = std::function<void(const std::string&)>;

// Trains every method for every seed and evaluates it. A failing run is
// recorded as an error row; the rest continue. Each method group ends with
// its aggregate row. Random search runs first when config.search has trials.
BenchmarkReport RunBenchmark(const RunConfig& config,
                             const std::vector<Method>& methods,
                             const ProgressFn& progress = nullptr);

enum class AblationAxis { kDistribution, kScoring, kTarget };

std::string AxisName(AblationAxis axis);
AblationAxis ParseAxis(const std::string& name);

// One planned cell of an ablation: an axis value to run, or a skip with
// its reason.
struct AblationCell {
  std::string axis_value;
  std::optional<std::string> skip_reason;
};

// Axis values evaluated for a method, including documented
// skips. ConfigError when the axis does not apply to the method at all.
std::vector<AblationCell> AblationPlan(Method method, AblationAxis axis);

// Runs the plan. Scoring cells evaluate one trained model per seed under
// each scoring; distribution and target cells retrain.
BenchmarkReport RunAblation(const RunConfig& config, Method method,
                            AblationAxis axis,
                            const ProgressFn& progress = nullptr);

}  // namespace pemb

#endif  // PEMB_HARNESS_H_
