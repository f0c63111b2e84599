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

#include "pemb/harness.h"

#include <cmath>
#include <cstdio>
#include <map>
#include <utility>

#include "pemb/errors.h"

namespace pemb {
namespace {

std::string CsvSafe(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  }
  return s;
}

std::string FormatValue(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", *v);
  return buf;
}

std::optional<double> SubsetMapAtR(const Tensor& scores,
                                   const std::vector<std::size_t>& labels,
                                   const std::vector<std::size_t>& keep) {
  if (keep.size() < 2) return std::nullopt;
  std::vector<std::size_t> sub;
  sub.reserve(keep.size());
  for (std::size_t k : keep) sub.push_back(labels[k]);
  try {
    return MapAtR(RestrictScores(scores, keep), sub);
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

ReportRow MetricsRow(const std::string& method, const std::string& axis_value,
                     std::uint64_t seed, const EvalResult& r) {
  ReportRow row;
  row.method = method;
  row.axis_value = axis_value;
  row.seed = std::to_string(seed);
  row.status = "ok";
  row.values = {r.recall_at_1, r.map_at_r, r.verification_accuracy, r.ceda,
                r.spearman};
  row.filter_out = r.filter_out;
  return row;
}

ReportRow StatusRow(const std::string& method, const std::string& axis_value,
                    const std::string& seed, const std::string& status) {
  ReportRow row;
  row.method = method;
  row.axis_value = axis_value;
  row.seed = seed;
  row.status = CsvSafe(status);
  return row;
}

// Trained models of from-scratch methods, reused as pretraining sources.
// Only valid while nothing but the method differs between runs.
class SourceCache {
 public:
  explicit SourceCache(bool enabled) : enabled_(enabled) {}

  const TrainResult* Find(Method method, std::uint64_t seed) const {
    if (!enabled_) return nullptr;
    auto it = models_.find({method, seed});
    return it == models_.end() ? nullptr : &it->second;
  }

  void Store(Method method, std::uint64_t seed, const TrainResult& result) {
    if (enabled_ && !SpecOf(method).needs_pretrain) {
      models_.emplace(std::make_pair(method, seed), result);
    }
  }

  // The source a method's pretraining stage would use, trained on demand.
  const TrainResult* SourceFor(const RunConfig& config, const PreparedData& data,
                               Method method, std::uint64_t seed) {
    if (!enabled_) return nullptr;
    Method source;
    if (method == Method::kDulRegCls) {
      source = Method::kDulCls;
    } else if (SpecOf(method).needs_pretrain) {
      source = config.pretrain_source;
    } else {
      return nullptr;
    }
    if (const TrainResult* hit = Find(source, seed)) return hit;
    RunConfig c = config;
    c.distribution.reset();
    c.scoring.reset();
    Store(source, seed, Train(c, data, source, seed));
    return Find(source, seed);
  }

 private:
  bool enabled_;
  std::map<std::pair<Method, std::uint64_t>, TrainResult> models_;
};

bool CacheSafe(const RunConfig& config) {
  return !config.scoring && !config.distribution &&
         !(config.search && config.search->trials > 0);
}

void Report(const ProgressFn& progress, const std::string& message) {
  if (progress) progress(message);
}

}  // namespace

std::string ConfidenceSourceName(ConfidenceSource source) {
  switch (source) {
    case ConfidenceSource::kMethod:
      return "method";
    case ConfidenceSource::kMaxPosterior:
      return "max_posterior";
    case ConfidenceSource::kMagnitude:
      return "magnitude";
  }
  return "unknown";
}

std::vector<double> Confidences(const RunConfig& config,
                                const EncoderModel& model, Method method,
                                ConfidenceSource source, const Tensor& xs) {
  if (source == ConfidenceSource::kMagnitude) {
    return BaselineConfidences(model, xs, BaselineKind::kMagnitude,
                               config.loss.scale);
  }
  if (source == ConfidenceSource::kMaxPosterior || SpecOf(method).deterministic) {
    return BaselineConfidences(model, xs, BaselineKind::kMaxPosterior,
                               config.loss.scale);
  }
  std::vector<double> out;
  for (const auto& d : EncodeBatch(model, xs)) out.push_back(ConfidenceOf(d));
  return out;
}

ConfidenceCurve CorruptedConfidenceCurve(const RunConfig& config,
                                         const PreparedData& data,
                                         const EncoderModel& model,
                                         Method method,
                                         const ScoringKind& scoring,
                                         ConfidenceSource source,
                                         std::uint64_t seed) {
  Rng rng = Rng(seed).Derive("test.corrupted");
  const Tensor scores =
      ScoreMatrix(EncodeBatch(model, data.corrupted_x), scoring, rng);
  const auto conf = Confidences(config, model, method, source, data.corrupted_x);
  ConfidenceCurve curve{source, {}, Spearman(conf, data.quality)};
  curve.points = FilterOutCurve(
      conf, DefaultFilterRates(), [&](const std::vector<std::size_t>& keep) {
        return SubsetMapAtR(scores, data.test_y, keep);
      });
  return curve;
}

EvalResult Evaluate(const RunConfig& config, const PreparedData& data,
                    const EncoderModel& model, Method method,
                    const ScoringKind& scoring, std::uint64_t seed,
                    ConfidenceSource source) {
  Rng rng = Rng(seed).Derive("test.clean");
  const Tensor scores = ScoreMatrix(EncodeBatch(model, data.test_x), scoring, rng);
  EvalResult r;
  r.recall_at_1 = RecallAt1(scores, data.test_y);
  r.map_at_r = MapAtR(scores, data.test_y);
  std::vector<double> pair_scores;
  for (const VerificationPair& p : data.test_pairs.pairs) {
    pair_scores.push_back(scores.at(p.i, p.j));
  }
  r.verification_accuracy = VerificationAccuracy(data.test_pairs.pairs, pair_scores);
  const auto conf = Confidences(config, model, method, source, data.test_x);
  const auto correct = NearestNeighborCorrect(scores, data.test_y);
  std::vector<ConfidenceRecord> records;
  for (std::size_t i = 0; i < conf.size(); ++i) {
    records.push_back({conf[i], correct[i], std::nullopt});
  }
  r.ceda = Ceda(records);
  const ConfidenceCurve curve =
      CorruptedConfidenceCurve(config, data, model, method, scoring, source, seed);
  r.spearman = curve.spearman;
  r.filter_out = curve.points;
  return r;
}

const std::array<std::string, kNumMetrics>& MetricNames() {
  static const std::array<std::string, kNumMetrics> names = {
      "recall_at_1", "map_at_r", "verification_accuracy", "ceda", "spearman"};
  return names;
}

std::string BenchmarkReport::ToCsv() const {
  std::string out = "method,axis_value,seed,status";
  for (const auto& n : MetricNames()) out += "," + n;
  for (const auto& n : MetricNames()) out += "," + n + "_std";
  out += "\n";
  for (const ReportRow& row : rows) {
    out += row.method + "," + row.axis_value + "," + row.seed + "," + row.status;
    for (const auto& v : row.values) out += "," + FormatValue(v);
    for (const auto& v : row.stds) out += "," + FormatValue(v);
    out += "\n";
  }
  return out;
}

ReportRow Aggregate(const std::string& method, const std::string& axis_value,
                    const std::vector<ReportRow>& seed_rows) {
  ReportRow agg = StatusRow(method, axis_value, "all", "aggregate");
  for (std::size_t m = 0; m < kNumMetrics; ++m) {
    std::vector<double> xs;
    for (const ReportRow& r : seed_rows) {
      if (r.status == "ok" && r.values[m]) xs.push_back(*r.values[m]);
    }
    if (xs.empty()) continue;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    agg.values[m] = mean;
    agg.stds[m] = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1))
                                : 0.0;
  }
  return agg;
}

BenchmarkReport RunBenchmark(const RunConfig& config,
                             const std::vector<Method>& methods,
                             const ProgressFn& progress) {
  config.Validate();
  if (methods.empty()) throw ConfigError("bench: no methods given");
  const PreparedData data = PrepareData(config.data);
  SourceCache cache(CacheSafe(config));
  BenchmarkReport report;
  for (Method method : methods) {
    const std::string name = MethodName(method);
    RunConfig mc = config;
    mc.method = name;
    std::vector<ReportRow> rows;
    try {
      if (mc.search && mc.search->trials > 0) {
        Report(progress, name + ": random search over " +
                             std::to_string(mc.search->trials) + " trials");
        mc = RandomSearch(mc, data, method).best;
      }
      EncoderConfigFor(mc, method);
    } catch (const Error& e) {
      for (std::uint64_t seed : config.seeds) {
        rows.push_back(StatusRow(name, "-", std::to_string(seed),
                                 std::string("error: ") + e.what()));
      }
      report.rows.insert(report.rows.end(), rows.begin(), rows.end());
      report.rows.push_back(Aggregate(name, "-", rows));
      continue;
    }
    for (std::uint64_t seed : mc.seeds) {
      Report(progress, name + " seed " + std::to_string(seed));
      try {
        const TrainResult* source = cache.SourceFor(mc, data, method, seed);
        const TrainResult* own = cache.Find(method, seed);
        const TrainResult result =
            own ? *own : Train(mc, data, method, seed, source);
        if (!own) cache.Store(method, seed, result);
        rows.push_back(MetricsRow(
            name, "-", seed,
            Evaluate(mc, data, result.model, method, ScoringFor(mc, method), seed)));
      } catch (const Error& e) {
        rows.push_back(StatusRow(name, "-", std::to_string(seed),
                                 std::string("error: ") + e.what()));
      }
    }
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
    report.rows.push_back(Aggregate(name, "-", rows));
  }
  return report;
}

std::string AxisName(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::kDistribution:
      return "distribution";
    case AblationAxis::kScoring:
      return "scoring";
    case AblationAxis::kTarget:
      return "target";
  }
  return "unknown";
}

AblationAxis ParseAxis(const std::string& name) {
  if (name == "distribution") return AblationAxis::kDistribution;
  if (name == "scoring") return AblationAxis::kScoring;
  if (name == "target") return AblationAxis::kTarget;
  throw ConfigError("unknown ablation axis: " + name);
}

std::vector<AblationCell> AblationPlan(Method method, AblationAxis axis) {
  const std::string name = MethodName(method);
  switch (axis) {
    case AblationAxis::kScoring:
      switch (method) {
        case Method::kHib:
          return {{"mean_l2", {}}, {"sampled_l2", {}}, {"mls", {}}};
        case Method::kPfe:
        case Method::kScf:
          return {{"mean_cosine",
                   "only the uncertainty head trains so mean cosine equals the "
                   "pretrained deterministic model"},
                  {"sampled_cosine", {}},
                  {"mls", {}}};
        case Method::kDulCls:
        case Method::kDulReg:
        case Method::kVmfFl:
        case Method::kVmfLoss:
          return {{"mean_cosine", {}}, {"sampled_cosine", {}}, {"mls", {}}};
        default:
          break;
      }
      break;
    case AblationAxis::kDistribution:
      switch (method) {
        case Method::kHib:
          return {{"-",
                   "hib uses unnormalized embeddings which the vMF distribution "
                   "cannot model"}};
        case Method::kVmfLoss:
          return {{"-",
                   "the vmf_loss objective has no normal-distribution "
                   "counterpart"}};
        case Method::kPfe:
        case Method::kDulCls:
        case Method::kDulReg:
        case Method::kScf:
        case Method::kVmfFl:
          return {{"normal", {}}, {"vmf", {}}};
        default:
          break;
      }
      break;
    case AblationAxis::kTarget:
      if (method == Method::kDulReg || method == Method::kScf ||
          method == Method::kPfe) {
        return {{"cosface", {}}, {"arcface", {}}, {"dul_cls", {}}};
      }
      break;
  }
  throw ConfigError("ablation axis " + AxisName(axis) + " does not apply to " +
                    name);
}

BenchmarkReport RunAblation(const RunConfig& config, Method method,
                            AblationAxis axis, const ProgressFn& progress) {
  config.Validate();
  const std::vector<AblationCell> plan = AblationPlan(method, axis);
  const std::string name = MethodName(method);
  BenchmarkReport report;
  bool runnable = false;
  for (const AblationCell& cell : plan) runnable |= !cell.skip_reason;
  if (!runnable) {
    for (const AblationCell& cell : plan) {
      report.rows.push_back(
          StatusRow(name, cell.axis_value, "all", "skipped: " + *cell.skip_reason));
    }
    return report;
  }
  const PreparedData data = PrepareData(config.data);
  RunConfig base = config;
  base.method = name;
  base.distribution.reset();
  base.scoring.reset();
  SourceCache cache(!(base.search && base.search->trials > 0));

  // Per cell: rows over seeds.
  std::vector<std::vector<ReportRow>> cells(plan.size());
  if (axis == AblationAxis::kScoring) {
    for (std::uint64_t seed : base.seeds) {
      Report(progress, name + " seed " + std::to_string(seed));
      std::optional<TrainResult> trained;
      std::string failure;
      try {
        trained = Train(base, data, method, seed,
                        cache.SourceFor(base, data, method, seed));
      } catch (const Error& e) {
        failure = std::string("error: ") + e.what();
      }
      for (std::size_t c = 0; c < plan.size(); ++c) {
        if (plan[c].skip_reason) continue;
        const std::string& value = plan[c].axis_value;
        if (!trained) {
          cells[c].push_back(StatusRow(name, value, std::to_string(seed), failure));
          continue;
        }
        try {
          const ScoringKind kind = ParseScoringKind(value, base.loss.mc_samples);
          cells[c].push_back(MetricsRow(
              name, value, seed,
              Evaluate(base, data, trained->model, method, kind, seed)));
        } catch (const Error& e) {
          cells[c].push_back(StatusRow(name, value, std::to_string(seed),
                                       std::string("error: ") + e.what()));
        }
      }
    }
  } else {
    for (std::size_t c = 0; c < plan.size(); ++c) {
      if (plan[c].skip_reason) continue;
      const std::string& value = plan[c].axis_value;
      RunConfig mc = base;
      if (axis == AblationAxis::kDistribution) {
        mc.distribution = ParseFamily(value);
      } else {
        mc.pretrain_source = ParseMethod(value);
      }
      for (std::uint64_t seed : mc.seeds) {
        Report(progress, name + " " + value + " seed " + std::to_string(seed));
        try {
          const TrainResult result =
              Train(mc, data, method, seed, cache.SourceFor(mc, data, method, seed));
          cells[c].push_back(MetricsRow(
              name, value, seed,
              Evaluate(mc, data, result.model, method, ScoringFor(mc, method), seed)));
        } catch (const Error& e) {
          cells[c].push_back(StatusRow(name, value, std::to_string(seed),
                                       std::string("error: ") + e.what()));
        }
      }
    }
  }
  for (std::size_t c = 0; c < plan.size(); ++c) {
    if (plan[c].skip_reason) {
      report.rows.push_back(StatusRow(name, plan[c].axis_value, "all",
                                      "skipped: " + *plan[c].skip_reason));
      continue;
    }
    report.rows.insert(report.rows.end(), cells[c].begin(), cells[c].end());
    report.rows.push_back(Aggregate(name, plan[c].axis_value, cells[c]));
  }
  return report;
}

}  // namespace pemb
