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

// Command-line front end: train, bench, ablate, confidence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pemb/config.h"
#include "pemb/errors.h"
#include "pemb/harness.h"
#include "pemb/train.h"

namespace {

using namespace pemb;

constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;

void WriteFile(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string Fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string Fmt(const std::optional<double>& v) { return v ? Fmt(*v) : ""; }

std::vector<Method> ParseMethods(const std::string& list) {
  std::vector<Method> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(ParseMethod(item));
  }
  return out;
}

void Progress(const std::string& message) { std::cerr << message << "\n"; }

int RunTrain(const std::string& config_path, std::uint64_t seed,
             const std::string& out_dir) {
  const RunConfig config = LoadRunConfig(config_path);
  const Method method = ParseMethod(config.method);
  const PreparedData data = PrepareData(config.data);
  const TrainResult result = Train(config, data, method, seed);
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  SaveModel(result.model, dir / "model.pemb");
  std::string log = "epoch,train_loss,val_map_at_r\n";
  for (const EpochLog& e : result.log) {
    log += std::to_string(e.epoch) + "," + Fmt(e.train_loss) + "," +
           Fmt(e.val_map_at_r) + "\n";
  }
  WriteFile(dir / "log.csv", log);
  std::cerr << config.method << " seed " << seed << ": best epoch "
            << result.best_epoch << ", val MAP@R " << Fmt(result.best_val_map_at_r)
            << "\n";
  return 0;
}

std::string CurvesCsv(const BenchmarkReport& report) {
  std::string out = "method,axis_value,seed,alpha,map_at_r\n";
  for (const ReportRow& row : report.rows) {
    for (const CurvePoint& p : row.filter_out) {
      out += row.method + "," + row.axis_value + "," + row.seed + "," +
             Fmt(p.alpha) + "," + Fmt(p.value) + "\n";
    }
  }
  return out;
}

int RunBench(const std::string& config_path, const std::string& methods,
             int seeds, const std::string& out, const std::string& curves) {
  RunConfig config = LoadRunConfig(config_path);
  if (seeds > 0) {
    config.seeds.clear();
    for (int s = 0; s < seeds; ++s) config.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  const BenchmarkReport report = RunBenchmark(
      config, methods.empty() ? std::vector<Method>{ParseMethod(config.method)}
                              : ParseMethods(methods),
      Progress);
  WriteFile(out, report.ToCsv());
  if (!curves.empty()) WriteFile(curves, CurvesCsv(report));
  return 0;
}

int RunAblate(const std::string& config_path, const std::string& method,
              const std::string& axis, const std::string& out) {
  const RunConfig config = LoadRunConfig(config_path);
  const BenchmarkReport report = RunAblation(
      config, ParseMethod(method.empty() ? config.method : method),
      ParseAxis(axis), Progress);
  WriteFile(out, report.ToCsv());
  return 0;
}

int RunConfidence(const std::string& config_path, const std::string& model_path,
                  std::uint64_t seed, const std::string& out) {
  const RunConfig config = LoadRunConfig(config_path);
  const Method method = ParseMethod(config.method);
  const EncoderModel model = LoadModel(model_path, EncoderConfigFor(config, method));
  const PreparedData data = PrepareData(config.data);
  const ScoringKind scoring = ScoringFor(config, method);
  std::string csv = "row,source,alpha,map_at_r,spearman\n";
  std::string summary;
  for (ConfidenceSource source :
       {ConfidenceSource::kMethod, ConfidenceSource::kMaxPosterior,
        ConfidenceSource::kMagnitude}) {
    if (source == ConfidenceSource::kMaxPosterior &&
        !model.params.Contains(kTargetsName)) {
      std::cerr << "skipping max_posterior: model has no classification head\n";
      continue;
    }
    const ConfidenceCurve curve =
        CorruptedConfidenceCurve(config, data, model, method, scoring, source, seed);
    const std::string name = ConfidenceSourceName(source);
    for (const CurvePoint& p : curve.points) {
      csv += "curve," + name + "," + Fmt(p.alpha) + "," + Fmt(p.value) + ",\n";
    }
    summary += "spearman," + name + ",,," + Fmt(curve.spearman) + "\n";
  }
  WriteFile(out, csv + summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic embedding benchmark toolkit"};
  app.require_subcommand(1);

  std::string config_path, out, methods, method, axis, model_path, curves;
  std::uint64_t seed = 0;
  int seeds = 0;

  auto* train = app.add_subcommand("train", "Train one method (config 'method') for one seed");
  train->add_option("--config", config_path, "JSON run config")->required();
  train->add_option("--seed", seed, "Run seed");
  train->add_option("--out", out, "Output directory (model.pemb, log.csv)")->required();

  auto* bench = app.add_subcommand("bench", "Multi-seed benchmark report");
  bench->add_option("--config", config_path, "JSON run config")->required();
  bench->add_option("--methods", methods, "Comma-separated method names");
  bench->add_option("--seeds", seeds, "Use seeds 0..n-1 instead of the config's");
  bench->add_option("--out", out, "Report CSV")->required();
  bench->add_option("--curves", curves, "Optional filter-out curve CSV");

  auto* ablate = app.add_subcommand("ablate", "Ablation over one axis");
  ablate->add_option("--config", config_path, "JSON run config")->required();
  ablate->add_option("--method", method, "Method name (default: config 'method')");
  ablate->add_option("--axis", axis, "distribution, scoring or target")->required();
  ablate->add_option("--out", out, "Report CSV")->required();

  auto* confidence = app.add_subcommand(
      "confidence", "Filter-out curves and Spearman on the corrupted test split");
  confidence->add_option("--config", config_path, "JSON run config")->required();
  confidence->add_option("--model", model_path, "Trained model (PEMB1)")->required();
  confidence->add_option("--seed", seed, "Seed for sampled scoring");
  confidence->add_option("--out", out, "Curve CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return RunTrain(config_path, seed, out);
    if (*bench) return RunBench(config_path, methods, seeds, out, curves);
    if (*ablate) return RunAblate(config_path, method, axis, out);
    if (*confidence) return RunConfidence(config_path, model_path, seed, out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
