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

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "loss_fixtures.h"
#include "metric_oracles.h"
#include "pemb/config.h"
#include "pemb/distributions.h"
#include "pemb/errors.h"
#include "pemb/eval.h"
#include "pemb/harness.h"
#include "pemb/scoring.h"
#include "pemb/special.h"
#include "pemb/train.h"
#include "quadrature.h"
#include "stats.h"

namespace {

using namespace pemb;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Paths {
  std::string cli;
  std::string bench_config;
  std::string smoke_config;
  std::string fixture;
  std::string workdir;
};

std::string Fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since)
      .count();
}

// 1

Outcome MlsCorrectness() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1);
  auto random_normal = [&](std::size_t dim) {
    DiagonalNormal d{Tensor({dim}), Tensor({dim})};
    for (double& v : d.mu.values()) v = rng.Uniform(-2, 2);
    for (double& v : d.log_var.values()) v = std::log(rng.Uniform(0.2, 3.0));
    return d;
  };
  double worst_normal = 0.0;
  for (std::size_t dim : {1, 2}) {
    for (int i = 0; i < 50; ++i) {
      const DiagonalNormal a = random_normal(dim), b = random_normal(dim);
      const double quad =
          testing::LogNormalProductQuadrature(a, b, dim == 1 ? 2401 : 1201);
      worst_normal =
          std::max(worst_normal, std::abs(MlsNormal(a, b) - quad) / std::abs(quad));
    }
  }
  double worst_vmf = 0.0;
  for (int i = 0; i < 50; ++i) {
    const VonMisesFisher a{Tensor::Vector(rng.UnitVector(3)), rng.Uniform(0, 20)};
    const VonMisesFisher b{Tensor::Vector(rng.UnitVector(3)), rng.Uniform(0, 20)};
    const double quad = testing::LogVmfProductQuadrature(a, b);
    worst_vmf = std::max(worst_vmf, std::abs(MlsVmf(a, b) - quad) / std::abs(quad));
  }
  const double secs = Seconds(start);
  return {worst_normal <= 1e-6 && worst_vmf <= 1e-5 && secs < 30,
          "normal rel " + Fmt(worst_normal) + ", vmf rel " + Fmt(worst_vmf) +
              ", " + Fmt(secs, 3) + " s"};
}

// 2

Outcome VmfSampler() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(2);
  bool ok = true;
  double worst_z = 0.0, worst_ks = 0.0;
  for (std::size_t dim : {2, 3, 8, 32}) {
    for (double kappa : {1.0, 10.0, 100.0}) {
      const VonMisesFisher d{Tensor::Vector(rng.UnitVector(dim)), kappa};
      std::vector<double> t;
      for (int i = 0; i < 20000; ++i) {
        t.push_back(Dot(SampleVmf(d, rng).values(), d.mu.values()));
      }
      const auto m = testing::MeanWithError(t);
      const double expected = std::exp(LogBesselI(dim / 2.0, kappa) -
                                       LogBesselI(dim / 2.0 - 1.0, kappa));
      const double z = std::abs(m.mean - expected) / m.standard_error;
      const double ks = testing::KsStatistic(t, testing::VmfCosineCdf(dim, kappa)) /
                        testing::KsCritical1Percent(t.size());
      worst_z = std::max(worst_z, z);
      worst_ks = std::max(worst_ks, ks);
      ok = ok && z <= 3.0 && ks < 1.0;
    }
  }
  const double secs = Seconds(start);
  return {ok && secs < 60,
          "worst |mean - A_D| " + Fmt(worst_z, 3) + " SE, worst KS " +
              Fmt(worst_ks, 3) + " of the 1% critical value, " + Fmt(secs, 3) +
              " s"};
}

// 3

// A draw whose central difference changes with the step straddles a ReLU
// kink; it is not a differentiable point and is redrawn.
Outcome GradientSuite() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string where;
  int redrawn = 0;
  for (Objective o : testing::AllObjectives()) {
    Rng rng(300 + static_cast<int>(o));
    for (int trial = 0; trial < 20; ++trial) {
      testing::GradCheckResult r;
      for (int attempt = 0;; ++attempt) {
        const auto f = testing::MakeLossFixture(o, rng);
        r = testing::CheckLossGradient(f, 5000 + trial);
        if (r.max_rel_error <= 1e-4 || attempt == 5) break;
        if (testing::CheckLossGradient(f, 5000 + trial, 2.5e-6).max_rel_error >
            1e-4) {
          break;
        }
        ++redrawn;
      }
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        where = testing::ObjectiveName(o) + " " + r.worst;
      }
    }
  }
  const double secs = Seconds(start);
  return {worst <= 1e-4 && secs < 60,
          "worst rel " + Fmt(worst) + " (" + where + "), " +
              std::to_string(redrawn) + " kink draws replaced, " + Fmt(secs, 3) +
              " s"};
}

// 4

Tensor ToTensor(const oracle::Matrix& m) {
  Tensor t({m.size(), m.size()});
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) t.at(i, j) = m[i][j];
  }
  return t;
}

struct Instance {
  oracle::Matrix scores;
  std::vector<std::size_t> labels;
  std::vector<double> confidence;
  std::vector<double> quality;
};

Instance RandomInstance(Rng& rng) {
  Instance in;
  const std::size_t n = 2 + rng.Index(29);
  in.scores.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      in.scores[i][j] = in.scores[j][i] = static_cast<double>(rng.Index(7));
    }
  }
  const std::size_t classes = 1 + rng.Index(5);
  for (std::size_t i = 0; i < n; ++i) {
    in.labels.push_back(rng.Index(classes));
    in.confidence.push_back(static_cast<double>(rng.Index(5)) * 0.5);
    in.quality.push_back(rng.Uniform());
  }
  return in;
}

Outcome MetricOracles() {
  Rng rng(4);
  double worst = 0.0;
  int counts[5] = {0, 0, 0, 0, 0};
  auto note = [&](int k, double got, double want) {
    worst = std::max(worst, std::abs(got - want));
    ++counts[k];
  };
  for (int trial = 0; trial < 200; ++trial) {
    const Instance in = RandomInstance(rng);
    const std::size_t n = in.labels.size();
    const Tensor s = ToTensor(in.scores);
    note(0, RecallAt1(s, in.labels), oracle::Recall1(in.scores, in.labels));
    try {
      const double got = MapAtR(s, in.labels);
      note(1, got, oracle::MapR(in.scores, in.labels));
    } catch (const DomainError&) {
      // No query has a same-class gallery item; the oracle has nothing either.
    }

    std::vector<VerificationPair> pairs;
    std::vector<double> pair_scores;
    std::vector<bool> same;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        pairs.push_back({i, j, in.labels[i] == in.labels[j]});
        pair_scores.push_back(in.scores[i][j]);
        same.push_back(in.labels[i] == in.labels[j]);
      }
    }
    note(2, VerificationAccuracy(pairs, pair_scores),
         oracle::BestAtOrAbove(pair_scores, same));

    const std::vector<bool> nn = NearestNeighborCorrect(s, in.labels);
    std::vector<ConfidenceRecord> records;
    std::vector<bool> error;
    for (std::size_t q = 0; q < n; ++q) {
      const bool correct =
          in.labels[oracle::Ranked(in.scores, q).front()] == in.labels[q];
      if (correct != nn[q]) worst = 1.0;
      records.push_back({in.confidence[q], nn[q], in.quality[q]});
      error.push_back(!correct);
    }
    note(3, Ceda(records), oracle::BestAtOrBelow(in.confidence, error));

    if (n >= 3) {
      const auto r = Spearman(in.confidence, in.quality);
      if (r) {
        note(4, *r,
             oracle::Pearson(oracle::Ranks(in.confidence), oracle::Ranks(in.quality)));
      }
    }
  }
  std::string detail = "max |diff| " + Fmt(worst) + " over";
  const char* names[5] = {"recall", "map", "verification", "ceda", "spearman"};
  for (int k = 0; k < 5; ++k) {
    detail += std::string(" ") + names[k] + "=" + std::to_string(counts[k]);
  }
  return {worst <= 1e-12 && counts[4] > 100, detail};
}

// 5

// Exact in counts: with k correct of n, Recall@1 is k/n and CEDA must be
// max(k, n - k)/n. Evaluating 1 - Recall@1 in floating point can land one
// ulp away from (n - k)/n, so that gap is reported separately.
Outcome NaiveCeda() {
  Rng rng(5);
  int mismatched = 0, low_recall = 0;
  double gap = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const Instance in = RandomInstance(rng);
    const Tensor s = ToTensor(in.scores);
    const std::vector<bool> nn = NearestNeighborCorrect(s, in.labels);
    const std::size_t n = nn.size();
    const auto k = static_cast<std::size_t>(std::count(nn.begin(), nn.end(), true));
    std::vector<ConfidenceRecord> records;
    for (bool c : nn) records.push_back({0.7, c, std::nullopt});
    const double r1 = RecallAt1(s, in.labels);
    const double ceda = Ceda(records);
    low_recall += 2 * k < n;
    if (r1 != static_cast<double>(k) / static_cast<double>(n)) ++mismatched;
    if (ceda != static_cast<double>(std::max(k, n - k)) / static_cast<double>(n)) {
      ++mismatched;
    }
    if (r1 >= 0.5 && ceda != r1) ++mismatched;
    gap = std::max(gap, std::abs(ceda - std::max(r1, 1.0 - r1)));
  }
  return {mismatched == 0 && low_recall > 0 && gap <= 2.3e-16,
          "500 instances (" + std::to_string(low_recall) +
              " with Recall@1 < 0.5), " + std::to_string(mismatched) +
              " count mismatches, max |ceda - max(r1, 1 - r1)| " + Fmt(gap)};
}

// 6 to 9 share one set of trained models.

struct SeedRun {
  std::uint64_t seed = 0;
  double cosface_seconds = 0.0, dul_cls_seconds = 0.0;
  EvalResult cosface, dul_cls, dul_reg, dul_reg_cls;
  std::optional<double> baseline_spearman;
  std::optional<double> random_map_at_half;
};

std::optional<double> CurveAt(const std::vector<CurvePoint>& curve, double alpha) {
  for (const CurvePoint& p : curve) {
    if (std::abs(p.alpha - alpha) < 1e-12) return p.value;
  }
  return std::nullopt;
}

// MAP@R on the corrupted split after dropping half of it at random.
std::optional<double> RandomFilterControl(const RunConfig& config,
                                          const PreparedData& data,
                                          const EncoderModel& model,
                                          std::uint64_t seed) {
  Rng rng = Rng(seed).Derive("test.corrupted");
  const Tensor s = ScoreMatrix(EncodeBatch(model, data.corrupted_x),
                               ScoringFor(config, Method::kDulCls), rng);
  Rng pick = Rng(seed).Derive("acceptance.random_confidence");
  std::vector<double> conf(data.test_y.size());
  for (double& c : conf) c = pick.Uniform();
  const auto curve = FilterOutCurve(
      conf, {0.5}, [&](const std::vector<std::size_t>& keep) -> std::optional<double> {
        std::vector<std::size_t> y;
        for (std::size_t i : keep) y.push_back(data.test_y[i]);
        try {
          return MapAtR(RestrictScores(s, keep), y);
        } catch (const DomainError&) {
          return std::nullopt;
        }
      });
  return curve.front().value;
}

std::vector<SeedRun> TrainedRuns(const Paths& paths) {
  static std::optional<std::vector<SeedRun>> cache;
  if (cache) return *cache;
  const RunConfig config = LoadRunConfig(paths.bench_config);
  const PreparedData data = PrepareData(config.data);
  std::vector<SeedRun> runs;
  for (std::uint64_t seed : config.seeds) {
    SeedRun run;
    run.seed = seed;
    auto eval = [&](const TrainResult& r, Method m) {
      return Evaluate(config, data, r.model, m, ScoringFor(config, m), seed);
    };
    auto start = std::chrono::steady_clock::now();
    const TrainResult cosface = Train(config, data, Method::kCosface, seed);
    run.cosface = eval(cosface, Method::kCosface);
    run.cosface_seconds = Seconds(start);

    start = std::chrono::steady_clock::now();
    const TrainResult dul_cls = Train(config, data, Method::kDulCls, seed);
    run.dul_cls = eval(dul_cls, Method::kDulCls);
    run.dul_cls_seconds = Seconds(start);

    run.baseline_spearman =
        CorruptedConfidenceCurve(config, data, cosface.model, Method::kCosface,
                                 ScoringFor(config, Method::kCosface),
                                 ConfidenceSource::kMaxPosterior, seed)
            .spearman;
    run.random_map_at_half = RandomFilterControl(config, data, dul_cls.model, seed);

    RunConfig from_cosface = config;
    from_cosface.pretrain_source = Method::kCosface;
    run.dul_reg = eval(Train(from_cosface, data, Method::kDulReg, seed, &cosface),
                       Method::kDulReg);
    run.dul_reg_cls =
        eval(RunDulRegCls(config, data, seed, &dul_cls), Method::kDulRegCls);
    runs.push_back(run);
  }
  cache = runs;
  return runs;
}

Outcome EndToEnd(const Paths& paths) {
  bool ok = true;
  std::string detail;
  double slowest = 0.0;
  for (const SeedRun& r : TrainedRuns(paths)) {
    ok = ok && r.cosface.recall_at_1 >= 0.80 && r.dul_cls.recall_at_1 >= 0.80;
    slowest = std::max({slowest, r.cosface_seconds, r.dul_cls_seconds});
    detail += "seed " + std::to_string(r.seed) + " cosface " +
              Fmt(r.cosface.recall_at_1, 3) + " dul_cls " +
              Fmt(r.dul_cls.recall_at_1, 3) + "; ";
  }
  return {ok && slowest < 60, detail + "slowest run " + Fmt(slowest, 3) + " s"};
}

Outcome ConfidenceTrend(const Paths& paths) {
  int above = 0, beats = 0;
  std::string detail;
  for (const SeedRun& r : TrainedRuns(paths)) {
    const double mine = r.dul_cls.spearman.value_or(-2.0);
    const double base = r.baseline_spearman.value_or(-2.0);
    above += mine >= 0.3;
    beats += mine > base;
    detail += "seed " + std::to_string(r.seed) + " dul_cls " + Fmt(mine, 3) +
              " baseline " + Fmt(base, 3) + "; ";
  }
  return {above >= 4 && beats >= 3,
          detail + std::to_string(above) + "/5 >= 0.3, " + std::to_string(beats) +
              "/5 above baseline"};
}

Outcome FilterOut(const Paths& paths) {
  int wins = 0, random_wins = 0;
  std::string detail;
  for (const SeedRun& r : TrainedRuns(paths)) {
    const auto at0 = CurveAt(r.dul_cls.filter_out, 0.0);
    const auto at5 = CurveAt(r.dul_cls.filter_out, 0.5);
    if (at0 && at5 && *at5 >= *at0) ++wins;
    if (at0 && r.random_map_at_half && *r.random_map_at_half >= *at0) ++random_wins;
    detail += "seed " + std::to_string(r.seed) + " " +
              (at0 ? Fmt(*at0, 3) : "-") + " -> " + (at5 ? Fmt(*at5, 3) : "-") +
              " (random " +
              (r.random_map_at_half ? Fmt(*r.random_map_at_half, 3) : "-") +
              "); ";
  }
  return {wins >= 4, detail + std::to_string(wins) + "/5 seeds, random-confidence " +
                         "control " + std::to_string(random_wins) + "/5"};
}

Outcome TwoStage(const Paths& paths) {
  int wins = 0;
  std::string detail;
  for (const SeedRun& r : TrainedRuns(paths)) {
    wins += r.dul_reg_cls.map_at_r >= r.dul_reg.map_at_r;
    detail += "seed " + std::to_string(r.seed) + " " +
              Fmt(r.dul_reg_cls.map_at_r, 4) + " vs " + Fmt(r.dul_reg.map_at_r, 4) +
              "; ";
  }
  return {wins >= 3, detail + std::to_string(wins) + "/5 seeds"};
}

// 10 and 11 drive the command-line tool.

int RunCli(const Paths& paths, const std::string& args) {
  const std::string cmd = "\"" + paths.cli + "\" " + args + " 2>/dev/null";
  return std::system(cmd.c_str());
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> Lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::vector<std::string> Fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  return out;
}

Outcome AblationLayout(const Paths& paths) {
  const fs::path dir = fs::path(paths.workdir) / "ablation";
  fs::create_directories(dir);
  std::vector<std::string> layout = {"method,axis,axis_value,seed,status"};
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"hib", "scoring"},    {"pfe", "scoring"},    {"dul_cls", "scoring"},
      {"dul_reg", "scoring"}, {"scf", "scoring"},   {"vmf_fl", "scoring"},
      {"vmf_loss", "scoring"}, {"hib", "distribution"}};
  for (const auto& [method, axis] : runs) {
    const fs::path out = dir / (method + "_" + axis + ".csv");
    if (RunCli(paths, "ablate --config \"" + paths.smoke_config + "\" --method " +
                          method + " --axis " + axis + " --out \"" +
                          out.string() + "\"") != 0) {
      return {false, "ablate failed for " + method + " " + axis};
    }
    const auto lines = Lines(ReadFile(out));
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = Fields(lines[i]);
      if (f.size() < 4) return {false, "short row in " + out.string()};
      const std::string kind = f[3].substr(0, f[3].find(':'));
      layout.push_back(f[0] + "," + axis + "," + f[1] + "," + f[2] + "," + kind);
    }
  }
  const auto expected = Lines(ReadFile(paths.fixture));
  for (std::size_t i = 0; i < std::max(layout.size(), expected.size()); ++i) {
    const std::string got = i < layout.size() ? layout[i] : "<missing>";
    const std::string want = i < expected.size() ? expected[i] : "<missing>";
    if (got != want) {
      return {false, "row " + std::to_string(i) + ": got '" + got +
                         "', expected '" + want + "'"};
    }
  }
  return {true, std::to_string(expected.size() - 1) + " rows match the fixture"};
}

Outcome Determinism(const Paths& paths) {
  const fs::path dir = fs::path(paths.workdir) / "determinism";
  fs::create_directories(dir);
  std::vector<std::string> reports, curves;
  for (int i = 0; i < 2; ++i) {
    const fs::path out = dir / ("report" + std::to_string(i) + ".csv");
    const fs::path curve = dir / ("curves" + std::to_string(i) + ".csv");
    if (RunCli(paths, "bench --config \"" + paths.smoke_config +
                          "\" --methods cosface,arcface,hib,pfe,dul_cls,dul_reg,"
                          "scf,vmf_fl,vmf_loss,dul_reg_cls --out \"" +
                          out.string() + "\" --curves \"" + curve.string() +
                          "\"") != 0) {
      return {false, "bench failed"};
    }
    reports.push_back(ReadFile(out));
    curves.push_back(ReadFile(curve));
  }
  const std::size_t rows = Lines(reports[0]).size();
  return {reports[0] == reports[1] && curves[0] == curves[1] && rows > 1,
          std::to_string(reports[0].size()) + " report bytes, " +
              std::to_string(rows - 1) + " rows, reports " +
              (reports[0] == reports[1] ? "identical" : "differ") + ", curves " +
              (curves[0] == curves[1] ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  Paths paths;
  std::vector<int> only;
  CLI::App app{"pemb acceptance suite"};
  app.add_option("--cli", paths.cli, "pemb command-line tool")->required();
  app.add_option("--bench-config", paths.bench_config, "Benchmark config")->required();
  app.add_option("--smoke-config", paths.smoke_config, "Small config for CLI checks")
      ->required();
  app.add_option("--fixture", paths.fixture, "Expected ablation layout")->required();
  app.add_option("--workdir", paths.workdir, "Scratch directory")->required();
  app.add_option("--only", only, "Criterion numbers to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"MLS matches quadrature", MlsCorrectness},
      {"vMF sampler moments and KS", VmfSampler},
      {"loss gradients match finite differences", GradientSuite},
      {"metrics match brute-force oracles", MetricOracles},
      {"CEDA of constant confidence", NaiveCeda},
      {"end-to-end Recall@1", [&] { return EndToEnd(paths); }},
      {"confidence tracks quality", [&] { return ConfidenceTrend(paths); }},
      {"filter-out improves MAP@R", [&] { return FilterOut(paths); }},
      {"dul_reg_cls vs dul_reg", [&] { return TwoStage(paths); }},
      {"scoring ablation layout", [&] { return AblationLayout(paths); }},
      {"bench is byte-identical on repeat", [&] { return Determinism(paths); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) {
      continue;
    }
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << number << " "
              << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
