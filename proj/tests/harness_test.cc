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

#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "pemb/config.h"
#include "pemb/errors.h"
#include "pemb/harness.h"
#include "pemb/train.h"

namespace pemb {
namespace {

RunConfig Small() {
  RunConfig c = ParseRunConfig(R"({
    "data": {"classes": 16, "per_class": 20, "dim": 16, "kappa": 12.0},
    "encoder": {"hidden_dims": [16], "embed_dim": 8, "uncertainty_hidden": 8},
    "training": {"epochs": 20, "patience": 5, "batch_size": 16},
    "seeds": [0]
  })");
  return c;
}

TEST_CASE("config parsing") {
  const RunConfig d = ParseRunConfig("{}");
  CHECK(d.data.classes == 64);
  CHECK(d.optimizer.classifier_lr == 0.1);
  CHECK(d.seeds.size() == 5);
  CHECK(d.encoder.input_dim == d.data.dim);

  CHECK_THROWS_AS(ParseRunConfig(R"({"data": {"clases": 8}})"), ConfigError);
  CHECK_THROWS_AS(ParseRunConfig(R"({"optimiser": {}})"), ConfigError);
  CHECK_THROWS_AS(ParseRunConfig(R"({"data": {"classes": 12}})"), ConfigError);
  CHECK_THROWS_AS(ParseRunConfig(R"({"training": {"patience": 0}})"),
                  ConfigError);
  CHECK_THROWS_AS(ParseRunConfig(R"({"seeds": []})"), ConfigError);
  CHECK_THROWS_AS(ParseRunConfig(R"({"pretrain_source": "pfe"})"),
                  ConfigError);
  CHECK_THROWS_AS(ParseRunConfig(R"({"scoring": "cosine"})"), ConfigError);
  CHECK_THROWS_AS(ParseRunConfig("{"), ConfigError);
  try {
    ParseRunConfig(R"({"loss": {"scle": 1}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("loss.scle") != std::string::npos);
  }

  const RunConfig s = ParseRunConfig(R"({
    "scoring": "sampled_l2", "scoring_samples": 4, "distribution": "vmf",
    "search": {"trials": 3, "ranges": {"scale": {"lo": 8, "hi": 32}}}
  })");
  REQUIRE(s.scoring.has_value());
  CHECK(*s.scoring == ScoringKind::Sampled(4, DistanceMetric::kL2));
  REQUIRE(s.search.has_value());
  CHECK(s.search->trials == 3);
  CHECK(RunConfigToJson(ParseRunConfig(RunConfigToJson(s))) ==
        RunConfigToJson(s));
}

TEST_CASE("encoder layout follows the method") {
  RunConfig c = Small();
  CHECK(EncoderConfigFor(c, Method::kHib).distribution == DistributionFamily::kNormal);
  CHECK(EncoderConfigFor(c, Method::kVmfFl).distribution == DistributionFamily::kVmf);
  c.distribution = DistributionFamily::kVmf;
  CHECK_THROWS_AS(EncoderConfigFor(c, Method::kHib), ConfigError);
  CHECK_THROWS_AS(EncoderConfigFor(c, Method::kCosface), ConfigError);
  CHECK(EncoderConfigFor(c, Method::kDulCls).distribution == DistributionFamily::kVmf);
  c.distribution = DistributionFamily::kNormal;
  CHECK_THROWS_AS(EncoderConfigFor(c, Method::kVmfLoss), ConfigError);
  CHECK(ScoringFor(Small(), Method::kPfe) == ScoringKind::Mls());
}

TEST_CASE("early stopping with a frozen model") {
  RunConfig c = Small();
  c.optimizer.backbone_lr = 0.0;
  c.optimizer.classifier_lr = 0.0;
  c.training.patience = 1;
  const PreparedData data = PrepareData(c.data);
  const TrainResult r = Train(c, data, Method::kCosface, 0);
  REQUIRE(r.log.size() == 3);
  CHECK(r.log[0].epoch == 0);
  CHECK(r.best_epoch == 1);
  CHECK(r.log[1].val_map_at_r == r.log[0].val_map_at_r);
}

TEST_CASE("training is deterministic and improves validation") {
  const RunConfig c = Small();
  const PreparedData data = PrepareData(c.data);
  const TrainResult a = Train(c, data, Method::kDulCls, 3);
  const TrainResult b = Train(c, data, Method::kDulCls, 3);
  CHECK(a.model == b.model);
  CHECK(a.best_val_map_at_r > a.log.front().val_map_at_r);
  CHECK(a.best_epoch >= 1);
  const TrainResult other = Train(c, data, Method::kDulCls, 4);
  CHECK_FALSE(other.model == a.model);
}

TEST_CASE("dul_reg_cls keeps stage-1 targets") {
  RunConfig c = Small();
  const PreparedData data = PrepareData(c.data);
  const TrainResult stage1 = Train(c, data, Method::kDulCls, 0);

  c.training.stage2_epochs = 0;
  CHECK(RunDulRegCls(c, data, 0, &stage1).model == stage1.model);

  c.training.stage2_epochs = 10;
  c.training.patience = 10;
  const TrainResult r = RunDulRegCls(c, data, 0, &stage1);
  const std::string targets(kTargetsName);
  CHECK(r.model.params.Get(targets) == stage1.model.params.Get(targets));
  double lowest = r.log.front().train_loss;
  for (const EpochLog& e : r.log) lowest = std::min(lowest, e.train_loss);
  CHECK(lowest < r.log.front().train_loss);
}

TEST_CASE("tunables") {
  const RunConfig c = WithTunable(Small(), "kl_weight", 0.5);
  CHECK(c.loss.kl_weight == 0.5);
  CHECK_THROWS_AS(WithTunable(Small(), "momentum", 0.5), ConfigError);
  CHECK_THROWS_AS(RandomSearch(Small(), PrepareData(Small().data),
                               Method::kCosface),
                  ConfigError);
}

TEST_CASE("aggregate rows") {
  std::vector<ReportRow> rows(3);
  const double r1[] = {0.5, 0.7, 0.9};
  for (int i = 0; i < 3; ++i) {
    rows[i].status = "ok";
    rows[i].values[0] = r1[i];
  }
  rows[2].values[4] = 0.25;
  ReportRow bad;
  bad.status = "error: boom";
  bad.values[0] = 100.0;
  rows.push_back(bad);
  const ReportRow agg = Aggregate("m", "-", rows);
  CHECK(agg.seed == "all");
  CHECK(agg.status == "aggregate");
  CHECK(std::abs(*agg.values[0] - 0.7) < 1e-12);
  CHECK(std::abs(*agg.stds[0] - 0.2) < 1e-12);
  CHECK(*agg.values[4] == 0.25);
  CHECK(*agg.stds[4] == 0.0);
  CHECK_FALSE(agg.values[1].has_value());
}

TEST_CASE("benchmark rows and csv") {
  RunConfig c = Small();
  const BenchmarkReport rep = RunBenchmark(c, {Method::kCosface});
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].status == "ok");
  CHECK(rep.rows[0].seed == "0");
  CHECK(rep.rows[1].status == "aggregate");
  CHECK(*rep.rows[1].values[1] == *rep.rows[0].values[1]);
  const std::string csv = rep.ToCsv();
  CHECK(csv.rfind(
            "method,axis_value,seed,status,recall_at_1,map_at_r,"
            "verification_accuracy,ceda,spearman,recall_at_1_std,"
            "map_at_r_std,verification_accuracy_std,ceda_std,spearman_std\n",
            0) == 0);
  CHECK(csv == RunBenchmark(c, {Method::kCosface}).ToCsv());

  c.optimizer.backbone_lr = 1e12;
  c.optimizer.grad_clip = 0.0;
  c.seeds = {0, 1};
  const BenchmarkReport broken = RunBenchmark(c, {Method::kDulReg});
  REQUIRE(broken.rows.size() == 3);
  CHECK(broken.rows[0].status.rfind("error: ", 0) == 0);
  CHECK(broken.rows[0].status.find(',') == std::string::npos);
}

TEST_CASE("ablation plans") {
  auto names = [](Method m, AblationAxis a) {
    std::vector<std::string> out;
    for (const AblationCell& cell : AblationPlan(m, a)) {
      out.push_back(cell.axis_value + (cell.skip_reason ? "*" : ""));
    }
    return out;
  };
  using V = std::vector<std::string>;
  CHECK(names(Method::kHib, AblationAxis::kScoring) ==
        V{"mean_l2", "sampled_l2", "mls"});
  CHECK(names(Method::kPfe, AblationAxis::kScoring) ==
        V{"mean_cosine*", "sampled_cosine", "mls"});
  CHECK(names(Method::kDulCls, AblationAxis::kScoring) ==
        V{"mean_cosine", "sampled_cosine", "mls"});
  CHECK(names(Method::kHib, AblationAxis::kDistribution) == V{"-*"});
  CHECK(names(Method::kDulReg, AblationAxis::kDistribution) ==
        V{"normal", "vmf"});
  CHECK(names(Method::kScf, AblationAxis::kTarget) ==
        V{"cosface", "arcface", "dul_cls"});
  CHECK_THROWS_AS(AblationPlan(Method::kCosface, AblationAxis::kScoring),
                  ConfigError);
  CHECK_THROWS_AS(AblationPlan(Method::kHib, AblationAxis::kTarget),
                  ConfigError);
  CHECK(ParseAxis(AxisName(AblationAxis::kTarget)) == AblationAxis::kTarget);
  CHECK_THROWS_AS(ParseAxis("size"), ConfigError);
}

TEST_CASE("scoring ablation reuses one model per seed") {
  RunConfig c = Small();
  const BenchmarkReport rep =
      RunAblation(c, Method::kPfe, AblationAxis::kScoring);
  std::vector<std::string> layout;
  for (const ReportRow& r : rep.rows) {
    layout.push_back(r.axis_value + "/" + r.seed + "/" +
                     r.status.substr(0, r.status.find(':')));
  }
  const std::vector<std::string> expected = {
      "mean_cosine/all/skipped", "sampled_cosine/0/ok",
      "sampled_cosine/all/aggregate", "mls/0/ok", "mls/all/aggregate"};
  CHECK(layout == expected);
  // Same embeddings, different scoring: both recall values are defined.
  CHECK(rep.rows[1].values[0].has_value());
  CHECK(rep.rows[3].values[0].has_value());
}

}  // namespace
}  // namespace pemb
