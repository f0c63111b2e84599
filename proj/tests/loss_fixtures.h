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

#ifndef PEMB_TESTS_LOSS_FIXTURES_H_
#define PEMB_TESTS_LOSS_FIXTURES_H_

#include <string>
#include <vector>

#include "gradcheck.h"
#include "pemb/encoder.h"
#include "pemb/losses.h"

namespace pemb::testing {

struct LossFixture {
  Objective objective;
  LossConfig cfg;
  EncoderModel model;
  Batch batch;
  StageFlags flags;
};

inline const std::vector<Objective>& AllObjectives() {
  static const std::vector<Objective> all = {
      Objective::kCosface, Objective::kArcface, Objective::kHib,
      Objective::kPfe,     Objective::kDulCls,  Objective::kDulReg,
      Objective::kVmfFl,   Objective::kVmfLoss};
  return all;
}

inline std::string ObjectiveName(Objective o) {
  switch (o) {
    case Objective::kCosface: return "cosface";
    case Objective::kArcface: return "arcface";
    case Objective::kHib: return "hib";
    case Objective::kPfe: return "pfe";
    case Objective::kDulCls: return "dul_cls";
    case Objective::kDulReg: return "dul_reg";
    case Objective::kVmfFl: return "vmf_fl";
    case Objective::kVmfLoss: return "vmf_loss";
  }
  return "?";
}

// A small randomly initialized model and batch for one objective, with
// every part that the objective trains marked trainable.
inline LossFixture MakeLossFixture(Objective objective, Rng& rng) {
  LossFixture f;
  f.objective = objective;
  f.cfg.mc_samples = 3;
  f.cfg.kl_weight = 0.1;
  EncoderConfig c;
  c.input_dim = 5;
  c.hidden_dims = {12};
  c.embed_dim = 4;
  c.uncertainty_hidden = 6;
  if (objective == Objective::kVmfFl || objective == Objective::kVmfLoss) {
    c.distribution = DistributionFamily::kVmf;
  }
  if (objective == Objective::kHib) {
    c.normalize_mean = false;
    c.shared_variance = false;
  }
  f.model = InitEncoder(c, rng);
  // Nonzero biases keep ReLU pre-activations off their kink even when a
  // whole layer input is zero.
  for (auto& e : f.model.params.entries()) {
    if (e.name.size() > 5 && e.name.substr(e.name.size() - 5) == ".bias") {
      for (double& v : e.value.values()) v = rng.Uniform(-0.5, 0.5);
    }
  }
  const std::size_t classes = 3;
  if (objective == Objective::kDulReg) {
    Tensor t({classes, c.embed_dim});
    for (double& v : t.values()) v = rng.Normal();
    f.model.params.Add(std::string(kTargetsName), t);
  }
  AddObjectiveParameters(f.model, objective, classes, f.cfg, rng);
  if (objective == Objective::kHib) {
    f.model.params.Get("hib.alpha") = Tensor::Scalar(rng.Uniform(0.5, 2));
    f.model.params.Get("hib.beta") = Tensor::Scalar(rng.Uniform(-1, 1));
  }
  if (objective == Objective::kVmfLoss) {
    f.model.params.Get("vmf.beta") = Tensor::Scalar(rng.Uniform(2, 10));
  }
  f.batch.x = Tensor({6, c.input_dim});
  for (double& v : f.batch.x.values()) v = rng.Normal();
  f.batch.y = {0, 1, 0, 2, 1, 0};
  f.batch.pairs = {{0, 2, true}, {1, 4, true}, {3, 5, false}, {0, 1, false}};
  return f;
}

inline GradCheckResult CheckLossGradient(const LossFixture& f,
                                         std::uint64_t noise_seed,
                                         double h = 1e-5) {
  std::vector<std::string> names;
  std::vector<Tensor> values;
  for (const auto& e : f.model.params.entries()) {
    if (IsTrainable(e.name, f.objective, f.flags)) {
      names.push_back(e.name);
      values.push_back(e.value);
    }
  }
  NoiseTape noise{Rng(noise_seed)};
  auto fn = [&](Graph& g, const std::vector<Var>& p) {
    ParamVars vars = BindParameters(g, f.model.params, nullptr);
    for (std::size_t i = 0; i < p.size(); ++i) vars.at(names[i]) = p[i];
    return *ObjectiveLoss(f.objective, f.cfg, f.model, vars, f.batch, noise);
  };
  return GradCheck(fn, values, h);
}

}  // namespace pemb::testing

#endif  // PEMB_TESTS_LOSS_FIXTURES_H_
