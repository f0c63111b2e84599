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

#ifndef PEMB_CONFIG_H_
#define PEMB_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pemb/encoder.h"
#include "pemb/losses.h"
#include "pemb/scoring.h"

namespace pemb {

struct DataConfig {
  std::size_t classes = 64;
  std::size_t per_class = 30;
  std::size_t dim = 32;
  double kappa = 40.0;
  std::uint64_t seed = 0;
};

struct OptimizerConfig {
  double backbone_lr = 1e-3;
  double classifier_lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  // Global gradient-norm bound per step; 0 disables.
  double grad_clip = 10.0;
};

struct TrainingConfig {
  std::size_t epochs = 200;
  std::size_t patience = 10;
  std::size_t batch_size = 64;
  // Epoch cap of the DUL-reg stage of dul_reg_cls; defaults to `epochs`.
  std::optional<std::size_t> stage2_epochs;
};

struct SearchRange {
  double lo = 0.0;
  double hi = 0.0;
  bool log_scale = true;
};

// Seeded uniform random search. Keys name tunable scalars: backbone_lr,
// classifier_lr, kl_weight, scale, margin.
struct SearchConfig {
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::map<std::string, SearchRange> ranges;
};

struct RunConfig {
  std::string method = "dul_cls";
  DataConfig data;
  // Sizes only; distribution and head layout come from the method.
  EncoderConfig encoder;
  LossConfig loss;
  OptimizerConfig optimizer;
  TrainingConfig training;
  // Inference scoring override; the method's own scoring otherwise.
  std::optional<ScoringKind> scoring;
  // Distribution override (ablation); the method's own otherwise.
  std::optional<DistributionFamily> distribution;
  // Model whose backbone (and targets) fine-tuning methods start from.
  Method pretrain_source = Method::kCosface;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::optional<SearchConfig> search;

  // Throws ConfigError on violated invariants.
  void Validate() const;
};

// Unknown keys and wrong types are ConfigErrors; absent keys keep defaults.
RunConfig ParseRunConfig(const std::string& json_text);
RunConfig LoadRunConfig(const std::filesystem::path& path);
std::string RunConfigToJson(const RunConfig& config);

// Default search ranges: backbone lr 1e-3..1e-1 and classification lr
// 1e-2..1, both log-uniform.
SearchConfig DefaultSearch(std::size_t trials);

}  // namespace pemb

#endif  // PEMB_CONFIG_H_
