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

#ifndef PEMB_TRAIN_H_
#define PEMB_TRAIN_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pemb/config.h"
#include "pemb/data.h"
#include "pemb/encoder.h"
#include "pemb/losses.h"
#include "pemb/scoring.h"
#include "pemb/tensor.h"

namespace pemb {

// Everything a run reads from the synthetic benchmark, built once from
// DataConfig. Train labels are remapped to 0..C_train-1 for the classifier.
struct PreparedData {
  LabeledDataset dataset;  // split, uncorrupted
  Tensor train_x, val_x, test_x;
  std::vector<std::size_t> train_y, val_y, test_y;
  std::size_t num_train_classes = 0;
  // Corrupted copy of the test split, same order as test_x.
  Tensor corrupted_x;
  std::vector<double> quality;
  // Indices into the test split.
  VerificationSet test_pairs;
};

PreparedData PrepareData(const DataConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // epoch 0: loss of the initial model
  double val_map_at_r = 0.0;
};

struct TrainResult {
  EncoderModel model;       // best-validation snapshot
  std::vector<EpochLog> log;  // of the final stage
  std::size_t best_epoch = 0;
  double best_val_map_at_r = 0.0;
};

struct StageSpec {
  std::string name;
  Objective objective = Objective::kCosface;
  StageFlags flags;
  ScoringKind val_scoring;
  std::size_t epochs = 0;
};

// Method-specific encoder layout: sizes from the config, distribution and
// head shape from the method (or the config's distribution override).
EncoderConfig EncoderConfigFor(const RunConfig& config, Method method);

// Inference scoring of a method under a config.
ScoringKind ScoringFor(const RunConfig& config, Method method);

// One training stage: SGD with momentum and weight decay, validation
// MAP@R after every epoch, early stopping after `patience` epochs without
// improvement, best snapshot returned. Epoch 0 (the initial model) is
// logged but is never the returned snapshot unless no epoch runs.
TrainResult TrainStage(const RunConfig& config, const PreparedData& data,
                       EncoderModel model, const StageSpec& stage,
                       const Rng& streams);

// Trains a method from the config. Fine-tuning methods train (or take)
// the config's pretrain_source model first; dul_reg_cls delegates to
// RunDulRegCls.
TrainResult Train(const RunConfig& config, const PreparedData& data,
                  Method method, std::uint64_t seed,
                  const TrainResult* pretrained = nullptr);

// Stage 1 trains DUL-cls from scratch; stage 2 fine-tunes its backbone with
// a fresh uncertainty head under DUL-reg against the frozen stage-1
// targets. Stage-2 epochs come from training.stage2_epochs.
TrainResult RunDulRegCls(const RunConfig& config, const PreparedData& data,
                         std::uint64_t seed,
                         const TrainResult* stage1 = nullptr);

// The config with one tunable scalar replaced (see SearchConfig).
RunConfig WithTunable(RunConfig config, const std::string& key, double value);

struct SearchTrial {
  std::map<std::string, double> values;
  double val_map_at_r = 0.0;
  bool failed = false;
};

struct SearchResult {
  RunConfig best;
  std::vector<SearchTrial> trials;  // trial 0 is the unmodified config
};

// Seeded random search over config.search, scored by best validation
// MAP@R with the first seed.
SearchResult RandomSearch(const RunConfig& config, const PreparedData& data,
                          Method method);

}  // namespace pemb

#endif  // PEMB_TRAIN_H_
