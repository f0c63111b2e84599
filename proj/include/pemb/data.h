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

#ifndef PEMB_DATA_H_
#define PEMB_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pemb/tensor.h"

namespace pemb {

enum class Split { kTrain, kVal, kTest };

std::string SplitName(Split split);
Split ParseSplit(const std::string& name);

struct Sample {
  Tensor x;
  std::size_t y = 0;
  std::optional<double> quality;
  Split split = Split::kTrain;
  bool operator==(const Sample&) const = default;
};

struct LabeledDataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::size_t per_class = 0;
  std::uint64_t seed = 0;
  std::vector<Sample> samples;

  std::vector<std::size_t> IndicesOf(Split split) const;
  // Samples of one split, in original order.
  LabeledDataset Subset(Split split) const;
  // [N, dim] feature matrix of the given samples (all when empty).
  Tensor Features(const std::vector<std::size_t>& indices = {}) const;
  std::vector<std::size_t> Labels(const std::vector<std::size_t>& indices = {}) const;
  bool operator==(const LabeledDataset&) const = default;
};

struct VerificationPair {
  std::size_t i = 0;
  std::size_t j = 0;
  bool same_class = false;
  bool operator==(const VerificationPair&) const = default;
};

struct VerificationSet {
  std::vector<VerificationPair> pairs;
};

// C class centroids uniform on the sphere, n vMF(centroid, kappa) samples
// per class. Every sample starts in the train split.
LabeledDataset Generate(std::size_t num_classes, std::size_t per_class,
                        std::size_t dim, double kappa, std::uint64_t seed);

// Shuffles class ids by seed; the second half goes to test, the first
// quarter of the first half to validation, the rest to train.
LabeledDataset SplitClasses(const LabeledDataset& dataset, std::uint64_t seed);

// N positive and N negative pairs, N = dataset size, uniform over valid
// pairs (with replacement). Indices refer to positions in `dataset`.
VerificationSet SampleVerificationPairs(const LabeledDataset& dataset,
                                        std::uint64_t seed);

// x' = normalize(q x + (1 - q) eta), q ~ U[0.5, 1], eta uniform on the
// sphere; q is stored as the sample quality. force_full_quality pins q = 1
// and leaves x untouched.
LabeledDataset Corrupt(const LabeledDataset& dataset, std::uint64_t seed,
                       bool force_full_quality = false);

// Line 1: the values of D,C,n,seed. Then one line per sample:
// split,y,quality,x_0,...,x_{D-1}; quality is empty when absent. Reals use
// 17 significant digits, so parsing reproduces every bit.
std::string DatasetToCsv(const LabeledDataset& dataset);
LabeledDataset DatasetFromCsv(const std::string& text);
void SaveDataset(const LabeledDataset& dataset, const std::filesystem::path& path);
LabeledDataset LoadDataset(const std::filesystem::path& path);

}  // namespace pemb

#endif  // PEMB_DATA_H_
