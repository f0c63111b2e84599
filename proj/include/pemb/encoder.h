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

#ifndef PEMB_ENCODER_H_
#define PEMB_ENCODER_H_

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pemb/autodiff.h"
#include "pemb/distributions.h"
#include "pemb/random.h"
#include "pemb/tensor.h"

namespace pemb {

enum class DistributionFamily { kNormal, kVmf };

std::string FamilyName(DistributionFamily family);
// "normal" or "vmf"; throws ConfigError otherwise.
DistributionFamily ParseFamily(const std::string& name);

struct EncoderConfig {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden_dims = {64, 64};
  std::size_t embed_dim = 16;
  // Width of the two hidden layers of the uncertainty head.
  std::size_t uncertainty_hidden = 32;
  DistributionFamily distribution = DistributionFamily::kNormal;
  bool normalize_mean = true;
  bool shared_variance = true;

  // Throws ConfigError on violated invariants.
  void Validate() const;
  // Columns of the uncertainty output: 1 for vMF or a shared variance.
  std::size_t UncertaintyDim() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;
  bool operator==(const NamedTensor&) const = default;
};

// Ordered name -> tensor store. Order is insertion order and is what the
// serializer writes.
class ParameterSet {
 public:
  void Add(std::string name, Tensor value);
  // Adds or replaces.
  void Set(const std::string& name, Tensor value);
  bool Contains(std::string_view name) const;
  Tensor& Get(std::string_view name);
  const Tensor& Get(std::string_view name) const;
  std::vector<NamedTensor>& entries() { return entries_; }
  const std::vector<NamedTensor>& entries() const { return entries_; }
  bool operator==(const ParameterSet&) const = default;

 private:
  std::vector<NamedTensor> entries_;
};

using ParamVars = std::unordered_map<std::string, Var>;
using TrainablePredicate = std::function<bool(const std::string&)>;

// Binds every entry into the graph: trainable names become parameters,
// the rest constants.
ParamVars BindParameters(Graph& graph, const ParameterSet& params,
                         const TrainablePredicate& trainable);

// Backbone, mean head and uncertainty head parameters, plus whatever
// loss-specific entries (targets, learned scalars) training adds.
struct EncoderModel {
  EncoderConfig config;
  ParameterSet params;
  bool operator==(const EncoderModel&) const = default;
};

EncoderModel InitEncoder(const EncoderConfig& config, Rng& rng);
// Replaces the uncertainty head with a freshly initialized one.
void ReinitUncertainty(EncoderModel& model, Rng& rng);
bool IsUncertaintyParameter(const std::string& name);
bool IsBackboneParameter(const std::string& name);

struct EncoderOutputs {
  Var raw_mean;     // [B, D], mean head before normalization
  Var mean;         // [B, D]
  Var uncertainty;  // [B, 1] or [B, D]: log-variance (normal) or kappa (vMF)
};

EncoderOutputs Forward(const EncoderModel& model, const ParamVars& vars,
                       const Var& x);

std::vector<PredictedDistribution> EncodeBatch(const EncoderModel& model,
                                               const Tensor& xs);
PredictedDistribution Encode(const EncoderModel& model, const Tensor& x);

// Unit-norm class centroids, one row per training class.
struct TargetEmbeddings {
  Tensor rows;  // [C, D]
};

inline constexpr std::string_view kTargetsName = "targets";

// Normalized rows of the model's "targets" entry; ConfigError if absent.
TargetEmbeddings TargetsOf(const EncoderModel& model);

// A_c^T mu for every class. ContractError if mu is not unit norm.
Tensor ClassLogits(const TargetEmbeddings& targets, const Tensor& mu);

// Norm of the mean-head output before normalization, per row of xs.
std::vector<double> PrenormMagnitudes(const EncoderModel& model,
                                      const Tensor& xs);
double PrenormMagnitude(const EncoderModel& model, const Tensor& x);

// PEMB1 container: magic, then per entry u32 name length, name bytes,
// u32 rank, u64 extents, f64 values, all little-endian.
std::string SerializeParameters(const ParameterSet& params);
ParameterSet DeserializeParameters(std::string_view bytes);
void SaveModel(const EncoderModel& model, const std::filesystem::path& path);
// Reads parameters and checks the encoder entries against config.
EncoderModel LoadModel(const std::filesystem::path& path,
                       const EncoderConfig& config);

}  // namespace pemb

#endif  // PEMB_ENCODER_H_
