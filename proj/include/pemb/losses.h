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

#ifndef PEMB_LOSSES_H_
#define PEMB_LOSSES_H_

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pemb/autodiff.h"
#include "pemb/distributions.h"
#include "pemb/encoder.h"
#include "pemb/random.h"
#include "pemb/scoring.h"
#include "pemb/tensor.h"

namespace pemb {

enum class Method {
  kCosface,
  kArcface,
  kHib,
  kPfe,
  kDulCls,
  kDulReg,
  kScf,
  kVmfFl,
  kVmfLoss,
  kDulRegCls,
};

std::string MethodName(Method method);
// Throws ConfigError on unknown names.
Method ParseMethod(const std::string& name);
const std::vector<Method>& AllMethods();

// Objective actually optimized in a training stage. SCF trains with the
// DUL-reg objective; DUL-reg-cls is two stages of existing objectives.
enum class Objective {
  kCosface,
  kArcface,
  kHib,
  kPfe,
  kDulCls,
  kDulReg,
  kVmfFl,
  kVmfLoss,
};

struct StageFlags {
  bool train_backbone = true;
  bool train_targets = true;
  bool train_uncertainty = true;
  // Throws ConfigError when no flag is set.
  void Validate() const;
};

struct LossConfig {
  double scale = 16.0;
  double margin = 0.2;
  double kl_weight = 1e-2;
  std::size_t mc_samples = 8;
  double hib_alpha_init = 1.0;
  double hib_beta_init = 0.0;
  // Starting log-variance of HIB's per-dimension uncertainty output.
  double hib_log_var_init = -6.0;
  double vmf_beta_init = 10.0;
  double class_kappa_init = 20.0;
  // Throws ConfigError on violated invariants.
  void Validate() const;
};

// Per-method settings: the distribution and head layout it uses, its
// inference scoring, and how it is trained.
struct MethodSpec {
  Method method;
  DistributionFamily family;
  bool deterministic;  // cosface / arcface: no uncertainty in the objective
  bool normalize_mean;
  bool shared_variance;
  ScoringKind scoring;
  bool needs_pretrain;  // fine-tunes a pretrained model
  Objective objective;
  StageFlags flags;  // flags of the (final) training stage
  bool has_classifier;  // ends with a classification head
};

MethodSpec SpecOf(Method method);

// Replayable Monte-Carlo noise. The first request for a key draws from the
// stream; later requests with the same key return the stored draw, so a
// loss can be re-evaluated on identical noise.
class NoiseTape {
 public:
  explicit NoiseTape(Rng rng) : rng_(rng) {}

  const Tensor& Normal(const std::string& key, const Shape& shape);
  const VmfDraws& Vmf(const std::string& key, const Tensor& mu,
                      const std::vector<double>& kappas);

 private:
  Rng rng_;
  std::map<std::string, Tensor> normal_;
  std::map<std::string, VmfDraws> vmf_;
};

struct PairIndex {
  std::size_t i = 0;
  std::size_t j = 0;
  bool same_class = false;
};

struct Batch {
  Tensor x;                     // [B, input_dim]
  std::vector<std::size_t> y;   // classifier row per sample
  std::vector<PairIndex> pairs; // used by pair-based objectives
};

// Loss building blocks. Each returns a [1] node averaged over its rows.

// Cross-entropy over s * (logit - m [true class]).
Var CosfaceLoss(const Var& logits, const std::vector<std::size_t>& y,
                double s, double m);
// Cross-entropy over s * logit with the true-class logit replaced by
// cos(acos(logit) + m).
Var ArcfaceLoss(const Var& logits, const std::vector<std::size_t>& y,
                double s, double m);

// [P] match probabilities; z1 and z2 hold K rows per pair, pair-major.
Var HibMatchProb(const Var& z1, const Var& z2, std::size_t k,
                 const Var& alpha, const Var& beta);

// -log p or -log(1 - p) per pair with p clamped to [1e-12, 1 - 1e-12],
// plus kl_weight * (KL_i + KL_j); averaged over pairs.
Var HibLoss(const Var& mu, const Var& log_var,
            const std::vector<PairIndex>& pairs, const Var& alpha,
            const Var& beta, double kl_weight, std::size_t k,
            NoiseTape& noise);

// [P] log mutual likelihoods of row pairs.
Var MlsNormalPairs(const Var& mu, const Var& log_var,
                   const std::vector<std::size_t>& first,
                   const std::vector<std::size_t>& second);
Var MlsVmfPairs(const Var& mu, const Var& kappa,
                const std::vector<std::size_t>& first,
                const std::vector<std::size_t>& second);

// Mean of -MLS over all same-class pairs; nullopt when there are none.
std::optional<Var> PfeLoss(const Var& mu, const Var& uncertainty,
                           DistributionFamily family,
                           const std::vector<std::size_t>& labels);

// Unit-norm rows of the raw target matrix.
Var NormalizedTargets(const Var& raw_targets);

// Mean over K samples of cosface on normalized samples, plus kl_weight times
// the mean KL (normal only).
Var DulClsLoss(const Var& mu, const Var& uncertainty,
               DistributionFamily family, const Var& targets,
               const std::vector<std::size_t>& y, const LossConfig& cfg,
               NoiseTape& noise);

// Mean over rows of -log p(A_y | x).
Var DulRegLoss(const Var& mu, const Var& uncertainty,
               DistributionFamily family, const Var& targets,
               const std::vector<std::size_t>& y);

// Cross-entropy over class posteriors p(A_c | x); the density normalizers
// cancel.
Var VmfFlLoss(const Var& mu, const Var& uncertainty,
              DistributionFamily family, const Var& targets,
              const std::vector<std::size_t>& y);

// Monte-Carlo softmax over beta * cos(z, z_c) with z ~ vMF(mu, kappa) and
// z_c ~ vMF(A_c, kappa_c). Class draws are shared by the batch within one
// joint draw.
Var VmfSampledSoftmaxLoss(const Var& mu, const Var& kappa,
                          const Var& targets,
                          const std::vector<double>& class_kappa,
                          const Var& beta, const std::vector<std::size_t>& y,
                          std::size_t k, NoiseTape& noise);

// Extra trainable entries an objective needs (targets, learned scalars).
// Existing entries are kept.
void AddObjectiveParameters(EncoderModel& model, Objective objective,
                            std::size_t num_classes, const LossConfig& cfg,
                            Rng& rng);

// Which entries train under an objective and stage flags.
bool IsTrainable(const std::string& name, Objective objective,
                 const StageFlags& flags);

// Full objective on a batch; nullopt marks a batch to skip.
std::optional<Var> ObjectiveLoss(Objective objective, const LossConfig& cfg,
                                 const EncoderModel& model,
                                 const ParamVars& vars, const Batch& batch,
                                 NoiseTape& noise);

}  // namespace pemb

#endif  // PEMB_LOSSES_H_
