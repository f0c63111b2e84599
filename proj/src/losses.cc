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

#include "pemb/losses.h"

#include <cmath>

#include "pemb/errors.h"

namespace pemb {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kProbFloor = 1e-12;

Tensor OneHot(const std::vector<std::size_t>& y, std::size_t classes) {
  Tensor t({y.size(), classes}, 0.0);
  for (std::size_t b = 0; b < y.size(); ++b) {
    if (y[b] >= classes) {
      throw ContractError("class index " + std::to_string(y[b]) +
                          " out of range for " + std::to_string(classes) +
                          " classes");
    }
    t.at(b, y[b]) = 1.0;
  }
  return t;
}

Var CrossEntropy(const Var& logits, const std::vector<std::size_t>& y) {
  if (logits.value().rows() != y.size()) {
    throw ContractError("cross-entropy: one label per logit row required");
  }
  Graph& g = *logits.graph;
  const Var onehot = g.Constant(OneHot(y, logits.value().cols()));
  return Mean(LogSumExpLast(logits) - SumLast(logits * onehot));
}

std::vector<std::size_t> Tile(std::size_t rows, std::size_t times) {
  std::vector<std::size_t> idx;
  idx.reserve(rows * times);
  for (std::size_t t = 0; t < times; ++t) {
    for (std::size_t r = 0; r < rows; ++r) idx.push_back(r);
  }
  return idx;
}

std::vector<std::size_t> Repeat(const std::vector<std::size_t>& v,
                                std::size_t times) {
  std::vector<std::size_t> out;
  out.reserve(v.size() * times);
  for (std::size_t t = 0; t < times; ++t) out.insert(out.end(), v.begin(), v.end());
  return out;
}

// Broadcasts [B, 1] to [B, cols]; leaves [B, cols] alone.
Var Expand(const Var& v, std::size_t cols) {
  if (v.value().cols() == cols) return v;
  Graph& g = *v.graph;
  return v + g.Constant(Tensor({v.value().rows(), cols}, 0.0));
}

Var Column(const Var& v) { return Reshape(v, {v.value().rows()}); }

std::vector<double> ColumnValues(const Var& v) {
  const Tensor& t = v.value();
  std::vector<double> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) out[r] = t.at(r, 0);
  return out;
}

double InverseSoftplus(double y) { return y + std::log(-std::expm1(-y)); }

}  // namespace

std::string MethodName(Method method) {
  switch (method) {
    case Method::kCosface: return "cosface";
    case Method::kArcface: return "arcface";
    case Method::kHib: return "hib";
    case Method::kPfe: return "pfe";
    case Method::kDulCls: return "dul_cls";
    case Method::kDulReg: return "dul_reg";
    case Method::kScf: return "scf";
    case Method::kVmfFl: return "vmf_fl";
    case Method::kVmfLoss: return "vmf_loss";
    case Method::kDulRegCls: return "dul_reg_cls";
  }
  return "unknown";
}

const std::vector<Method>& AllMethods() {
  static const std::vector<Method> all = {
      Method::kCosface, Method::kArcface, Method::kHib,
      Method::kPfe,     Method::kDulCls,  Method::kDulReg,
      Method::kScf,     Method::kVmfFl,   Method::kVmfLoss,
      Method::kDulRegCls};
  return all;
}

Method ParseMethod(const std::string& name) {
  for (Method m : AllMethods()) {
    if (MethodName(m) == name) return m;
  }
  throw ConfigError("unknown method '" + name + "'");
}

void StageFlags::Validate() const {
  if (!train_backbone && !train_targets && !train_uncertainty) {
    throw ConfigError("stage flags: at least one part must train");
  }
}

void LossConfig::Validate() const {
  if (!(scale > 0.0)) throw ConfigError("loss: scale must be > 0");
  if (!(margin >= 0.0)) throw ConfigError("loss: margin must be >= 0");
  if (!(kl_weight >= 0.0)) throw ConfigError("loss: kl_weight must be >= 0");
  if (mc_samples < 1) throw ConfigError("loss: mc_samples must be >= 1");
  if (!(class_kappa_init > 0.0)) {
    throw ConfigError("loss: class_kappa_init must be > 0");
  }
}

MethodSpec SpecOf(Method method) {
  const auto normal = DistributionFamily::kNormal;
  const auto vmf = DistributionFamily::kVmf;
  const StageFlags all{true, true, true};
  const StageFlags uncertainty_only{false, false, true};
  const StageFlags fine_tune{true, false, true};
  const StageFlags deterministic{true, true, false};
  switch (method) {
    case Method::kCosface:
      return {method, normal, true, true, true, ScoringKind::MeanCosine(),
              false, Objective::kCosface, deterministic, true};
    case Method::kArcface:
      return {method, normal, true, true, true, ScoringKind::MeanCosine(),
              false, Objective::kArcface, deterministic, true};
    case Method::kHib:
      return {method, normal, false, false, false,
              ScoringKind::Sampled(8, DistanceMetric::kL2), false,
              Objective::kHib, all, false};
    case Method::kPfe:
      return {method, normal, false, true, true, ScoringKind::Mls(), true,
              Objective::kPfe, uncertainty_only, true};
    case Method::kDulCls:
      return {method, normal, false, true, true, ScoringKind::MeanCosine(),
              false, Objective::kDulCls, all, true};
    case Method::kDulReg:
      return {method, normal, false, true, true, ScoringKind::MeanCosine(),
              true, Objective::kDulReg, fine_tune, true};
    case Method::kScf:
      return {method, vmf, false, true, true, ScoringKind::Mls(), true,
              Objective::kDulReg, uncertainty_only, true};
    case Method::kVmfFl:
      return {method, vmf, false, true, true, ScoringKind::MeanCosine(), false,
              Objective::kVmfFl, all, true};
    case Method::kVmfLoss:
      return {method, vmf, false, true, true,
              ScoringKind::Sampled(8, DistanceMetric::kCosine), false,
              Objective::kVmfLoss, all, true};
    case Method::kDulRegCls:
      return {method, normal, false, true, true, ScoringKind::MeanCosine(),
              true, Objective::kDulReg, fine_tune, true};
  }
  throw ConfigError("unknown method");
}

const Tensor& NoiseTape::Normal(const std::string& key, const Shape& shape) {
  auto it = normal_.find(key);
  if (it != normal_.end()) {
    if (it->second.shape() != shape) {
      throw ContractError("noise tape: shape changed for " + key);
    }
    return it->second;
  }
  Tensor t(shape);
  for (double& v : t.values()) v = rng_.Normal();
  return normal_.emplace(key, std::move(t)).first->second;
}

const VmfDraws& NoiseTape::Vmf(const std::string& key, const Tensor& mu,
                               const std::vector<double>& kappas) {
  auto it = vmf_.find(key);
  if (it != vmf_.end()) {
    if (it->second.canonical.shape() != mu.shape()) {
      throw ContractError("noise tape: shape changed for " + key);
    }
    return it->second;
  }
  return vmf_.emplace(key, DrawVmfRows(mu, kappas, rng_)).first->second;
}

Var CosfaceLoss(const Var& logits, const std::vector<std::size_t>& y,
                double s, double m) {
  Graph& g = *logits.graph;
  const Tensor onehot = OneHot(y, logits.value().cols());
  Tensor shift = onehot;
  for (double& v : shift.values()) v *= m;
  return CrossEntropy((logits - g.Constant(shift)) * s, y);
}

Var ArcfaceLoss(const Var& logits, const std::vector<std::size_t>& y,
                double s, double m) {
  for (double v : logits.value().values()) {
    if (std::abs(v) > 1.0 + 1e-6) {
      throw ContractError("arcface: logit " + std::to_string(v) +
                          " outside [-1, 1]");
    }
  }
  // cos(acos(x)) is not exactly x in floating point; m = 0 must match
  // CosFace bit for bit.
  if (m == 0.0) return CosfaceLoss(logits, y, s, 0.0);
  Graph& g = *logits.graph;
  const Var onehot = g.Constant(OneHot(y, logits.value().cols()));
  const Var modified = logits + onehot * (ArcMargin(logits, m) - logits);
  return CrossEntropy(modified * s, y);
}

Var HibMatchProb(const Var& z1, const Var& z2, std::size_t k,
                 const Var& alpha, const Var& beta) {
  const std::size_t pairs = z1.value().rows() / k;
  if (k < 1 || z1.value().rows() != pairs * k ||
      z2.value().shape() != z1.value().shape()) {
    throw ContractError("HibMatchProb: expected K rows per pair");
  }
  std::vector<std::size_t> a, b;
  a.reserve(pairs * k * k);
  b.reserve(pairs * k * k);
  for (std::size_t p = 0; p < pairs; ++p) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        a.push_back(p * k + i);
        b.push_back(p * k + j);
      }
    }
  }
  const Var dist = L2Norm(GatherRows(z1, a) - GatherRows(z2, b));
  const Var prob = Sigmoid(beta - alpha * dist);
  return SumLast(Reshape(prob, {pairs, k * k})) *
         (1.0 / static_cast<double>(k * k));
}

Var HibLoss(const Var& mu, const Var& log_var,
            const std::vector<PairIndex>& pairs, const Var& alpha,
            const Var& beta, double kl_weight, std::size_t k,
            NoiseTape& noise) {
  if (pairs.empty()) throw ContractError("HibLoss: no pairs");
  Graph& g = *mu.graph;
  const std::size_t dim = mu.value().cols();
  std::vector<std::size_t> first, second, rows1, rows2;
  Tensor same({pairs.size()});
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    first.push_back(pairs[p].i);
    second.push_back(pairs[p].j);
    same[p] = pairs[p].same_class ? 1.0 : 0.0;
    for (std::size_t s = 0; s < k; ++s) {
      rows1.push_back(pairs[p].i);
      rows2.push_back(pairs[p].j);
    }
  }
  const Shape shape{pairs.size() * k, dim};
  const Var z1 = SampleNormalRows(GatherRows(mu, rows1),
                                  GatherRows(log_var, rows1),
                                  noise.Normal("hib.z1", shape));
  const Var z2 = SampleNormalRows(GatherRows(mu, rows2),
                                  GatherRows(log_var, rows2),
                                  noise.Normal("hib.z2", shape));
  const Var p = Clamp(HibMatchProb(z1, z2, k, alpha, beta), kProbFloor,
                      1.0 - kProbFloor);
  const Var t = g.Constant(same);
  const Var bce = -(t * Log(p) + (1.0 - t) * Log(1.0 - p));
  const Var kl = KlNormalToStandardRows(mu, log_var);
  const Var total = bce + (GatherRows(kl, first) + GatherRows(kl, second)) *
                              kl_weight;
  return Mean(total);
}

Var MlsNormalPairs(const Var& mu, const Var& log_var,
                   const std::vector<std::size_t>& first,
                   const std::vector<std::size_t>& second) {
  const std::size_t dim = mu.value().cols();
  const Var diff = GatherRows(mu, first) - GatherRows(mu, second);
  const Var var = Expand(
      Exp(GatherRows(log_var, first)) + Exp(GatherRows(log_var, second)), dim);
  const Var terms = diff * diff / var + Log(var);
  return (SumLast(terms) + kLog2Pi * static_cast<double>(dim)) * -0.5;
}

Var MlsVmfPairs(const Var& mu, const Var& kappa,
                const std::vector<std::size_t>& first,
                const std::vector<std::size_t>& second) {
  const std::size_t dim = mu.value().cols();
  const Var k1 = GatherRows(kappa, first);
  const Var k2 = GatherRows(kappa, second);
  const Var combined = L2Norm(k1 * GatherRows(mu, first) +
                              k2 * GatherRows(mu, second));
  return VmfLogNormalizerRows(dim, Column(k1)) +
         VmfLogNormalizerRows(dim, Column(k2)) -
         VmfLogNormalizerRows(dim, combined);
}

std::optional<Var> PfeLoss(const Var& mu, const Var& uncertainty,
                           DistributionFamily family,
                           const std::vector<std::size_t>& labels) {
  std::vector<std::size_t> first, second;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      if (labels[i] == labels[j]) {
        first.push_back(i);
        second.push_back(j);
      }
    }
  }
  if (first.empty()) return std::nullopt;
  const Var mls = family == DistributionFamily::kNormal
                      ? MlsNormalPairs(mu, uncertainty, first, second)
                      : MlsVmfPairs(mu, uncertainty, first, second);
  return -Mean(mls);
}

Var NormalizedTargets(const Var& raw_targets) {
  return L2Normalize(raw_targets);
}

Var DulClsLoss(const Var& mu, const Var& uncertainty,
               DistributionFamily family, const Var& targets,
               const std::vector<std::size_t>& y, const LossConfig& cfg,
               NoiseTape& noise) {
  const std::size_t rows = mu.value().rows();
  const std::size_t k = cfg.mc_samples;
  const std::vector<std::size_t> tile = Tile(rows, k);
  const Var mu_k = GatherRows(mu, tile);
  Var z;
  if (family == DistributionFamily::kNormal) {
    z = SampleNormalRows(mu_k, GatherRows(uncertainty, tile),
                         noise.Normal("dul_cls.eps", {rows * k, mu.value().cols()}));
  } else {
    const std::vector<double> kappas =
        ColumnValues(GatherRows(uncertainty, tile));
    z = ReflectVmfRows(mu_k, noise.Vmf("dul_cls.vmf", mu_k.value(), kappas));
  }
  const Var logits = MatMul(L2Normalize(z), Transpose(targets));
  Var loss = CosfaceLoss(logits, Repeat(y, k), cfg.scale, cfg.margin);
  if (family == DistributionFamily::kNormal && cfg.kl_weight > 0.0) {
    loss = loss + Mean(KlNormalToStandardRows(mu, uncertainty)) * cfg.kl_weight;
  }
  return loss;
}

Var DulRegLoss(const Var& mu, const Var& uncertainty,
               DistributionFamily family, const Var& targets,
               const std::vector<std::size_t>& y) {
  const Var target_rows = GatherRows(targets, y);
  if (family == DistributionFamily::kNormal) {
    return -Mean(NormalLogPdfRows(mu, uncertainty, target_rows));
  }
  const Var kappa = Column(uncertainty);
  const Var log_pdf = VmfLogNormalizerRows(mu.value().cols(), kappa) +
                      kappa * SumLast(mu * target_rows);
  return -Mean(log_pdf);
}

Var VmfFlLoss(const Var& mu, const Var& uncertainty,
              DistributionFamily family, const Var& targets,
              const std::vector<std::size_t>& y) {
  if (family == DistributionFamily::kVmf) {
    return CrossEntropy(MatMul(mu, Transpose(targets)) * uncertainty, y);
  }
  // log N(A_c; mu, sigma^2) up to terms constant in c:
  // (mu * w) A_c - 0.5 w (A_c * A_c), w = 1 / sigma^2.
  const Var w = Exp(-Expand(uncertainty, mu.value().cols()));
  const Var logits = MatMul(mu * w, Transpose(targets)) -
                     MatMul(w, Transpose(targets * targets)) * 0.5;
  return CrossEntropy(logits, y);
}

Var VmfSampledSoftmaxLoss(const Var& mu, const Var& kappa, const Var& targets,
                          const std::vector<double>& class_kappa,
                          const Var& beta, const std::vector<std::size_t>& y,
                          std::size_t k, NoiseTape& noise) {
  const std::size_t rows = mu.value().rows();
  const std::size_t classes = targets.value().rows();
  if (class_kappa.size() != classes) {
    throw ContractError("vmf loss: one concentration per class required");
  }
  const Var mu_k = GatherRows(mu, Tile(rows, k));
  const Var z = ReflectVmfRows(
      mu_k, noise.Vmf("vmf_loss.z", mu_k.value(),
                      ColumnValues(GatherRows(kappa, Tile(rows, k)))));
  const Var a_k = GatherRows(targets, Tile(classes, k));
  std::vector<double> ck;
  for (std::size_t t = 0; t < k; ++t) {
    ck.insert(ck.end(), class_kappa.begin(), class_kappa.end());
  }
  const Var zc = ReflectVmfRows(a_k, noise.Vmf("vmf_loss.zc", a_k.value(), ck));
  Var total;
  for (std::size_t t = 0; t < k; ++t) {
    const Var cos = MatMul(Slice(z, t * rows, (t + 1) * rows),
                           Transpose(Slice(zc, t * classes, (t + 1) * classes)));
    const Var ce = CrossEntropy(cos * beta, y);
    total = t == 0 ? ce : total + ce;
  }
  return total * (1.0 / static_cast<double>(k));
}

namespace {

bool UsesTargets(Objective o) {
  return o == Objective::kCosface || o == Objective::kArcface ||
         o == Objective::kDulCls || o == Objective::kDulReg ||
         o == Objective::kVmfFl || o == Objective::kVmfLoss;
}

bool UsesUncertainty(Objective o) {
  return o != Objective::kCosface && o != Objective::kArcface;
}

}  // namespace

void AddObjectiveParameters(EncoderModel& model, Objective objective,
                            std::size_t num_classes, const LossConfig& cfg,
                            Rng& rng) {
  const std::size_t dim = model.config.embed_dim;
  if (UsesTargets(objective) && !model.params.Contains(kTargetsName)) {
    if (objective == Objective::kDulReg) {
      throw ConfigError("DUL-reg needs pretrained target embeddings");
    }
    Tensor t({num_classes, dim});
    for (double& v : t.values()) v = rng.Normal();
    model.params.Add(std::string(kTargetsName), std::move(t));
  }
  if (objective == Objective::kHib && !model.params.Contains("hib.alpha")) {
    model.params.Add("hib.alpha", Tensor::Scalar(cfg.hib_alpha_init));
    model.params.Add("hib.beta", Tensor::Scalar(cfg.hib_beta_init));
    // With log-variance 0 the sample noise (sqrt(2D) in distance) swamps
    // the mean distances and the pair loss cannot shrink it.
    Tensor& bias = model.params.Get("uncertainty.2.bias");
    for (double& v : bias.values()) v = cfg.hib_log_var_init;
  }
  if (objective == Objective::kVmfLoss && !model.params.Contains("vmf.beta")) {
    model.params.Add("vmf.beta", Tensor::Scalar(cfg.vmf_beta_init));
    model.params.Add("vmf.class_log_kappa",
                     Tensor({num_classes}, std::log(cfg.class_kappa_init)));
    // Start the per-sample concentration at the class value; the sampler
    // passes no gradient to kappa, so its scale is set here.
    if (model.config.distribution == DistributionFamily::kVmf) {
      model.params.Get("uncertainty.2.bias") =
          Tensor({1}, InverseSoftplus(cfg.class_kappa_init - 1e-3));
    }
  }
}

bool IsTrainable(const std::string& name, Objective objective,
                 const StageFlags& flags) {
  if (IsBackboneParameter(name)) return flags.train_backbone;
  if (IsUncertaintyParameter(name)) {
    return flags.train_uncertainty && UsesUncertainty(objective);
  }
  if (name == kTargetsName) {
    return flags.train_targets && UsesTargets(objective) &&
           objective != Objective::kDulReg;
  }
  if (name == "hib.alpha" || name == "hib.beta") {
    return flags.train_targets && objective == Objective::kHib;
  }
  if (name == "vmf.beta") {
    return flags.train_targets && objective == Objective::kVmfLoss;
  }
  return false;
}

std::optional<Var> ObjectiveLoss(Objective objective, const LossConfig& cfg,
                                 const EncoderModel& model,
                                 const ParamVars& vars, const Batch& batch,
                                 NoiseTape& noise) {
  Graph& g = *vars.begin()->second.graph;
  const EncoderOutputs out = Forward(model, vars, g.Constant(batch.x));
  const DistributionFamily family = model.config.distribution;
  auto targets = [&] { return NormalizedTargets(vars.at(std::string(kTargetsName))); };
  switch (objective) {
    case Objective::kCosface:
      return CosfaceLoss(MatMul(out.mean, Transpose(targets())), batch.y,
                         cfg.scale, cfg.margin);
    case Objective::kArcface:
      return ArcfaceLoss(MatMul(out.mean, Transpose(targets())), batch.y,
                         cfg.scale, cfg.margin);
    case Objective::kHib:
      if (family != DistributionFamily::kNormal) {
        throw ConfigError("HIB needs the normal distribution");
      }
      if (batch.pairs.empty()) return std::nullopt;
      return HibLoss(out.mean, out.uncertainty, batch.pairs,
                     vars.at("hib.alpha"), vars.at("hib.beta"), cfg.kl_weight,
                     cfg.mc_samples, noise);
    case Objective::kPfe:
      return PfeLoss(out.mean, out.uncertainty, family, batch.y);
    case Objective::kDulCls:
      return DulClsLoss(out.mean, out.uncertainty, family, targets(), batch.y,
                        cfg, noise);
    case Objective::kDulReg:
      return DulRegLoss(out.mean, out.uncertainty, family, targets(), batch.y);
    case Objective::kVmfFl:
      return VmfFlLoss(out.mean, out.uncertainty, family, targets(), batch.y);
    case Objective::kVmfLoss: {
      if (family != DistributionFamily::kVmf) {
        throw ConfigError("vMF-loss needs the vMF distribution");
      }
      std::vector<double> class_kappa;
      for (double v : model.params.Get("vmf.class_log_kappa").values()) {
        class_kappa.push_back(std::exp(v));
      }
      return VmfSampledSoftmaxLoss(out.mean, out.uncertainty, targets(),
                                   class_kappa, vars.at("vmf.beta"), batch.y,
                                   cfg.mc_samples, noise);
    }
  }
  throw ConfigError("unknown objective");
}

}  // namespace pemb
