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

#include "pemb/train.h"

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>

#include "pemb/errors.h"
#include "pemb/eval.h"

namespace pemb {
namespace {

std::vector<std::size_t> Contiguous(const std::vector<std::size_t>& labels,
                                    std::size_t* num_classes) {
  std::map<std::size_t, std::size_t> ids;
  for (std::size_t y : labels) ids.emplace(y, 0);
  std::size_t next = 0;
  for (auto& [y, id] : ids) id = next++;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (std::size_t y : labels) out.push_back(ids.at(y));
  if (num_classes) *num_classes = next;
  return out;
}

bool IsClassifierGroup(const std::string& name) {
  return name == kTargetsName || name.rfind("hib.", 0) == 0 ||
         name.rfind("vmf.", 0) == 0;
}

// Batches of the shuffled training order; a trailing singleton joins the
// previous batch so every batch has at least two rows.
std::vector<std::vector<std::size_t>> MakeBatches(std::size_t n,
                                                  std::size_t batch_size,
                                                  Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.Shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < n; s += batch_size) {
    const std::size_t e = std::min(n, s + batch_size);
    if (e - s == 1 && !batches.empty()) {
      batches.back().push_back(order[s]);
    } else {
      batches.emplace_back(order.begin() + static_cast<long>(s),
                           order.begin() + static_cast<long>(e));
    }
  }
  return batches;
}

// Each anchor gets one same-class partner (if the batch has one) and one
// different-class partner.
std::vector<PairIndex> HibPairs(const std::vector<std::size_t>& y, Rng& rng) {
  std::vector<PairIndex> pairs;
  for (std::size_t a = 0; a < y.size(); ++a) {
    std::vector<std::size_t> same, diff;
    for (std::size_t b = 0; b < y.size(); ++b) {
      if (b == a) continue;
      (y[b] == y[a] ? same : diff).push_back(b);
    }
    if (!same.empty()) pairs.push_back({a, same[rng.Index(same.size())], true});
    if (!diff.empty()) pairs.push_back({a, diff[rng.Index(diff.size())], false});
  }
  return pairs;
}

Batch MakeBatch(const PreparedData& data, const std::vector<std::size_t>& rows,
                Objective objective, Rng& rng) {
  Batch batch;
  batch.x = Tensor({rows.size(), data.train_x.cols()});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = data.train_x.row(rows[r]);
    std::copy(src.begin(), src.end(), batch.x.row(r).begin());
    batch.y.push_back(data.train_y[rows[r]]);
  }
  if (objective == Objective::kHib) batch.pairs = HibPairs(batch.y, rng);
  return batch;
}

double ValidationMapAtR(const EncoderModel& model, const PreparedData& data,
                        const ScoringKind& scoring, Rng rng) {
  return MapAtR(EncodeBatch(model, data.val_x), data.val_y, scoring, rng);
}

struct Optimizer {
  const OptimizerConfig& cfg;
  std::unordered_map<std::string, Tensor> velocity;

  void Step(ParameterSet& params, const Gradients& grads, const ParamVars& vars,
            const std::function<bool(const std::string&)>& trainable) {
    double norm2 = 0.0;
    for (const NamedTensor& e : params.entries()) {
      if (!trainable(e.name)) continue;
      for (double g : grads.at(vars.at(e.name)).values()) norm2 += g * g;
    }
    const double norm = std::sqrt(norm2);
    const double factor =
        cfg.grad_clip > 0.0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
    for (NamedTensor& e : params.entries()) {
      if (!trainable(e.name)) continue;
      const Tensor& g = grads.at(vars.at(e.name));
      Tensor& v = velocity.try_emplace(e.name, Tensor(e.value.shape(), 0.0))
                      .first->second;
      const double lr =
          IsClassifierGroup(e.name) ? cfg.classifier_lr : cfg.backbone_lr;
      auto p = e.value.values();
      auto gv = g.values();
      auto vv = v.values();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = factor * gv[i] + cfg.weight_decay * p[i];
        vv[i] = cfg.momentum * vv[i] + d;
        p[i] -= lr * vv[i];
      }
    }
  }
};

TrainResult FineTune(const RunConfig& config, const PreparedData& data,
                     Method method, const TrainResult& source,
                     std::size_t epochs, std::uint64_t seed) {
  const MethodSpec spec = SpecOf(method);
  EncoderModel model = source.model;
  model.config = EncoderConfigFor(config, method);
  Rng streams = Rng(seed).Derive("finetune");
  Rng init = streams.Derive("init");
  ReinitUncertainty(model, init);
  AddObjectiveParameters(model, spec.objective, data.num_train_classes,
                         config.loss, init);
  StageSpec stage{MethodName(method), spec.objective, spec.flags,
                  ScoringFor(config, method), epochs};
  return TrainStage(config, data, std::move(model), stage, streams);
}

void CheckFamily(Method method, DistributionFamily family) {
  const MethodSpec spec = SpecOf(method);
  if (spec.objective == Objective::kHib && family != DistributionFamily::kNormal) {
    throw ConfigError(
        "hib uses unnormalized embeddings, which the vMF distribution cannot model");
  }
  if (spec.objective == Objective::kVmfLoss && family != DistributionFamily::kVmf) {
    throw ConfigError("vmf_loss has no normal-distribution counterpart");
  }
}

}  // namespace

PreparedData PrepareData(const DataConfig& config) {
  PreparedData d;
  d.dataset = SplitClasses(
      Generate(config.classes, config.per_class, config.dim, config.kappa,
               config.seed),
      config.seed);
  const auto train = d.dataset.IndicesOf(Split::kTrain);
  const auto val = d.dataset.IndicesOf(Split::kVal);
  const auto test = d.dataset.IndicesOf(Split::kTest);
  d.train_x = d.dataset.Features(train);
  d.val_x = d.dataset.Features(val);
  d.test_x = d.dataset.Features(test);
  d.train_y = Contiguous(d.dataset.Labels(train), &d.num_train_classes);
  d.val_y = d.dataset.Labels(val);
  d.test_y = d.dataset.Labels(test);
  const LabeledDataset test_split = d.dataset.Subset(Split::kTest);
  const LabeledDataset corrupted = Corrupt(test_split, config.seed);
  d.corrupted_x = corrupted.Features();
  for (const Sample& s : corrupted.samples) d.quality.push_back(*s.quality);
  d.test_pairs = SampleVerificationPairs(test_split, config.seed);
  return d;
}

EncoderConfig EncoderConfigFor(const RunConfig& config, Method method) {
  const MethodSpec spec = SpecOf(method);
  EncoderConfig e = config.encoder;
  e.input_dim = config.data.dim;
  e.distribution = spec.family;
  if (config.distribution) {
    if (spec.deterministic) {
      throw ConfigError(MethodName(method) +
                        " is deterministic; a distribution override does not apply");
    }
    e.distribution = *config.distribution;
  }
  CheckFamily(method, e.distribution);
  e.normalize_mean = spec.normalize_mean;
  e.shared_variance = spec.shared_variance;
  e.Validate();
  return e;
}

ScoringKind ScoringFor(const RunConfig& config, Method method) {
  return config.scoring.value_or(SpecOf(method).scoring);
}

TrainResult TrainStage(const RunConfig& config, const PreparedData& data,
                       EncoderModel model, const StageSpec& stage,
                       const Rng& streams) {
  stage.flags.Validate();
  Rng shuffle = streams.Derive("shuffle");
  const Rng noise = streams.Derive("noise");
  const Rng eval = streams.Derive("eval");
  const auto trainable = [&](const std::string& name) {
    return IsTrainable(name, stage.objective, stage.flags);
  };
  Optimizer opt{config.optimizer, {}};

  // Runs one pass over the training set; updates only when `update`.
  auto pass = [&](std::size_t epoch, bool update) {
    Rng batch_rng = update ? shuffle : streams.Derive("initial_pass");
    const auto batches =
        MakeBatches(data.train_y.size(), config.training.batch_size, batch_rng);
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Batch batch = MakeBatch(data, batches[b], stage.objective, batch_rng);
      Graph g;
      const ParamVars vars = BindParameters(g, model.params, trainable);
      NoiseTape tape(noise.Derive("batch", epoch * 1000003 + b));
      std::optional<Var> loss;
      try {
        loss = ObjectiveLoss(stage.objective, config.loss, model, vars, batch, tape);
      } catch (const NumericalError& e) {
        throw TrainingError(stage.name + ": numerical failure at epoch " +
                            std::to_string(epoch) + " batch " + std::to_string(b) +
                            ": " + e.what());
      }
      if (!loss) continue;
      const double value = loss->item();
      if (!std::isfinite(value)) {
        throw TrainingError(stage.name + ": non-finite loss at epoch " +
                            std::to_string(epoch) + " batch " + std::to_string(b));
      }
      total += value;
      ++counted;
      if (update) opt.Step(model.params, Gradient(*loss), vars, trainable);
    }
    if (update) shuffle = batch_rng;
    return counted ? total / static_cast<double>(counted)
                   : std::numeric_limits<double>::quiet_NaN();
  };

  TrainResult result;
  result.model = model;
  const double initial_loss = pass(0, false);
  const double initial_val = ValidationMapAtR(model, data, stage.val_scoring,
                                              eval.Derive("epoch", 0));
  result.log.push_back({0, initial_loss, initial_val});
  result.best_val_map_at_r = initial_val;
  bool have_best = false;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= stage.epochs; ++epoch) {
    const double train_loss = pass(epoch, true);
    for (const NamedTensor& e : model.params.entries()) {
      for (double v : e.value.values()) {
        if (!std::isfinite(v)) {
          throw TrainingError(stage.name + ": parameter " + e.name +
                              " became non-finite at epoch " + std::to_string(epoch));
        }
      }
    }
    const double val = ValidationMapAtR(model, data, stage.val_scoring,
                                        eval.Derive("epoch", epoch));
    result.log.push_back({epoch, train_loss, val});
    if (!have_best || val > result.best_val_map_at_r) {
      have_best = true;
      result.best_val_map_at_r = val;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= config.training.patience) {
      break;
    }
  }
  return result;
}

TrainResult Train(const RunConfig& config, const PreparedData& data,
                  Method method, std::uint64_t seed,
                  const TrainResult* pretrained) {
  const MethodSpec spec = SpecOf(method);
  if (method == Method::kDulRegCls) {
    return RunDulRegCls(config, data, seed, pretrained);
  }
  if (spec.needs_pretrain) {
    EncoderConfigFor(config, method);  // fail before pretraining
    if (pretrained) {
      return FineTune(config, data, method, *pretrained, config.training.epochs,
                      seed);
    }
    RunConfig source_config = config;
    source_config.distribution.reset();
    source_config.scoring.reset();
    const TrainResult source =
        Train(source_config, data, config.pretrain_source, seed);
    return FineTune(config, data, method, source, config.training.epochs, seed);
  }
  Rng streams(seed);
  Rng init = streams.Derive("init");
  EncoderModel model = InitEncoder(EncoderConfigFor(config, method), init);
  AddObjectiveParameters(model, spec.objective, data.num_train_classes,
                         config.loss, init);
  StageSpec stage{MethodName(method), spec.objective, spec.flags,
                  ScoringFor(config, method), config.training.epochs};
  return TrainStage(config, data, std::move(model), stage, streams);
}

TrainResult RunDulRegCls(const RunConfig& config, const PreparedData& data,
                         std::uint64_t seed, const TrainResult* stage1) {
  EncoderConfigFor(config, Method::kDulRegCls);
  TrainResult first;
  if (stage1) {
    first = *stage1;
  } else {
    RunConfig c1 = config;
    c1.distribution.reset();
    c1.scoring.reset();
    try {
      first = Train(c1, data, Method::kDulCls, seed);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string("stage 1 (dul_cls): ") + e.what());
    }
  }
  const std::size_t epochs =
      config.training.stage2_epochs.value_or(config.training.epochs);
  if (epochs == 0) return first;
  try {
    return FineTune(config, data, Method::kDulRegCls, first, epochs, seed);
  } catch (const TrainingError& e) {
    throw TrainingError(std::string("stage 2 (dul_reg): ") + e.what());
  }
}

RunConfig WithTunable(RunConfig config, const std::string& key, double value) {
  if (key == "backbone_lr") {
    config.optimizer.backbone_lr = value;
  } else if (key == "classifier_lr") {
    config.optimizer.classifier_lr = value;
  } else if (key == "kl_weight") {
    config.loss.kl_weight = value;
  } else if (key == "scale") {
    config.loss.scale = value;
  } else if (key == "margin") {
    config.loss.margin = value;
  } else {
    throw ConfigError("unknown tunable " + key);
  }
  return config;
}

SearchResult RandomSearch(const RunConfig& config, const PreparedData& data,
                          Method method) {
  if (!config.search) throw ConfigError("config has no search section");
  const SearchConfig& s = *config.search;
  Rng rng = Rng(s.seed).Derive("search." + MethodName(method));
  SearchResult result;
  result.best = config;
  double best = -1.0;
  for (std::size_t t = 0; t <= s.trials; ++t) {
    RunConfig candidate = config;
    SearchTrial trial;
    if (t > 0) {
      for (const auto& [key, range] : s.ranges) {
        const double u = rng.Uniform();
        const double v = range.log_scale
                             ? std::exp(std::log(range.lo) +
                                        u * (std::log(range.hi) - std::log(range.lo)))
                             : range.lo + u * (range.hi - range.lo);
        trial.values[key] = v;
        candidate = WithTunable(std::move(candidate), key, v);
      }
    }
    try {
      candidate.Validate();
      trial.val_map_at_r =
          Train(candidate, data, method, config.seeds.front()).best_val_map_at_r;
    } catch (const TrainingError&) {
      trial.failed = true;
    }
    if (!trial.failed && trial.val_map_at_r > best) {
      best = trial.val_map_at_r;
      result.best = candidate;
    }
    result.trials.push_back(std::move(trial));
  }
  return result;
}

}  // namespace pemb
