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

#include "pemb/encoder.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pemb/errors.h"

namespace pemb {
namespace {

constexpr std::string_view kMagic = "PEMB1";
constexpr double kKappaFloor = 1e-3;

static_assert(std::endian::native == std::endian::little,
              "PEMB1 serialization assumes a little-endian host");

std::string LayerName(std::string_view prefix, std::size_t i,
                      std::string_view part) {
  return std::string(prefix) + "." + std::to_string(i) + "." +
         std::string(part);
}

// Uniform(-b, b) with b = sqrt(6 / fan_in) for ReLU layers and
// sqrt(1 / fan_in) for linear outputs.
void AddLinear(ParameterSet& params, const std::string& weight,
               const std::string& bias, std::size_t in, std::size_t out,
               bool relu, Rng& rng) {
  const double bound =
      std::sqrt((relu ? 6.0 : 1.0) / static_cast<double>(in));
  Tensor w({in, out});
  for (double& v : w.values()) v = rng.Uniform(-bound, bound);
  params.Set(weight, std::move(w));
  params.Set(bias, Tensor({out}, 0.0));
}

Var Affine(const ParamVars& vars, const std::string& weight,
           const std::string& bias, const Var& x) {
  return MatMul(x, vars.at(weight)) + vars.at(bias);
}

template <typename T>
void Put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T Take(std::string_view& in) {
  if (in.size() < sizeof(T)) throw ConfigError("PEMB1: truncated file");
  T v;
  std::memcpy(&v, in.data(), sizeof(T));
  in.remove_prefix(sizeof(T));
  return v;
}

std::vector<std::pair<std::string, Shape>> ExpectedShapes(
    const EncoderConfig& c) {
  std::vector<std::pair<std::string, Shape>> out;
  std::size_t in = c.input_dim;
  for (std::size_t i = 0; i < c.hidden_dims.size(); ++i) {
    out.push_back({LayerName("backbone", i, "weight"), {in, c.hidden_dims[i]}});
    out.push_back({LayerName("backbone", i, "bias"), {c.hidden_dims[i]}});
    in = c.hidden_dims[i];
  }
  out.push_back({"mean.weight", {in, c.embed_dim}});
  out.push_back({"mean.bias", {c.embed_dim}});
  const std::size_t widths[] = {in, c.uncertainty_hidden, c.uncertainty_hidden,
                                c.UncertaintyDim()};
  for (std::size_t i = 0; i < 3; ++i) {
    out.push_back({LayerName("uncertainty", i, "weight"),
                   {widths[i], widths[i + 1]}});
    out.push_back({LayerName("uncertainty", i, "bias"), {widths[i + 1]}});
  }
  return out;
}

}  // namespace

std::string FamilyName(DistributionFamily family) {
  return family == DistributionFamily::kNormal ? "normal" : "vmf";
}

DistributionFamily ParseFamily(const std::string& name) {
  if (name == "normal") return DistributionFamily::kNormal;
  if (name == "vmf") return DistributionFamily::kVmf;
  throw ConfigError("unknown distribution '" + name + "'");
}

void EncoderConfig::Validate() const {
  if (input_dim < 1) throw ConfigError("encoder: input_dim must be >= 1");
  if (embed_dim < 2) throw ConfigError("encoder: embed_dim must be >= 2");
  if (hidden_dims.empty()) {
    throw ConfigError("encoder: hidden_dims must be nonempty");
  }
  for (std::size_t h : hidden_dims) {
    if (h < 1) throw ConfigError("encoder: hidden widths must be >= 1");
  }
  if (uncertainty_hidden < 1) {
    throw ConfigError("encoder: uncertainty_hidden must be >= 1");
  }
  if (distribution == DistributionFamily::kVmf && !normalize_mean) {
    throw ConfigError("encoder: the vMF distribution needs normalized means");
  }
}

std::size_t EncoderConfig::UncertaintyDim() const {
  return (distribution == DistributionFamily::kVmf || shared_variance)
             ? 1
             : embed_dim;
}

void ParameterSet::Add(std::string name, Tensor value) {
  if (Contains(name)) throw ContractError("duplicate parameter " + name);
  entries_.push_back({std::move(name), std::move(value)});
}

void ParameterSet::Set(const std::string& name, Tensor value) {
  for (NamedTensor& e : entries_) {
    if (e.name == name) {
      e.value = std::move(value);
      return;
    }
  }
  entries_.push_back({name, std::move(value)});
}

bool ParameterSet::Contains(std::string_view name) const {
  for (const NamedTensor& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

Tensor& ParameterSet::Get(std::string_view name) {
  for (NamedTensor& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw ContractError("no parameter named " + std::string(name));
}

const Tensor& ParameterSet::Get(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->Get(name);
}

ParamVars BindParameters(Graph& graph, const ParameterSet& params,
                         const TrainablePredicate& trainable) {
  ParamVars vars;
  for (const NamedTensor& e : params.entries()) {
    vars.emplace(e.name, trainable && trainable(e.name)
                             ? graph.Parameter(e.value, e.name)
                             : graph.Constant(e.value));
  }
  return vars;
}

EncoderModel InitEncoder(const EncoderConfig& config, Rng& rng) {
  config.Validate();
  EncoderModel model{config, {}};
  std::size_t in = config.input_dim;
  for (std::size_t i = 0; i < config.hidden_dims.size(); ++i) {
    AddLinear(model.params, LayerName("backbone", i, "weight"),
              LayerName("backbone", i, "bias"), in, config.hidden_dims[i],
              true, rng);
    in = config.hidden_dims[i];
  }
  AddLinear(model.params, "mean.weight", "mean.bias", in, config.embed_dim,
            false, rng);
  ReinitUncertainty(model, rng);
  return model;
}

void ReinitUncertainty(EncoderModel& model, Rng& rng) {
  const EncoderConfig& c = model.config;
  const std::size_t in = c.hidden_dims.back();
  const std::size_t widths[] = {in, c.uncertainty_hidden, c.uncertainty_hidden,
                                c.UncertaintyDim()};
  for (std::size_t i = 0; i < 3; ++i) {
    AddLinear(model.params, LayerName("uncertainty", i, "weight"),
              LayerName("uncertainty", i, "bias"), widths[i], widths[i + 1],
              i < 2, rng);
  }
}

bool IsUncertaintyParameter(const std::string& name) {
  return name.rfind("uncertainty.", 0) == 0;
}

bool IsBackboneParameter(const std::string& name) {
  return name.rfind("backbone.", 0) == 0 || name.rfind("mean.", 0) == 0;
}

EncoderOutputs Forward(const EncoderModel& model, const ParamVars& vars,
                       const Var& x) {
  const EncoderConfig& c = model.config;
  Var h = x;
  for (std::size_t i = 0; i < c.hidden_dims.size(); ++i) {
    h = Relu(Affine(vars, LayerName("backbone", i, "weight"),
                    LayerName("backbone", i, "bias"), h));
  }
  EncoderOutputs out;
  out.raw_mean = Affine(vars, "mean.weight", "mean.bias", h);
  out.mean = c.normalize_mean ? L2Normalize(out.raw_mean) : out.raw_mean;
  Var u = h;
  for (std::size_t i = 0; i < 3; ++i) {
    u = Affine(vars, LayerName("uncertainty", i, "weight"),
               LayerName("uncertainty", i, "bias"), u);
    if (i < 2) u = Relu(u);
  }
  out.uncertainty = c.distribution == DistributionFamily::kNormal
                        ? u
                        : Softplus(u) + kKappaFloor;
  return out;
}

std::vector<PredictedDistribution> EncodeBatch(const EncoderModel& model,
                                               const Tensor& xs) {
  Graph g;
  const ParamVars vars = BindParameters(g, model.params, nullptr);
  const EncoderOutputs out = Forward(model, vars, g.Constant(xs));
  const Tensor& mean = out.mean.value();
  const Tensor& unc = out.uncertainty.value();
  const std::size_t dim = model.config.embed_dim;
  std::vector<PredictedDistribution> result;
  result.reserve(mean.rows());
  for (std::size_t b = 0; b < mean.rows(); ++b) {
    if (model.config.distribution == DistributionFamily::kVmf) {
      result.push_back(VonMisesFisher{mean.Row(b), unc.at(b, 0)});
    } else if (unc.cols() == 1) {
      result.push_back(DiagonalNormal{mean.Row(b), Tensor({dim}, unc.at(b, 0))});
    } else {
      result.push_back(DiagonalNormal{mean.Row(b), unc.Row(b)});
    }
  }
  return result;
}

PredictedDistribution Encode(const EncoderModel& model, const Tensor& x) {
  return EncodeBatch(model, x.Reshaped({1, x.size()})).front();
}

TargetEmbeddings TargetsOf(const EncoderModel& model) {
  if (!model.params.Contains(kTargetsName)) {
    throw ConfigError("model has no classification head");
  }
  Tensor rows = model.params.Get(kTargetsName);
  for (std::size_t c = 0; c < rows.rows(); ++c) {
    const std::vector<double> u = Normalized(rows.row(c));
    std::copy(u.begin(), u.end(), rows.row(c).begin());
  }
  return {std::move(rows)};
}

Tensor ClassLogits(const TargetEmbeddings& targets, const Tensor& mu) {
  if (mu.size() != targets.rows.cols()) {
    throw ContractError("ClassLogits: dimension mismatch");
  }
  const double norm = Norm(mu.values());
  if (std::abs(norm - 1.0) > 1e-6) {
    throw ContractError("ClassLogits: mean must be unit norm, got norm " +
                        std::to_string(norm));
  }
  Tensor logits({targets.rows.rows()});
  for (std::size_t c = 0; c < logits.size(); ++c) {
    logits[c] = std::clamp(Dot(targets.rows.row(c), mu.values()), -1.0, 1.0);
  }
  return logits;
}

std::vector<double> PrenormMagnitudes(const EncoderModel& model,
                                      const Tensor& xs) {
  Graph g;
  const ParamVars vars = BindParameters(g, model.params, nullptr);
  const Tensor& raw = Forward(model, vars, g.Constant(xs)).raw_mean.value();
  std::vector<double> out(raw.rows());
  for (std::size_t b = 0; b < raw.rows(); ++b) out[b] = Norm(raw.row(b));
  return out;
}

double PrenormMagnitude(const EncoderModel& model, const Tensor& x) {
  return PrenormMagnitudes(model, x.Reshaped({1, x.size()})).front();
}

std::string SerializeParameters(const ParameterSet& params) {
  std::string out(kMagic);
  for (const NamedTensor& e : params.entries()) {
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t extent : e.value.shape()) {
      Put<std::uint64_t>(out, extent);
    }
    for (double v : e.value.values()) Put<double>(out, v);
  }
  return out;
}

ParameterSet DeserializeParameters(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) {
    throw ConfigError("PEMB1: bad magic");
  }
  bytes.remove_prefix(kMagic.size());
  ParameterSet params;
  while (!bytes.empty()) {
    const auto len = Take<std::uint32_t>(bytes);
    if (bytes.size() < len) throw ConfigError("PEMB1: truncated name");
    std::string name(bytes.substr(0, len));
    bytes.remove_prefix(len);
    const auto rank = Take<std::uint32_t>(bytes);
    if (rank == 0 || rank > 8) throw ConfigError("PEMB1: bad rank for " + name);
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& extent : shape) {
      extent = Take<std::uint64_t>(bytes);
      if (extent == 0 || extent > (1u << 30)) {
        throw ConfigError("PEMB1: bad extent for " + name);
      }
      count *= extent;
    }
    if (bytes.size() / sizeof(double) < count) {
      throw ConfigError("PEMB1: truncated values for " + name);
    }
    std::vector<double> values(count);
    for (double& v : values) v = Take<double>(bytes);
    if (params.Contains(name)) throw ConfigError("PEMB1: duplicate " + name);
    params.Add(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return params;
}

void SaveModel(const EncoderModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write model to " + path.string());
  const std::string bytes = SerializeParameters(model.params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing model to " + path.string());
}

EncoderModel LoadModel(const std::filesystem::path& path,
                       const EncoderConfig& config) {
  config.Validate();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read model " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  EncoderModel model{config, DeserializeParameters(buf.str())};
  for (const auto& [name, shape] : ExpectedShapes(config)) {
    if (!model.params.Contains(name)) {
      throw ConfigError("model is missing parameter " + name);
    }
    if (model.params.Get(name).shape() != shape) {
      throw ConfigError("parameter " + name + " has shape " +
                        ShapeString(model.params.Get(name).shape()) +
                        ", config expects " + ShapeString(shape));
    }
  }
  return model;
}

}  // namespace pemb
