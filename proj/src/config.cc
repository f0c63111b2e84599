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

#include "pemb/config.h"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pemb/errors.h"

namespace pemb {
namespace {

using nlohmann::json;

const std::set<std::string>& TunableKeys() {
  static const std::set<std::string> keys = {
      "backbone_lr", "classifier_lr", "kl_weight", "scale", "margin"};
  return keys;
}

// Reads keys out of one JSON object and rejects whatever is left over.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool Has(const std::string& key) const { return j_.contains(key); }

  const json* Take(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void Read(const std::string& key, double& out) {
    if (const json* v = Take(key)) {
      if (!v->is_number()) Fail(key, "a number");
      out = v->get<double>();
    }
  }
  void Read(const std::string& key, std::size_t& out) {
    if (const json* v = Take(key)) out = AsCount(*v, key);
  }
  void Read(const std::string& key, std::uint64_t& out, int) {
    if (const json* v = Take(key)) out = AsCount(*v, key);
  }
  void Read(const std::string& key, bool& out) {
    if (const json* v = Take(key)) {
      if (!v->is_boolean()) Fail(key, "true or false");
      out = v->get<bool>();
    }
  }
  void Read(const std::string& key, std::string& out) {
    if (const json* v = Take(key)) {
      if (!v->is_string()) Fail(key, "a string");
      out = v->get<std::string>();
    }
  }
  template <typename T>
  void ReadList(const std::string& key, std::vector<T>& out) {
    if (const json* v = Take(key)) {
      if (!v->is_array()) Fail(key, "an array of counts");
      out.clear();
      for (const json& e : *v) out.push_back(static_cast<T>(AsCount(e, key)));
    }
  }

  std::string Path(const std::string& key) const { return path_ + "." + key; }

  void Finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key " + Path(key));
    }
  }

 private:
  std::uint64_t AsCount(const json& v, const std::string& key) const {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    Fail(key, "a non-negative integer");
  }
  [[noreturn]] void Fail(const std::string& key, const std::string& what) const {
    throw ConfigError(Path(key) + ": expected " + what);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void ReadData(const json& j, DataConfig& d) {
  ObjectReader r(j, "data");
  r.Read("classes", d.classes);
  r.Read("per_class", d.per_class);
  r.Read("dim", d.dim);
  r.Read("kappa", d.kappa);
  r.Read("seed", d.seed, 0);
  r.Finish();
}

void ReadEncoder(const json& j, EncoderConfig& e) {
  ObjectReader r(j, "encoder");
  r.ReadList("hidden_dims", e.hidden_dims);
  r.Read("embed_dim", e.embed_dim);
  r.Read("uncertainty_hidden", e.uncertainty_hidden);
  r.Finish();
}

void ReadLoss(const json& j, LossConfig& l) {
  ObjectReader r(j, "loss");
  r.Read("scale", l.scale);
  r.Read("margin", l.margin);
  r.Read("kl_weight", l.kl_weight);
  r.Read("mc_samples", l.mc_samples);
  r.Read("hib_alpha_init", l.hib_alpha_init);
  r.Read("hib_beta_init", l.hib_beta_init);
  r.Read("hib_log_var_init", l.hib_log_var_init);
  r.Read("vmf_beta_init", l.vmf_beta_init);
  r.Read("class_kappa_init", l.class_kappa_init);
  r.Finish();
}

void ReadOptimizer(const json& j, OptimizerConfig& o) {
  ObjectReader r(j, "optimizer");
  r.Read("backbone_lr", o.backbone_lr);
  r.Read("classifier_lr", o.classifier_lr);
  r.Read("momentum", o.momentum);
  r.Read("weight_decay", o.weight_decay);
  r.Read("grad_clip", o.grad_clip);
  r.Finish();
}

void ReadTraining(const json& j, TrainingConfig& t) {
  ObjectReader r(j, "training");
  r.Read("epochs", t.epochs);
  r.Read("patience", t.patience);
  r.Read("batch_size", t.batch_size);
  if (r.Has("stage2_epochs")) {
    std::size_t e = 0;
    r.Read("stage2_epochs", e);
    t.stage2_epochs = e;
  }
  r.Finish();
}

void ReadSearch(const json& j, SearchConfig& s) {
  ObjectReader r(j, "search");
  r.Read("trials", s.trials);
  r.Read("seed", s.seed, 0);
  if (const json* ranges = r.Take("ranges")) {
    if (!ranges->is_object()) throw ConfigError("search.ranges: expected an object");
    s.ranges.clear();
    for (const auto& [key, value] : ranges->items()) {
      if (!TunableKeys().count(key)) {
        throw ConfigError("unknown config key search.ranges." + key);
      }
      ObjectReader rr(value, "search.ranges." + key);
      SearchRange range;
      rr.Read("lo", range.lo);
      rr.Read("hi", range.hi);
      rr.Read("log", range.log_scale);
      rr.Finish();
      s.ranges[key] = range;
    }
  }
  r.Finish();
}

}  // namespace

SearchConfig DefaultSearch(std::size_t trials) {
  SearchConfig s;
  s.trials = trials;
  s.ranges["backbone_lr"] = {1e-3, 1e-1, true};
  s.ranges["classifier_lr"] = {1e-2, 1.0, true};
  return s;
}

void RunConfig::Validate() const {
  ParseMethod(method);
  if (data.classes % 8 != 0 || data.classes < 8) {
    throw ConfigError("data.classes must be a positive multiple of 8");
  }
  if (data.per_class < 2) throw ConfigError("data.per_class must be >= 2");
  if (data.dim < 2) throw ConfigError("data.dim must be >= 2");
  if (!(data.kappa > 0.0)) throw ConfigError("data.kappa must be > 0");
  if (encoder.input_dim != data.dim) {
    throw ConfigError("encoder input width must equal data.dim");
  }
  if (encoder.embed_dim < 2) throw ConfigError("encoder.embed_dim must be >= 2");
  for (std::size_t h : encoder.hidden_dims) {
    if (h == 0) throw ConfigError("encoder.hidden_dims entries must be > 0");
  }
  if (encoder.uncertainty_hidden == 0) {
    throw ConfigError("encoder.uncertainty_hidden must be > 0");
  }
  loss.Validate();
  if (!(optimizer.backbone_lr >= 0.0) || !(optimizer.classifier_lr >= 0.0)) {
    throw ConfigError("optimizer: learning rates must be >= 0");
  }
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) {
    throw ConfigError("optimizer.momentum must be in [0, 1)");
  }
  if (!(optimizer.grad_clip >= 0.0)) {
    throw ConfigError("optimizer.grad_clip must be >= 0");
  }
  if (!(optimizer.weight_decay >= 0.0)) {
    throw ConfigError("optimizer.weight_decay must be >= 0");
  }
  if (training.patience < 1) throw ConfigError("training.patience must be >= 1");
  if (training.batch_size < 2) throw ConfigError("training.batch_size must be >= 2");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (SpecOf(pretrain_source).needs_pretrain) {
    throw ConfigError("pretrain_source must train from scratch");
  }
  if (search) {
    for (const auto& [key, range] : search->ranges) {
      if (!(range.lo <= range.hi) || (range.log_scale && !(range.lo > 0.0))) {
        throw ConfigError("search.ranges." + key + ": invalid bounds");
      }
    }
  }
}

RunConfig ParseRunConfig(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  ObjectReader r(j, "config");
  r.Read("method", c.method);
  if (const json* v = r.Take("data")) ReadData(*v, c.data);
  if (const json* v = r.Take("encoder")) ReadEncoder(*v, c.encoder);
  c.encoder.input_dim = c.data.dim;
  if (const json* v = r.Take("loss")) ReadLoss(*v, c.loss);
  if (const json* v = r.Take("optimizer")) ReadOptimizer(*v, c.optimizer);
  if (const json* v = r.Take("training")) ReadTraining(*v, c.training);
  std::size_t scoring_samples = 8;
  r.Read("scoring_samples", scoring_samples);
  if (r.Has("scoring")) {
    std::string name;
    r.Read("scoring", name);
    c.scoring = ParseScoringKind(name, scoring_samples);
  }
  if (r.Has("distribution")) {
    std::string name;
    r.Read("distribution", name);
    c.distribution = ParseFamily(name);
  }
  if (r.Has("pretrain_source")) {
    std::string name;
    r.Read("pretrain_source", name);
    c.pretrain_source = ParseMethod(name);
  }
  r.ReadList("seeds", c.seeds);
  if (const json* v = r.Take("search")) {
    c.search = DefaultSearch(0);
    ReadSearch(*v, *c.search);
  }
  r.Finish();
  c.Validate();
  return c;
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseRunConfig(ss.str());
}

std::string RunConfigToJson(const RunConfig& c) {
  json j;
  j["method"] = c.method;
  j["data"] = {{"classes", c.data.classes},
               {"per_class", c.data.per_class},
               {"dim", c.data.dim},
               {"kappa", c.data.kappa},
               {"seed", c.data.seed}};
  j["encoder"] = {{"hidden_dims", c.encoder.hidden_dims},
                  {"embed_dim", c.encoder.embed_dim},
                  {"uncertainty_hidden", c.encoder.uncertainty_hidden}};
  j["loss"] = {{"scale", c.loss.scale},
               {"margin", c.loss.margin},
               {"kl_weight", c.loss.kl_weight},
               {"mc_samples", c.loss.mc_samples},
               {"hib_alpha_init", c.loss.hib_alpha_init},
               {"hib_beta_init", c.loss.hib_beta_init},
               {"hib_log_var_init", c.loss.hib_log_var_init},
               {"vmf_beta_init", c.loss.vmf_beta_init},
               {"class_kappa_init", c.loss.class_kappa_init}};
  j["optimizer"] = {{"backbone_lr", c.optimizer.backbone_lr},
                    {"classifier_lr", c.optimizer.classifier_lr},
                    {"momentum", c.optimizer.momentum},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"grad_clip", c.optimizer.grad_clip}};
  j["training"] = {{"epochs", c.training.epochs},
                   {"patience", c.training.patience},
                   {"batch_size", c.training.batch_size}};
  if (c.training.stage2_epochs) {
    j["training"]["stage2_epochs"] = *c.training.stage2_epochs;
  }
  if (c.scoring) {
    j["scoring"] = c.scoring->Name();
    j["scoring_samples"] = c.scoring->samples;
  }
  if (c.distribution) j["distribution"] = FamilyName(*c.distribution);
  j["pretrain_source"] = MethodName(c.pretrain_source);
  j["seeds"] = c.seeds;
  if (c.search) {
    json ranges = json::object();
    for (const auto& [key, r] : c.search->ranges) {
      ranges[key] = {{"lo", r.lo}, {"hi", r.hi}, {"log", r.log_scale}};
    }
    j["search"] = {{"trials", c.search->trials},
                   {"seed", c.search->seed},
                   {"ranges", ranges}};
  }
  return j.dump(2) + "\n";
}

}  // namespace pemb
