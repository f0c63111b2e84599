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

#include "pemb/data.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pemb/distributions.h"
#include "pemb/errors.h"
#include "pemb/random.h"

namespace pemb {
namespace {

std::string FormatReal(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> SplitFields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T ParseNumber(const std::string& field, const char* what) {
  T value{};
  const char* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(std::string("dataset csv: bad ") + what + " '" + field +
                      "'");
  }
  return value;
}

}  // namespace

std::string SplitName(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split ParseSplit(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + name + "'");
}

std::vector<std::size_t> LabeledDataset::IndicesOf(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) out.push_back(i);
  }
  return out;
}

LabeledDataset LabeledDataset::Subset(Split split) const {
  LabeledDataset out{dim, num_classes, per_class, seed, {}};
  for (const Sample& s : samples) {
    if (s.split == split) out.samples.push_back(s);
  }
  return out;
}

Tensor LabeledDataset::Features(const std::vector<std::size_t>& indices) const {
  const std::size_t n = indices.empty() ? samples.size() : indices.size();
  Tensor out({n, dim});
  for (std::size_t r = 0; r < n; ++r) {
    const Tensor& x = samples[indices.empty() ? r : indices[r]].x;
    std::copy(x.values().begin(), x.values().end(), out.row(r).begin());
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::Labels(
    const std::vector<std::size_t>& indices) const {
  const std::size_t n = indices.empty() ? samples.size() : indices.size();
  std::vector<std::size_t> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    out[r] = samples[indices.empty() ? r : indices[r]].y;
  }
  return out;
}

LabeledDataset Generate(std::size_t num_classes, std::size_t per_class,
                        std::size_t dim, double kappa, std::uint64_t seed) {
  if (num_classes < 2 || per_class < 2 || dim < 2) {
    throw ConfigError("generate: need >= 2 classes, >= 2 samples per class, "
                      "dimension >= 2");
  }
  if (!(kappa > 0.0) || !std::isfinite(kappa)) {
    throw ConfigError("generate: kappa must be finite and > 0");
  }
  const Rng root(seed);
  Rng centroid_rng = root.Derive("data.centroids");
  Rng sample_rng = root.Derive("data.samples");
  LabeledDataset out{dim, num_classes, per_class, seed, {}};
  out.samples.reserve(num_classes * per_class);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const VonMisesFisher centroid{Tensor::Vector(centroid_rng.UnitVector(dim)),
                                  kappa};
    for (std::size_t i = 0; i < per_class; ++i) {
      out.samples.push_back(
          {SampleVmf(centroid, sample_rng), c, std::nullopt, Split::kTrain});
    }
  }
  return out;
}

LabeledDataset SplitClasses(const LabeledDataset& dataset, std::uint64_t seed) {
  const std::size_t c = dataset.num_classes;
  if (c % 8 != 0 || c == 0) {
    throw ConfigError("split_classes: class count " + std::to_string(c) +
                      " must be a positive multiple of 8");
  }
  std::vector<std::size_t> order(c);
  for (std::size_t i = 0; i < c; ++i) order[i] = i;
  Rng rng = Rng(seed).Derive("data.split");
  rng.Shuffle(order);
  std::vector<Split> assign(c);
  for (std::size_t pos = 0; pos < c; ++pos) {
    assign[order[pos]] = pos >= c / 2   ? Split::kTest
                         : pos < c / 8  ? Split::kVal
                                        : Split::kTrain;
  }
  LabeledDataset out = dataset;
  for (Sample& s : out.samples) s.split = assign.at(s.y);
  return out;
}

VerificationSet SampleVerificationPairs(const LabeledDataset& dataset,
                                        std::uint64_t seed) {
  const std::size_t n = dataset.samples.size();
  std::vector<std::pair<std::size_t, std::size_t>> positives;
  std::vector<std::size_t> class_size(dataset.num_classes, 0);
  for (const Sample& s : dataset.samples) ++class_size.at(s.y);
  for (std::size_t k = 0; k < class_size.size(); ++k) {
    if (class_size[k] == 1) {
      throw ConfigError("verification pairs: class " + std::to_string(k) +
                        " has a single element");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (dataset.samples[i].y == dataset.samples[j].y) {
        positives.push_back({i, j});
      }
    }
  }
  if (positives.empty() || positives.size() == n * (n - 1) / 2) {
    throw ConfigError("verification pairs: need both same-class and "
                      "different-class pairs");
  }
  Rng rng = Rng(seed).Derive("data.pairs");
  VerificationSet out;
  out.pairs.reserve(2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& [i, j] = positives[rng.Index(positives.size())];
    out.pairs.push_back({i, j, true});
  }
  // Rejection over ordered pairs, then ordered so i < j: uniform over
  // unordered different-class pairs.
  while (out.pairs.size() < 2 * n) {
    const std::size_t i = rng.Index(n);
    const std::size_t j = rng.Index(n);
    if (dataset.samples[i].y == dataset.samples[j].y) continue;
    out.pairs.push_back({std::min(i, j), std::max(i, j), false});
  }
  return out;
}

LabeledDataset Corrupt(const LabeledDataset& dataset, std::uint64_t seed,
                       bool force_full_quality) {
  for (const Sample& s : dataset.samples) {
    if (s.quality.has_value()) {
      throw ContractError("corrupt: dataset is already corrupted");
    }
  }
  Rng rng = Rng(seed).Derive("data.corrupt");
  LabeledDataset out = dataset;
  for (Sample& s : out.samples) {
    const double q = force_full_quality ? 1.0 : rng.Uniform(0.5, 1.0);
    const std::vector<double> eta = rng.UnitVector(dataset.dim);
    s.quality = q;
    if (force_full_quality) continue;
    std::vector<double> mixed(dataset.dim);
    for (std::size_t d = 0; d < dataset.dim; ++d) {
      mixed[d] = q * s.x[d] + (1.0 - q) * eta[d];
    }
    s.x = Tensor::Vector(Normalized(mixed));
  }
  return out;
}

std::string DatasetToCsv(const LabeledDataset& dataset) {
  std::string out = std::to_string(dataset.dim) + "," +
                    std::to_string(dataset.num_classes) + "," +
                    std::to_string(dataset.per_class) + "," +
                    std::to_string(dataset.seed) + "\n";
  for (const Sample& s : dataset.samples) {
    out += SplitName(s.split) + "," + std::to_string(s.y) + ",";
    if (s.quality) out += FormatReal(*s.quality);
    for (double v : s.x.values()) out += "," + FormatReal(v);
    out += "\n";
  }
  return out;
}

LabeledDataset DatasetFromCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset csv: empty");
  const auto head = SplitFields(line);
  if (head.size() != 4) throw ConfigError("dataset csv: bad header");
  LabeledDataset out;
  out.dim = ParseNumber<std::size_t>(head[0], "D");
  out.num_classes = ParseNumber<std::size_t>(head[1], "C");
  out.per_class = ParseNumber<std::size_t>(head[2], "n");
  out.seed = ParseNumber<std::uint64_t>(head[3], "seed");
  if (out.dim < 1) throw ConfigError("dataset csv: D must be >= 1");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = SplitFields(line);
    if (f.size() != out.dim + 3) {
      throw ConfigError("dataset csv: expected " +
                        std::to_string(out.dim + 3) + " fields, got " +
                        std::to_string(f.size()));
    }
    Sample s;
    s.split = ParseSplit(f[0]);
    s.y = ParseNumber<std::size_t>(f[1], "label");
    if (s.y >= out.num_classes) throw ConfigError("dataset csv: label out of range");
    if (!f[2].empty()) s.quality = ParseNumber<double>(f[2], "quality");
    std::vector<double> x(out.dim);
    for (std::size_t d = 0; d < out.dim; ++d) {
      x[d] = ParseNumber<double>(f[d + 3], "feature");
    }
    s.x = Tensor::Vector(std::move(x));
    out.samples.push_back(std::move(s));
  }
  return out;
}

void SaveDataset(const LabeledDataset& dataset,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << DatasetToCsv(dataset);
}

LabeledDataset LoadDataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return DatasetFromCsv(buf.str());
}

}  // namespace pemb
