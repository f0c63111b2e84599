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

#ifndef PEMB_RANDOM_H_
#define PEMB_RANDOM_H_

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pemb {

// Seeded generator with platform-independent variates. The engine is
// std::mt19937_64 (fully specified by the standard); the distributions are
// implemented here because the std:: ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  // Independent stream keyed by (seed, tag, index). Used to give data
  // generation, initialization, shuffling and sampling their own streams.
  Rng Derive(std::string_view tag, std::uint64_t index = 0) const;

  std::uint64_t NextU64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double Uniform();
  // Uniform on (0, 1), never 0.
  double UniformOpen();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  double Normal();
  // Marsaglia-Tsang; shape > 0.
  double Gamma(double shape);
  double Beta(double a, double b);
  // Uniform on [0, n).
  std::size_t Index(std::size_t n);
  std::vector<double> NormalVector(std::size_t dim);
  // Uniform direction on the (dim-1)-sphere.
  std::vector<double> UnitVector(std::size_t dim);

  template <typename T>
  void Shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[Index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

std::uint64_t SplitMix64(std::uint64_t x);

}  // namespace pemb

#endif  // PEMB_RANDOM_H_
