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

#ifndef PEMB_TESTS_GRADCHECK_H_
#define PEMB_TESTS_GRADCHECK_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pemb/autodiff.h"
#include "pemb/tensor.h"

namespace pemb::testing {

// Builds a scalar from parameters bound into a fresh graph.
using ScalarFn = std::function<Var(Graph&, const std::vector<Var>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;
};

// Compares reverse-mode gradients with central differences of step h.
// Relative error uses max(|analytic|, |numeric|, floor) as denominator so
// components that are zero on both sides do not blow up the ratio.
inline GradCheckResult GradCheck(const ScalarFn& fn,
                                 const std::vector<Tensor>& params,
                                 double h = 1e-5, double floor = 1e-3) {
  auto eval = [&](const std::vector<Tensor>& ps) {
    Graph g;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      vars.push_back(g.Parameter(ps[i], "p" + std::to_string(i)));
    }
    return fn(g, vars).item();
  };
  Graph g;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars.push_back(g.Parameter(params[i], "p" + std::to_string(i)));
  }
  const Gradients grads = Gradient(fn(g, vars));

  GradCheckResult result;
  std::vector<Tensor> work = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor& analytic = grads.at(vars[p]);
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double orig = work[p][i];
      work[p][i] = orig + h;
      const double up = eval(work);
      work[p][i] = orig - h;
      const double down = eval(work);
      work[p][i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = "param " + std::to_string(p) + "[" + std::to_string(i) +
                       "] analytic=" + std::to_string(analytic[i]) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace pemb::testing

#endif  // PEMB_TESTS_GRADCHECK_H_
