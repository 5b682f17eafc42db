// Copyright 2026 The EWS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ews/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "ews/errors.hpp"

namespace ews {

namespace {

double evaluate(const ScalarGraph& f, const std::vector<Tensor>& params) {
  ad::Tape tape(false);
  std::vector<ad::Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p));
  const ad::Var out = f(tape, leaves);
  const double v = out.value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite objective");
  return v;
}

}  // namespace

GradCheckReport grad_check_report(const ScalarGraph& f,
                                  std::vector<Tensor> params, double step) {
  if (!(step > 0.0)) throw ConfigError("grad_check: step must be positive");
  std::vector<Tensor> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    const ad::Var out = f(tape, leaves);
    if (!std::isfinite(out.value().item()))
      throw NumericError("grad_check: non-finite objective");
    tape.backward(out);
    for (const auto& leaf : leaves) analytic.push_back(leaf.grad());
  }

  GradCheckReport report;
  for (std::size_t g = 0; g < params.size(); ++g) {
    for (std::size_t i = 0; i < params[g].size(); ++i) {
      const double original = params[g][i];
      params[g][i] = original + step;
      const double up = evaluate(f, params);
      params[g][i] = original - step;
      const double down = evaluate(f, params);
      params[g][i] = original;

      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[g][i];
      const double err =
          std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (err > report.max_rel_error || (g == 0 && i == 0)) {
        report = {err, g, i, a, numeric};
      }
    }
  }
  return report;
}

double grad_check(const ScalarGraph& f, std::vector<Tensor> params,
                  double step) {
  return grad_check_report(f, std::move(params), step).max_rel_error;
}

double grad_check(const std::function<ad::Var(ad::Tape&, ad::Var)>& f,
                  const Tensor& theta, double step) {
  return grad_check(
      [&f](ad::Tape& tape, std::span<const ad::Var> p) { return f(tape, p[0]); },
      {theta}, step);
}

}  // namespace ews
