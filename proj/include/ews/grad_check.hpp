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

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ews/autodiff.hpp"
#include "ews/tensor.hpp"

namespace ews {

// Builds a scalar graph from parameter leaves placed on `tape`.
using ScalarGraph =
    std::function<ad::Var(ad::Tape& tape, std::span<const ad::Var> params)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_group = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares tape gradients with central differences f(θ+h) - f(θ-h) / 2h for
// every coordinate of every group. Per-coordinate error is
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
GradCheckReport grad_check_report(const ScalarGraph& f,
                                  std::vector<Tensor> params,
                                  double step = 1e-5);

double grad_check(const ScalarGraph& f, std::vector<Tensor> params,
                  double step = 1e-5);

double grad_check(const std::function<ad::Var(ad::Tape&, ad::Var)>& f,
                  const Tensor& theta, double step = 1e-5);

}  // namespace ews
