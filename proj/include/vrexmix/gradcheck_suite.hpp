// Copyright 2026 The vrexmix Authors.
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

// The fixed battery of finite-difference checks behind `vrexmix gradcheck`.

#ifndef VREXMIX_GRADCHECK_SUITE_HPP_
#define VREXMIX_GRADCHECK_SUITE_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace vrexmix {

struct GradCheckOptions {
  std::uint64_t seed = 0;
  int inputs = 100;  // random points per case
  double h = 1e-5;
  double tolerance = 1e-4;
  /// Swap in a ReLU whose backward ignores the sign mask. Used to show the
  /// harness catches a broken gradient.
  bool inject_relu_fault = false;
};

struct GradCheckCaseResult {
  std::string name;
  double max_relative_error = 0.0;
  int inputs = 0;
  bool passed = false;
};

/// Every differentiable op plus a two-hidden-layer MLP loss (each parameter
/// tensor checked in turn) and the variance-penalized objective over an MLP.
std::vector<GradCheckCaseResult> run_gradcheck_suite(const GradCheckOptions& options);

}  // namespace vrexmix

#endif  // VREXMIX_GRADCHECK_SUITE_HPP_
