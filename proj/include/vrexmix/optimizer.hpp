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

#ifndef VREXMIX_OPTIMIZER_HPP_
#define VREXMIX_OPTIMIZER_HPP_

#include "vrexmix/model.hpp"

#include <cstdint>
#include <string>

namespace vrexmix {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moments (shaped like the parameters) and the number of steps taken.
/// Moments stay empty for SGD.
struct OptimizerState {
  std::int64_t step = 0;
  ModelParams first_moment;
  ModelParams second_moment;

  bool operator==(const OptimizerState&) const = default;
};

/// sgd: p -= lr * g. adam: bias-corrected moment update.
/// Throws ValidationError when grads do not match params layer for layer.
void optimizer_step(ModelParams& params, const ModelParams& grads, OptimizerState& state,
                    const OptimizerConfig& config);

}  // namespace vrexmix

#endif  // VREXMIX_OPTIMIZER_HPP_
