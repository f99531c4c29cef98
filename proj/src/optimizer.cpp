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

#include "vrexmix/optimizer.hpp"

#include "vrexmix/error.hpp"

#include <cmath>

namespace vrexmix {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "sgd") return OptimizerKind::sgd;
  if (text == "adam") return OptimizerKind::adam;
  throw ValidationError("unknown optimizer '" + text + "' (expected sgd or adam)");
}

namespace {

void check_matching(const ModelParams& params, const ModelParams& grads) {
  if (params.layers.size() != grads.layers.size())
    throw ValidationError("optimizer_step: " + std::to_string(grads.layers.size()) +
                          " gradient layers for " + std::to_string(params.layers.size()) +
                          " parameter layers");
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& p = params.layers[k];
    const auto& g = grads.layers[k];
    if (p.weight.rows() != g.weight.rows() || p.weight.cols() != g.weight.cols() ||
        p.bias.rows() != g.bias.rows() || p.bias.cols() != g.bias.cols())
      throw ValidationError("optimizer_step: gradient shapes for layer " + std::to_string(k) +
                            " do not match the parameters");
  }
}

void adam_update(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, const OptimizerConfig& c,
                 double correction1, double correction2) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
  p.array() -= c.lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + c.eps);
}

}  // namespace

void optimizer_step(ModelParams& params, const ModelParams& grads, OptimizerState& state,
                    const OptimizerConfig& config) {
  check_matching(params, grads);
  ++state.step;
  if (config.kind == OptimizerKind::sgd) {
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
      params.layers[k].weight -= config.lr * grads.layers[k].weight;
      params.layers[k].bias -= config.lr * grads.layers[k].bias;
    }
    return;
  }

  if (state.first_moment.layers.empty()) {
    state.first_moment = params.zeros_like();
    state.second_moment = params.zeros_like();
  }
  check_matching(params, state.first_moment);
  check_matching(params, state.second_moment);
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    adam_update(params.layers[k].weight, grads.layers[k].weight, state.first_moment.layers[k].weight,
                state.second_moment.layers[k].weight, config, correction1, correction2);
    adam_update(params.layers[k].bias, grads.layers[k].bias, state.first_moment.layers[k].bias,
                state.second_moment.layers[k].bias, config, correction1, correction2);
  }
}

}  // namespace vrexmix
