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

#include "vrexmix/model.hpp"

#include "vrexmix/error.hpp"

#include <cmath>
#include <random>

namespace vrexmix {

std::string to_string(InitScheme scheme) {
  return scheme == InitScheme::he ? "he" : "xavier";
}

InitScheme parse_init_scheme(const std::string& text) {
  if (text == "he") return InitScheme::he;
  if (text == "xavier") return InitScheme::xavier;
  throw ValidationError("unknown init scheme '" + text + "' (expected he or xavier)");
}

void ModelConfig::validate() const {
  if (input_dim <= 0) throw ValidationError("model: input_dim must be positive");
  for (int h : hidden_dims)
    if (h <= 0) throw ValidationError("model: hidden dims must be positive");
  if (num_classes < 2) throw ValidationError("model: num_classes must be at least 2");
}

int ModelParams::input_dim() const {
  return layers.empty() ? 0 : static_cast<int>(layers.front().weight.rows());
}

int ModelParams::num_classes() const {
  return layers.empty() ? 0 : static_cast<int>(layers.back().weight.cols());
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out;
  out.layers.reserve(layers.size());
  for (const auto& l : layers)
    out.layers.push_back({Tensor::Zero(l.weight.rows(), l.weight.cols()),
                          Tensor::Zero(l.bias.rows(), l.bias.cols())});
  return out;
}

void ModelParams::validate() const {
  if (layers.empty()) throw ShapeError("model: no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols())
      throw ShapeError("model: layer " + std::to_string(k) + " bias " + shape_string(l.bias) +
                       " does not match weight " + shape_string(l.weight));
    if (k > 0 && layers[k - 1].weight.cols() != l.weight.rows())
      throw ShapeError("model: layer " + std::to_string(k - 1) + " output " +
                       std::to_string(layers[k - 1].weight.cols()) + " does not feed layer " +
                       std::to_string(k) + " input " + std::to_string(l.weight.rows()));
  }
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t k = 0; k < layers.size(); ++k)
    if (!bitwise_equal(layers[k].weight, other.layers[k].weight) ||
        !bitwise_equal(layers[k].bias, other.layers[k].bias))
      return false;
  return true;
}

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  std::vector<int> dims;
  dims.push_back(config.input_dim);
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(config.num_classes);

  std::mt19937_64 rng(config.seed);
  ModelParams params;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const int in = dims[k];
    const int out = dims[k + 1];
    Layer layer{Tensor(in, out), Tensor::Zero(1, out)};
    if (config.init_scheme == InitScheme::he) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / in));
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
    } else {
      const double limit = std::sqrt(6.0 / (in + out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

BoundParams bind(Tape<double>& tape, const ModelParams& params) {
  BoundParams bound;
  for (const auto& l : params.layers) {
    bound.weights.push_back(tape.variable(l.weight));
    bound.biases.push_back(tape.variable(l.bias));
  }
  return bound;
}

ModelParams collect_gradients(const Gradients<double>& grads, const BoundParams& bound) {
  ModelParams out;
  for (std::size_t k = 0; k < bound.weights.size(); ++k)
    out.layers.push_back({grads.of(bound.weights[k]), grads.of(bound.biases[k])});
  return out;
}

Tensor logits(const ModelParams& params, const Tensor& batch) {
  params.validate();
  if (batch.cols() != params.input_dim())
    throw ShapeError("logits: batch width " + std::to_string(batch.cols()) +
                     " does not match input_dim " + std::to_string(params.input_dim()));
  Tensor h = batch;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& l = params.layers[k];
    Tensor next = h * l.weight;
    next.rowwise() += l.bias.row(0);
    if (k + 1 < params.layers.size()) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return h;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(r, c) > scores(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const ModelParams& params, const Tensor& batch) {
  return argmax_rows(logits(params, batch));
}

}  // namespace vrexmix
