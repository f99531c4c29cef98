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

// Feed-forward ReLU classifier over tabular features.

#ifndef VREXMIX_MODEL_HPP_
#define VREXMIX_MODEL_HPP_

#include "vrexmix/tape.hpp"
#include "vrexmix/tensor.hpp"

#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

namespace vrexmix {

enum class InitScheme { he, xavier };

std::string to_string(InitScheme scheme);
InitScheme parse_init_scheme(const std::string& text);

struct ModelConfig {
  int input_dim = 6;
  std::vector<int> hidden_dims = {32, 32};
  int num_classes = 2;
  InitScheme init_scheme = InitScheme::he;
  std::uint64_t seed = 0;

  /// Throws ValidationError on non-positive dimensions or fewer than 2 classes.
  void validate() const;
};

struct Layer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
};

/// Layer k maps row vectors of width weight.rows() to width weight.cols().
struct ModelParams {
  std::vector<Layer> layers;

  int input_dim() const;
  int num_classes() const;
  std::size_t parameter_count() const;

  /// Every layer with all entries zero and the same shapes.
  ModelParams zeros_like() const;

  /// Throws ShapeError if consecutive layers do not chain.
  void validate() const;

  bool operator==(const ModelParams& other) const;
};

/// He: normal with std sqrt(2/in). Xavier: uniform on +-sqrt(6/(in+out)).
/// Biases start at zero. Deterministic per config.seed.
ModelParams init_params(const ModelConfig& config);

/// ModelParams placed on a tape as gradient-receiving leaves.
template <typename Scalar>
struct BasicBoundParams {
  std::vector<Traced<Scalar>> weights;
  std::vector<Traced<Scalar>> biases;
};
using BoundParams = BasicBoundParams<double>;

BoundParams bind(Tape<double>& tape, const ModelParams& params);

/// Gradients of every layer, shaped like the parameters.
ModelParams collect_gradients(const Gradients<double>& grads, const BoundParams& bound);

/// affine -> relu through the hidden layers, final affine without activation.
template <typename Scalar>
Traced<Scalar> forward(Tape<Scalar>& tape, const BasicBoundParams<Scalar>& bound,
                       const std::type_identity_t<Matrix<Scalar>>& batch) {
  if (bound.weights.empty()) throw ShapeError("forward: model has no layers");
  const Eigen::Index width = bound.weights.front().rows();
  if (batch.cols() != width)
    throw ShapeError("forward: batch width " + std::to_string(batch.cols()) +
                     " does not match input_dim " + std::to_string(width));
  Traced<Scalar> h = tape.constant(batch);
  for (std::size_t k = 0; k < bound.weights.size(); ++k) {
    h = add_row_broadcast(matmul(h, bound.weights[k]), bound.biases[k]);
    if (k + 1 < bound.weights.size()) h = relu(h);
  }
  return h;
}

/// Untraced logits for evaluation.
Tensor logits(const ModelParams& params, const Tensor& batch);

/// Row-wise argmax; ties go to the lower class index.
std::vector<int> argmax_rows(const Tensor& scores);

std::vector<int> predict(const ModelParams& params, const Tensor& batch);

}  // namespace vrexmix

#endif  // VREXMIX_MODEL_HPP_
