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

// Training objectives: the variance-penalized multi-environment risk and
// Mixup sample construction.

#ifndef VREXMIX_OBJECTIVES_HPP_
#define VREXMIX_OBJECTIVES_HPP_

#include "vrexmix/data.hpp"
#include "vrexmix/model.hpp"
#include "vrexmix/tape.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace vrexmix {

/// Per-environment scalar risks stacked into an n x 1 node, in environment
/// order.
struct RiskVector {
  Traced<double> risks;

  std::size_t size() const { return static_cast<std::size_t>(risks.rows()); }
  double operator[](std::size_t i) const { return risks.value()(static_cast<Eigen::Index>(i), 0); }
};

std::string to_string(VarianceMode mode);
VarianceMode parse_variance_mode(const std::string& text);

struct VRExConfig {
  double lambda_max = 100.0;
  int warmup_epochs = 10;
  VarianceMode variance_mode = VarianceMode::population;

  void validate() const;
};

enum class Pairing { any, cross_domain };

std::string to_string(Pairing pairing);
Pairing parse_pairing(const std::string& text);

struct MixupConfig {
  double alpha = 0.2;
  Pairing pairing = Pairing::cross_domain;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Cross-entropy of each environment's batch under one-hot targets. Throws
/// ValidationError when the group does not hold exactly `expected_envs`
/// batches.
RiskVector per_environment_risks(Tape<double>& tape, const BoundParams& params,
                                 const BatchGroup& group, int num_classes,
                                 std::size_t expected_envs);

/// mean(L) + lambda * Var[L].
Traced<double> vrex_objective(const RiskVector& risks, double lambda,
                              VarianceMode mode = VarianceMode::population);

/// lambda_max * min(1, epoch / warmup_epochs); lambda_max when warmup is 0.
double lambda_at_epoch(const VRExConfig& config, int epoch);

struct MixedSample {
  std::vector<double> features;
  std::vector<double> soft_label;
};

/// lam * a + (1 - lam) * b for both features and one-hot labels.
MixedSample mixup_pair(const Example& a, const Example& b, double lam, int num_classes);

/// Draw from Beta(alpha, beta) as X / (X + Y) with X ~ Gamma(alpha), Y ~ Gamma(beta).
double sample_beta(double alpha, double beta, std::mt19937_64& rng);

struct MixedBatch {
  Tensor features;     // B x d
  Tensor soft_labels;  // B x C
  std::vector<double> lams;
  /// (environment index, example index) of both pair members per row.
  std::vector<std::pair<std::size_t, std::size_t>> first, second;
};

/// B pairs with one lam ~ Beta(alpha, alpha) each. `any` draws both members
/// uniformly from the pooled examples; `cross_domain` draws the first member
/// from the pool and the second uniformly from the examples of the other
/// environments. Deterministic in (config.seed, step_seed).
MixedBatch sample_mixup_batch(std::span<const Environment> envs, int batch_size,
                              const MixupConfig& config, std::uint64_t step_seed,
                              int num_classes);

/// softmax_cross_entropy(forward(params, features), soft_labels).
Traced<double> mixed_loss(Tape<double>& tape, const BoundParams& params, const MixedBatch& batch);

}  // namespace vrexmix

#endif  // VREXMIX_OBJECTIVES_HPP_
