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

#include "vrexmix/objectives.hpp"

#include "vrexmix/error.hpp"
#include "vrexmix/seed.hpp"

#include <algorithm>
#include <cmath>

namespace vrexmix {

std::string to_string(VarianceMode mode) {
  return mode == VarianceMode::population ? "population" : "sample";
}

VarianceMode parse_variance_mode(const std::string& text) {
  if (text == "population") return VarianceMode::population;
  if (text == "sample") return VarianceMode::sample;
  throw ValidationError("unknown variance mode '" + text + "' (expected population or sample)");
}

void VRExConfig::validate() const {
  if (!(lambda_max >= 0.0)) throw ValidationError("vrex.lambda_max must be nonnegative");
  if (warmup_epochs < 0) throw ValidationError("vrex.warmup_epochs must be nonnegative");
}

std::string to_string(Pairing pairing) {
  return pairing == Pairing::any ? "any" : "cross_domain";
}

Pairing parse_pairing(const std::string& text) {
  if (text == "any") return Pairing::any;
  if (text == "cross_domain") return Pairing::cross_domain;
  throw ValidationError("unknown pairing '" + text + "' (expected any or cross_domain)");
}

void MixupConfig::validate() const {
  if (!(alpha > 0.0)) throw ValidationError("mixup.alpha must be positive");
}

RiskVector per_environment_risks(Tape<double>& tape, const BoundParams& params,
                                 const BatchGroup& group, int num_classes,
                                 std::size_t expected_envs) {
  if (group.size() != expected_envs)
    throw ValidationError("per_environment_risks: got batches for " +
                          std::to_string(group.size()) + " environments, expected " +
                          std::to_string(expected_envs));
  std::vector<Traced<double>> risks;
  risks.reserve(group.size());
  for (const Batch& batch : group) {
    const Traced<double> out = forward(tape, params, batch.features);
    risks.push_back(softmax_cross_entropy(out, one_hot(batch.labels, num_classes)));
  }
  return RiskVector{stack(risks)};
}

Traced<double> vrex_objective(const RiskVector& risks, double lambda, VarianceMode mode) {
  if (!(lambda >= 0.0))
    throw ValidationError("vrex_objective: lambda must be nonnegative, got " +
                          std::to_string(lambda));
  const Traced<double> mean = reduce_mean(risks.risks);
  const Traced<double> var = variance(risks.risks, mode);
  return add(mean, scale(var, lambda));
}

double lambda_at_epoch(const VRExConfig& config, int epoch) {
  if (config.warmup_epochs <= 0) return config.lambda_max;
  const double ramp = std::min(1.0, static_cast<double>(epoch) / config.warmup_epochs);
  return config.lambda_max * ramp;
}

MixedSample mixup_pair(const Example& a, const Example& b, double lam, int num_classes) {
  if (a.features.size() != b.features.size())
    throw ShapeError("mixup_pair: feature lengths " + std::to_string(a.features.size()) + " and " +
                     std::to_string(b.features.size()) + " differ");
  if (!(lam >= 0.0 && lam <= 1.0))
    throw ValidationError("mixup_pair: lam must lie in [0,1], got " + std::to_string(lam));
  if (a.label < 0 || a.label >= num_classes || b.label < 0 || b.label >= num_classes)
    throw ValidationError("mixup_pair: label out of range");

  MixedSample out;
  out.features.resize(a.features.size());
  for (std::size_t k = 0; k < a.features.size(); ++k)
    out.features[k] = lam * a.features[k] + (1.0 - lam) * b.features[k];
  out.soft_label.assign(static_cast<std::size_t>(num_classes), 0.0);
  out.soft_label[static_cast<std::size_t>(a.label)] += lam;
  out.soft_label[static_cast<std::size_t>(b.label)] += 1.0 - lam;
  return out;
}

double sample_beta(double alpha, double beta, std::mt19937_64& rng) {
  std::gamma_distribution<double> ga(alpha, 1.0);
  std::gamma_distribution<double> gb(beta, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  const double sum = x + y;
  // Both draws can underflow to zero for tiny shapes.
  if (!(sum > 0.0)) return alpha / (alpha + beta);
  return x / sum;
}

MixedBatch sample_mixup_batch(std::span<const Environment> envs, int batch_size,
                              const MixupConfig& config, std::uint64_t step_seed,
                              int num_classes) {
  config.validate();
  if (batch_size < 1) throw ValidationError("sample_mixup_batch: batch_size must be >= 1");
  if (envs.empty()) throw ValidationError("sample_mixup_batch: no environments");
  if (config.pairing == Pairing::cross_domain && envs.size() < 2)
    throw ValidationError("sample_mixup_batch: cross_domain pairing needs at least 2 environments");

  std::vector<std::size_t> offsets{0};
  for (const auto& env : envs) {
    if (env.examples.empty()) throw ValidationError("sample_mixup_batch: empty environment");
    offsets.push_back(offsets.back() + env.size());
  }
  const std::size_t pool = offsets.back();
  auto locate = [&offsets](std::size_t flat) {
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
    const auto env = static_cast<std::size_t>(it - offsets.begin()) - 1;
    return std::pair<std::size_t, std::size_t>{env, flat - offsets[env]};
  };

  std::mt19937_64 rng(derive_seed(config.seed, {step_seed}));
  const auto dim = envs.front().examples.front().features.size();
  MixedBatch out;
  out.features.resize(batch_size, static_cast<Eigen::Index>(dim));
  out.soft_labels.resize(batch_size, num_classes);
  for (int r = 0; r < batch_size; ++r) {
    const auto first = locate(std::uniform_int_distribution<std::size_t>(0, pool - 1)(rng));
    std::pair<std::size_t, std::size_t> second;
    if (config.pairing == Pairing::any) {
      second = locate(std::uniform_int_distribution<std::size_t>(0, pool - 1)(rng));
    } else {
      // Uniform over the pool with the first member's environment removed.
      const std::size_t own = envs[first.first].size();
      std::size_t flat = std::uniform_int_distribution<std::size_t>(0, pool - own - 1)(rng);
      if (flat >= offsets[first.first]) flat += own;
      second = locate(flat);
    }
    const double lam = sample_beta(config.alpha, config.alpha, rng);
    const MixedSample mixed = mixup_pair(envs[first.first].examples[first.second],
                                         envs[second.first].examples[second.second], lam,
                                         num_classes);
    for (std::size_t k = 0; k < dim; ++k) out.features(r, static_cast<Eigen::Index>(k)) = mixed.features[k];
    for (int c = 0; c < num_classes; ++c)
      out.soft_labels(r, c) = mixed.soft_label[static_cast<std::size_t>(c)];
    out.lams.push_back(lam);
    out.first.push_back(first);
    out.second.push_back(second);
  }
  return out;
}

Traced<double> mixed_loss(Tape<double>& tape, const BoundParams& params, const MixedBatch& batch) {
  return softmax_cross_entropy(forward(tape, params, batch.features), batch.soft_labels);
}

}  // namespace vrexmix
