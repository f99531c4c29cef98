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

// Confusion matrices, per-class and macro F1, and the per-source average.

#ifndef VREXMIX_METRICS_HPP_
#define VREXMIX_METRICS_HPP_

#include "vrexmix/data.hpp"
#include "vrexmix/model.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace vrexmix {

/// counts(t, p): examples of true class t predicted as p.
struct ConfusionMatrix {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

  int num_classes() const { return static_cast<int>(counts.rows()); }
  std::int64_t total() const { return counts.sum(); }
  bool operator==(const ConfusionMatrix& o) const { return counts == o.counts; }
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted,
                          int num_classes);

/// F1 per class with 0/0 := 0 for precision, recall and F1.
std::vector<double> per_class_f1(const ConfusionMatrix& cm);

/// Unweighted mean of per_class_f1. Throws ValidationError on an empty matrix.
double macro_f1(const ConfusionMatrix& cm);

struct DomainEval {
  int domain_id = 0;
  ConfusionMatrix confusion;
  std::vector<double> f1;
  double macro_f1 = 0.0;
  std::int64_t n = 0;
};

struct EvalReport {
  std::vector<DomainEval> per_domain;  // in input environment order
  double average_macro_f1 = 0.0;       // unweighted mean over domains
  double weighted_macro_f1 = 0.0;      // weighted by domain size
  double pooled_macro_f1 = 0.0;        // macro F1 of the summed confusion matrix
};

/// Predict, tally and score every environment.
EvalReport evaluate(const ModelParams& params, std::span<const Environment> envs);

/// Builds the report from already-computed predictions, one list per env.
EvalReport summarize(std::span<const Environment> envs,
                     const std::vector<std::vector<int>>& predictions, int num_classes);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

/// `domain_id,macro_f1,f1_class0,...,n` with one row per domain.
std::string report_to_csv(const EvalReport& report);

}  // namespace vrexmix

#endif  // VREXMIX_METRICS_HPP_
