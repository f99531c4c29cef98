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

// Multi-environment datasets: representation, synthetic generation, CSV I/O
// and environment-stratified batching.

#ifndef VREXMIX_DATA_HPP_
#define VREXMIX_DATA_HPP_

#include "vrexmix/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vrexmix {

struct Example {
  std::vector<double> features;
  int label = 0;
  int domain_id = 0;

  bool operator==(const Example&) const = default;
};

/// One source domain.
struct Environment {
  int domain_id = 0;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  Tensor features() const;
  std::vector<int> labels() const;

  bool operator==(const Environment&) const = default;
};

struct DatasetBundle {
  std::vector<Environment> train_envs;
  std::vector<Environment> val_envs;
  std::vector<Environment> test_envs;  // held-out shifted environments, may be empty
  int feature_dim = 0;
  int num_classes = 2;

  /// Checks >= 2 train environments, nonempty environments, consistent widths
  /// and labels in range.
  void validate() const;

  bool operator==(const DatasetBundle&) const = default;
};

/// Parameters of the two-block generator: an invariant Gaussian block whose
/// mean follows the label in every environment, plus one spurious scalar
/// whose sign agrees with the label with an environment-specific probability.
struct SpuriousSpec {
  int n_train_envs = 4;
  std::vector<double> train_correlations = {0.95, 0.9, 0.85, 0.8};
  double test_correlation = 0.1;
  int n_invariant_dims = 5;
  double invariant_mean = 1.0;
  double invariant_std = 1.0;
  double spurious_mean = 3.0;
  double spurious_std = 0.5;
  std::vector<int> train_sizes = {281, 281, 281, 281};
  std::vector<int> val_sizes = {77, 77, 77, 77};
  int test_size = 308;
  double class_balance = 564.0 / 1124.0;
  double val_class_balance = 128.0 / 308.0;
  /// Exact per-split class counts (largest-remainder allocation across
  /// environments, then shuffled) instead of independent Bernoulli labels.
  bool exact_class_counts = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Splits `total` into `parts` sizes differing by at most one, larger first.
std::vector<int> even_split(int total, int parts);

/// Train environments get domain ids 0..n-1, validation environments reuse
/// those ids (same sources, fresh draws) and the test environment gets id n.
DatasetBundle generate_spurious_environments(const SpuriousSpec& spec);

/// Draws a single environment; used by the bundle generator.
Environment generate_environment(const SpuriousSpec& spec, int domain_id, int size,
                                 double correlation, int class_one_count,
                                 std::uint64_t stream_seed);

// CSV: header `domain_id,label,f0,...,f{d-1}`, LF line endings, no quoting.

void write_csv(const std::filesystem::path& path, std::span<const Environment> envs);

/// Number of feature columns named in the header.
int csv_feature_dim(const std::filesystem::path& path);

/// Rows grouped by domain id into environments in order of first appearance;
/// row order within an environment is preserved.
std::vector<Environment> load_csv(const std::filesystem::path& path, int feature_dim,
                                  int num_classes);

/// train.csv, val.csv and (if present) test.csv under `dir`.
void write_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle);
DatasetBundle load_bundle(const std::filesystem::path& dir, int num_classes = 2);

struct Batch {
  int domain_id = 0;
  Tensor features;
  std::vector<int> labels;
};

using BatchGroup = std::vector<Batch>;

/// One epoch of per-step batch groups, one batch per environment.
///
/// Each environment is shuffled independently from the epoch seed. There are
/// ceil(max_size / batch_size) steps; step s takes positions
/// [s*batch_size, min((s+1)*batch_size, max_size)) of every environment's
/// shuffled order, taken modulo that environment's size. The largest
/// environment is therefore seen exactly once and smaller ones cycle.
class StratifiedBatches {
 public:
  StratifiedBatches(std::span<const Environment> envs, int batch_size, std::uint64_t epoch_seed);

  std::size_t steps() const { return steps_; }
  std::size_t batch_size_at(std::size_t step) const;

  /// Example indices of environment `env` used at `step`.
  std::vector<std::size_t> indices(std::size_t env, std::size_t step) const;

  BatchGroup at(std::size_t step) const;

  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = BatchGroup;
    using difference_type = std::ptrdiff_t;

    iterator(const StratifiedBatches* owner, std::size_t step) : owner_(owner), step_(step) {}
    BatchGroup operator*() const { return owner_->at(step_); }
    iterator& operator++() {
      ++step_;
      return *this;
    }
    bool operator==(const iterator& other) const { return step_ == other.step_; }

   private:
    const StratifiedBatches* owner_;
    std::size_t step_;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, steps_}; }

 private:
  std::span<const Environment> envs_;
  std::size_t batch_size_;
  std::size_t max_size_ = 0;
  std::size_t steps_ = 0;
  std::vector<std::vector<std::size_t>> order_;
};

/// Stacks examples into a feature matrix and a label list.
Batch make_batch(const Environment& env, std::span<const std::size_t> indices);

/// One-hot rows for `labels`.
Tensor one_hot(std::span<const int> labels, int num_classes);

}  // namespace vrexmix

#endif  // VREXMIX_DATA_HPP_
