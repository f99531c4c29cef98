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

#include "vrexmix/data.hpp"

#include "vrexmix/config.hpp"
#include "vrexmix/error.hpp"
#include "vrexmix/seed.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace vrexmix {

namespace {

void check_probability(double p, const std::string& name) {
  if (!(p >= 0.0 && p <= 1.0))
    throw ValidationError(name + " must be a probability in [0,1], got " + std::to_string(p));
}

/// Class-1 counts per environment summing to round(balance * total).
std::vector<int> allocate_class_one(const std::vector<int>& sizes, double balance) {
  const long total = std::accumulate(sizes.begin(), sizes.end(), 0L);
  const long target = std::lround(balance * static_cast<double>(total));
  std::vector<int> counts(sizes.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  long assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double ideal = balance * sizes[i];
    counts[i] = static_cast<int>(std::floor(ideal));
    assigned += counts[i];
    remainders.emplace_back(ideal - counts[i], i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < target && k < remainders.size(); ++k) {
    const std::size_t i = remainders[k].second;
    if (counts[i] < sizes[i]) {
      ++counts[i];
      ++assigned;
    }
  }
  return counts;
}

template <typename T>
bool parse_number(std::string_view field, T& out) {
  if (field.empty()) return false;
  auto res = std::from_chars(field.data(), field.data() + field.size(), out);
  return res.ec == std::errc() && res.ptr == field.data() + field.size();
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string expected_header(int feature_dim) {
  std::string h = "domain_id,label";
  for (int k = 0; k < feature_dim; ++k) h += ",f" + std::to_string(k);
  return h;
}

}  // namespace

Tensor Environment::features() const {
  if (examples.empty()) return Tensor(0, 0);
  Tensor out(static_cast<Eigen::Index>(examples.size()),
             static_cast<Eigen::Index>(examples.front().features.size()));
  for (std::size_t i = 0; i < examples.size(); ++i)
    for (std::size_t k = 0; k < examples[i].features.size(); ++k)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = examples[i].features[k];
  return out;
}

std::vector<int> Environment::labels() const {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.label);
  return out;
}

void DatasetBundle::validate() const {
  if (train_envs.size() < 2)
    throw ValidationError("dataset: need at least 2 training environments, got " +
                          std::to_string(train_envs.size()));
  if (num_classes < 2) throw ValidationError("dataset: num_classes must be at least 2");
  auto check = [this](const std::vector<Environment>& envs, const char* split) {
    for (const auto& env : envs) {
      if (env.examples.empty())
        throw ValidationError(std::string("dataset: empty ") + split + " environment " +
                              std::to_string(env.domain_id));
      for (const auto& ex : env.examples) {
        if (static_cast<int>(ex.features.size()) != feature_dim)
          throw ShapeError(std::string("dataset: ") + split + " example has " +
                           std::to_string(ex.features.size()) + " features, expected " +
                           std::to_string(feature_dim));
        if (ex.label < 0 || ex.label >= num_classes)
          throw ValidationError(std::string("dataset: label ") + std::to_string(ex.label) +
                                " out of range");
        if (ex.domain_id != env.domain_id)
          throw ValidationError("dataset: example domain id does not match its environment");
      }
    }
  };
  check(train_envs, "train");
  check(val_envs, "val");
  check(test_envs, "test");
}

void SpuriousSpec::validate() const {
  if (n_train_envs < 1) throw ValidationError("n_train_envs must be positive");
  if (static_cast<int>(train_correlations.size()) != n_train_envs)
    throw ValidationError("train_correlations has " + std::to_string(train_correlations.size()) +
                          " entries, expected n_train_envs = " + std::to_string(n_train_envs));
  for (double p : train_correlations) check_probability(p, "train correlation");
  check_probability(test_correlation, "test_correlation");
  check_probability(class_balance, "class_balance");
  check_probability(val_class_balance, "val_class_balance");
  if (n_invariant_dims < 0) throw ValidationError("n_invariant_dims must be nonnegative");
  if (invariant_std < 0 || spurious_std < 0)
    throw ValidationError("noise standard deviations must be nonnegative");
  if (static_cast<int>(train_sizes.size()) != n_train_envs)
    throw ValidationError("train_sizes has " + std::to_string(train_sizes.size()) +
                          " entries, expected " + std::to_string(n_train_envs));
  if (!val_sizes.empty() && static_cast<int>(val_sizes.size()) != n_train_envs)
    throw ValidationError("val_sizes has " + std::to_string(val_sizes.size()) +
                          " entries, expected " + std::to_string(n_train_envs));
  for (int s : train_sizes)
    if (s <= 0) throw ValidationError("environment sizes must be positive");
  for (int s : val_sizes)
    if (s <= 0) throw ValidationError("environment sizes must be positive");
  if (test_size < 0) throw ValidationError("test_size must be nonnegative");
}

std::vector<int> even_split(int total, int parts) {
  if (parts <= 0) throw ValidationError("even_split: parts must be positive");
  std::vector<int> out(static_cast<std::size_t>(parts), total / parts);
  for (int i = 0; i < total % parts; ++i) ++out[static_cast<std::size_t>(i)];
  return out;
}

Environment generate_environment(const SpuriousSpec& spec, int domain_id, int size,
                                 double correlation, int class_one_count,
                                 std::uint64_t stream_seed) {
  std::mt19937_64 rng(stream_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  std::vector<int> labels(static_cast<std::size_t>(size));
  if (spec.exact_class_counts) {
    std::fill(labels.begin(), labels.begin() + class_one_count, 1);
    std::fill(labels.begin() + class_one_count, labels.end(), 0);
    std::shuffle(labels.begin(), labels.end(), rng);
  } else {
    // Bernoulli labels with the allocated count as the expectation.
    const double rate = size > 0 ? static_cast<double>(class_one_count) / size : 0.0;
    for (auto& y : labels) y = uniform(rng) < rate ? 1 : 0;
  }

  Environment env;
  env.domain_id = domain_id;
  env.examples.reserve(labels.size());
  for (int y : labels) {
    const double sign = 2.0 * y - 1.0;
    Example ex;
    ex.label = y;
    ex.domain_id = domain_id;
    ex.features.reserve(static_cast<std::size_t>(spec.n_invariant_dims) + 1);
    for (int k = 0; k < spec.n_invariant_dims; ++k)
      ex.features.push_back(spec.invariant_mean * sign + spec.invariant_std * normal(rng));
    const int shown = uniform(rng) < correlation ? y : 1 - y;
    ex.features.push_back(spec.spurious_mean * (2.0 * shown - 1.0) +
                          spec.spurious_std * normal(rng));
    env.examples.push_back(std::move(ex));
  }
  return env;
}

DatasetBundle generate_spurious_environments(const SpuriousSpec& spec) {
  spec.validate();
  DatasetBundle bundle;
  bundle.feature_dim = spec.n_invariant_dims + 1;
  bundle.num_classes = 2;

  const auto train_ones = allocate_class_one(spec.train_sizes, spec.class_balance);
  for (int e = 0; e < spec.n_train_envs; ++e) {
    const auto i = static_cast<std::size_t>(e);
    bundle.train_envs.push_back(generate_environment(
        spec, e, spec.train_sizes[i], spec.train_correlations[i], train_ones[i],
        derive_seed(spec.seed, {0, i})));
  }
  const auto val_ones = allocate_class_one(spec.val_sizes, spec.val_class_balance);
  for (std::size_t i = 0; i < spec.val_sizes.size(); ++i) {
    bundle.val_envs.push_back(generate_environment(spec, static_cast<int>(i), spec.val_sizes[i],
                                                   spec.train_correlations[i], val_ones[i],
                                                   derive_seed(spec.seed, {1, i})));
  }
  if (spec.test_size > 0) {
    const auto test_ones = allocate_class_one({spec.test_size}, spec.val_class_balance);
    bundle.test_envs.push_back(generate_environment(spec, spec.n_train_envs, spec.test_size,
                                                    spec.test_correlation, test_ones[0],
                                                    derive_seed(spec.seed, {2, 0})));
  }
  return bundle;
}

void write_csv(const std::filesystem::path& path, std::span<const Environment> envs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  int dim = -1;
  for (const auto& env : envs)
    if (!env.examples.empty()) {
      dim = static_cast<int>(env.examples.front().features.size());
      break;
    }
  out << expected_header(std::max(dim, 0)) << '\n';
  std::string line;
  for (const auto& env : envs)
    for (const auto& ex : env.examples) {
      line = std::to_string(ex.domain_id) + "," + std::to_string(ex.label);
      for (double v : ex.features) {
        line += ',';
        line += format_double(v);
      }
      line += '\n';
      out << line;
    }
  if (!out) throw IoError("failed writing " + path.string());
}

int csv_feature_dim(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw ParseError("missing header row", 1);
  const auto fields = split_commas(header);
  if (fields.size() < 2 || fields[0] != "domain_id" || fields[1] != "label")
    throw SchemaError(path.string() + ": header must start with domain_id,label");
  const int dim = static_cast<int>(fields.size()) - 2;
  if (header != expected_header(dim))
    throw SchemaError(path.string() + ": feature columns must be named f0..f" +
                      std::to_string(dim - 1));
  return dim;
}

std::vector<Environment> load_csv(const std::filesystem::path& path, int feature_dim,
                                  int num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header row", 1);
  if (line != expected_header(feature_dim)) {
    const auto width = static_cast<long>(split_commas(line).size()) - 2;
    throw SchemaError(path.string() + ": header has " + std::to_string(width) +
                      " feature columns, expected " + std::to_string(feature_dim));
  }

  std::vector<Environment> envs;
  std::map<int, std::size_t> slot;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    const auto fields = split_commas(line);
    if (static_cast<int>(fields.size()) != feature_dim + 2)
      throw SchemaError(path.string() + ": line " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(feature_dim + 2));
    Example ex;
    if (!parse_number(fields[0], ex.domain_id))
      throw ParseError(path.string() + ": bad domain_id '" + std::string(fields[0]) + "'", line_no);
    if (!parse_number(fields[1], ex.label))
      throw ParseError(path.string() + ": bad label '" + std::string(fields[1]) + "'", line_no);
    if (ex.domain_id < 0)
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) +
                            ": domain_id must be nonnegative");
    if (ex.label < 0 || ex.label >= num_classes)
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": label " +
                            std::to_string(ex.label) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    ex.features.resize(static_cast<std::size_t>(feature_dim));
    for (int k = 0; k < feature_dim; ++k) {
      const auto field = fields[static_cast<std::size_t>(k) + 2];
      if (!parse_number(field, ex.features[static_cast<std::size_t>(k)]))
        throw ParseError(path.string() + ": non-numeric feature f" + std::to_string(k) + " '" +
                             std::string(field) + "'",
                         line_no);
    }
    auto [it, inserted] = slot.try_emplace(ex.domain_id, envs.size());
    if (inserted) envs.push_back(Environment{ex.domain_id, {}});
    envs[it->second].examples.push_back(std::move(ex));
  }
  return envs;
}

void write_bundle(const std::filesystem::path& dir, const DatasetBundle& bundle) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  write_csv(dir / "train.csv", bundle.train_envs);
  write_csv(dir / "val.csv", bundle.val_envs);
  if (!bundle.test_envs.empty()) write_csv(dir / "test.csv", bundle.test_envs);
}

DatasetBundle load_bundle(const std::filesystem::path& dir, int num_classes) {
  DatasetBundle bundle;
  bundle.num_classes = num_classes;
  bundle.feature_dim = csv_feature_dim(dir / "train.csv");
  bundle.train_envs = load_csv(dir / "train.csv", bundle.feature_dim, num_classes);
  if (std::filesystem::exists(dir / "val.csv"))
    bundle.val_envs = load_csv(dir / "val.csv", bundle.feature_dim, num_classes);
  if (std::filesystem::exists(dir / "test.csv"))
    bundle.test_envs = load_csv(dir / "test.csv", bundle.feature_dim, num_classes);
  bundle.validate();
  return bundle;
}

StratifiedBatches::StratifiedBatches(std::span<const Environment> envs, int batch_size,
                                     std::uint64_t epoch_seed)
    : envs_(envs) {
  if (envs.empty()) throw ValidationError("stratified_batches: no environments");
  if (batch_size < 1) throw ValidationError("stratified_batches: batch_size must be >= 1");
  batch_size_ = static_cast<std::size_t>(batch_size);
  for (std::size_t e = 0; e < envs.size(); ++e) {
    if (envs[e].examples.empty())
      throw ValidationError("stratified_batches: environment " + std::to_string(envs[e].domain_id) +
                            " is empty");
    max_size_ = std::max(max_size_, envs[e].size());
    std::vector<std::size_t> order(envs[e].size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(epoch_seed, {e}));
    std::shuffle(order.begin(), order.end(), rng);
    order_.push_back(std::move(order));
  }
  steps_ = (max_size_ + batch_size_ - 1) / batch_size_;
}

std::size_t StratifiedBatches::batch_size_at(std::size_t step) const {
  return std::min(batch_size_, max_size_ - step * batch_size_);
}

std::vector<std::size_t> StratifiedBatches::indices(std::size_t env, std::size_t step) const {
  if (step >= steps_) throw ValidationError("stratified_batches: step out of range");
  const auto& order = order_.at(env);
  const std::size_t start = step * batch_size_;
  const std::size_t count = batch_size_at(step);
  std::vector<std::size_t> out(count);
  for (std::size_t j = 0; j < count; ++j) out[j] = order[(start + j) % order.size()];
  return out;
}

BatchGroup StratifiedBatches::at(std::size_t step) const {
  BatchGroup group;
  group.reserve(envs_.size());
  for (std::size_t e = 0; e < envs_.size(); ++e) {
    const auto idx = indices(e, step);
    group.push_back(make_batch(envs_[e], idx));
  }
  return group;
}

Batch make_batch(const Environment& env, std::span<const std::size_t> indices) {
  Batch batch;
  batch.domain_id = env.domain_id;
  const auto dim = env.examples.empty() ? 0 : env.examples.front().features.size();
  batch.features.resize(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(dim));
  batch.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const Example& ex = env.examples.at(indices[r]);
    for (std::size_t k = 0; k < dim; ++k)
      batch.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = ex.features[k];
    batch.labels.push_back(ex.label);
  }
  return batch;
}

Tensor one_hot(std::span<const int> labels, int num_classes) {
  Tensor out = Tensor::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || labels[r] >= num_classes)
      throw ValidationError("one_hot: label " + std::to_string(labels[r]) + " out of range");
    out(static_cast<Eigen::Index>(r), labels[r]) = 1.0;
  }
  return out;
}

}  // namespace vrexmix
