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

#include "vrexmix/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

namespace vrexmix {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vrexmix_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::pair<int, int> counts(const std::vector<Environment>& envs) {
  int n = 0, ones = 0;
  for (const auto& e : envs)
    for (const auto& ex : e.examples) {
      ++n;
      ones += ex.label;
    }
  return {n, ones};
}

Environment env_of(int domain, int size) {
  Environment e;
  e.domain_id = domain;
  for (int i = 0; i < size; ++i) e.examples.push_back({{static_cast<double>(i)}, i % 2, domain});
  return e;
}

TEST(Generator, NoiselessFullyCorrelated) {
  SpuriousSpec spec;
  spec.invariant_std = 0.0;
  spec.spurious_std = 0.0;
  const Environment env = generate_environment(spec, 3, 20, 1.0, 20, 7);
  for (const auto& ex : env.examples) {
    EXPECT_EQ(ex.label, 1);
    EXPECT_EQ(ex.domain_id, 3);
    EXPECT_EQ(ex.features, (std::vector<double>{1, 1, 1, 1, 1, 3}));
  }
}

TEST(Generator, DefaultSizes) {
  const DatasetBundle b = generate_spurious_environments(SpuriousSpec{});
  EXPECT_EQ(b.train_envs.size(), 4u);
  EXPECT_EQ(b.val_envs.size(), 4u);
  EXPECT_EQ(b.test_envs.size(), 1u);
  EXPECT_EQ(b.feature_dim, 6);
  const auto [n_train, ones_train] = counts(b.train_envs);
  const auto [n_val, ones_val] = counts(b.val_envs);
  EXPECT_EQ(n_train, 1124);
  EXPECT_EQ(ones_train, 564);
  EXPECT_EQ(n_val, 308);
  EXPECT_EQ(ones_val, 128);
  EXPECT_EQ(counts(b.test_envs).first, 308);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(b.train_envs[static_cast<std::size_t>(i)].domain_id, i);
    EXPECT_EQ(b.val_envs[static_cast<std::size_t>(i)].domain_id, i);
  }
  EXPECT_EQ(b.test_envs[0].domain_id, 4);
}

TEST(Generator, DeterministicPerSeed) {
  SpuriousSpec spec;
  spec.seed = 12;
  EXPECT_EQ(generate_spurious_environments(spec), generate_spurious_environments(spec));
  SpuriousSpec other = spec;
  other.seed = 13;
  EXPECT_NE(generate_spurious_environments(spec), generate_spurious_environments(other));
}

TEST(Generator, BayesAccuracyOnInvariantBlock) {
  // Equal priors: the Bayes rule is the sign of the invariant sum, with
  // accuracy Phi(sqrt(5)).
  const Environment env = generate_environment(SpuriousSpec{}, 0, 100000, 0.5, 50000, 99);
  int correct = 0;
  for (const auto& ex : env.examples) {
    const double s = std::accumulate(ex.features.begin(), ex.features.begin() + 5, 0.0);
    correct += (s > 0 ? 1 : 0) == ex.label;
  }
  const double bayes = 0.5 * std::erfc(-std::sqrt(5.0) / std::sqrt(2.0));
  EXPECT_NEAR(bayes, 0.987, 5e-4);
  EXPECT_NEAR(correct / 1e5, bayes, 0.01);
}

TEST(Generator, SpuriousCorrelationMatchesP) {
  for (const double p : {0.95, 0.8, 0.5, 0.1}) {
    const Environment env = generate_environment(SpuriousSpec{}, 0, 10000, p, 5000, 5);
    double s = 0;
    for (const auto& ex : env.examples)
      s += (ex.features.back() > 0 ? 1.0 : -1.0) * (2.0 * ex.label - 1.0);
    EXPECT_NEAR(s / 1e4, 2 * p - 1, 0.05) << p;
  }
}

TEST(Generator, BernoulliLabelsWithinThreeStandardErrors) {
  SpuriousSpec spec;
  spec.exact_class_counts = false;
  spec.train_sizes = {2000, 2000, 2000, 2000};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    spec.seed = seed;
    const DatasetBundle b = generate_spurious_environments(spec);
    for (const auto& env : b.train_envs) {
      const double n = static_cast<double>(env.size());
      double ones = 0;
      for (const auto& ex : env.examples) ones += ex.label;
      const double se = std::sqrt(spec.class_balance * (1 - spec.class_balance) / n);
      EXPECT_LE(std::abs(ones / n - spec.class_balance), 3 * se);
    }
  }
}

TEST(Generator, InvalidSpecRejected) {
  SpuriousSpec bad;
  bad.train_correlations = {0.9, 1.2, 0.8, 0.7};
  EXPECT_THROW(generate_spurious_environments(bad), ValidationError);
  bad = SpuriousSpec{};
  bad.test_correlation = -0.1;
  EXPECT_THROW(generate_spurious_environments(bad), ValidationError);
  bad = SpuriousSpec{};
  bad.train_correlations = {0.9, 0.8};
  EXPECT_THROW(generate_spurious_environments(bad), ValidationError);
  bad = SpuriousSpec{};
  bad.train_sizes = {10, 0, 10, 10};
  EXPECT_THROW(generate_spurious_environments(bad), ValidationError);
}

TEST(Generator, EvenSplit) {
  EXPECT_EQ(even_split(1124, 4), (std::vector<int>{281, 281, 281, 281}));
  EXPECT_EQ(even_split(10, 3), (std::vector<int>{4, 3, 3}));
  EXPECT_THROW(even_split(10, 0), ValidationError);
}

TEST(Csv, TwoRowsTwoDomains) {
  const fs::path dir = temp_dir("two_rows");
  write_text(dir / "d.csv", "domain_id,label,f0,f1\n0,1,0.5,-2\n1,0,3,4e-3\n");
  const auto envs = load_csv(dir / "d.csv", 2, 2);
  ASSERT_EQ(envs.size(), 2u);
  EXPECT_EQ(envs[0].domain_id, 0);
  EXPECT_EQ(envs[1].domain_id, 1);
  ASSERT_EQ(envs[0].size(), 1u);
  EXPECT_EQ(envs[0].examples[0].features, (std::vector<double>{0.5, -2}));
  EXPECT_EQ(envs[1].examples[0].features, (std::vector<double>{3, 4e-3}));
  EXPECT_EQ(envs[0].examples[0].label, 1);
}

TEST(Csv, GroupsInterleavedRowsPreservingOrder) {
  const fs::path dir = temp_dir("interleaved");
  write_text(dir / "d.csv", "domain_id,label,f0\n2,0,1\n0,1,2\n2,1,3\n0,0,4\n");
  const auto envs = load_csv(dir / "d.csv", 1, 2);
  ASSERT_EQ(envs.size(), 2u);
  EXPECT_EQ(envs[0].domain_id, 2);
  EXPECT_EQ(envs[0].examples[0].features[0], 1);
  EXPECT_EQ(envs[0].examples[1].features[0], 3);
  EXPECT_EQ(envs[1].examples[1].features[0], 4);
}

TEST(Csv, RoundTripBundle) {
  SpuriousSpec spec;
  spec.seed = 4;
  const DatasetBundle b = generate_spurious_environments(spec);
  const fs::path dir = temp_dir("roundtrip");
  write_bundle(dir, b);
  EXPECT_EQ(load_bundle(dir), b);
  const std::string text = read_text(dir / "train.csv");
  EXPECT_EQ(text.rfind("domain_id,label,f0,f1,f2,f3,f4,f5\n", 0), 0u);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_EQ(text.find(",\n"), std::string::npos);
  EXPECT_EQ(text.find('"'), std::string::npos);
}

TEST(Csv, WriteIsByteStable) {
  const DatasetBundle b = generate_spurious_environments(SpuriousSpec{});
  const fs::path a = temp_dir("stable_a"), c = temp_dir("stable_c");
  write_bundle(a, b);
  write_bundle(c, b);
  for (const char* f : {"train.csv", "val.csv", "test.csv"})
    EXPECT_EQ(read_text(a / f), read_text(c / f)) << f;
}

TEST(Csv, NonNumericFeatureNamesLine) {
  const fs::path dir = temp_dir("bad_line");
  std::string text = "domain_id,label,f0,f1\n";
  for (int i = 0; i < 5; ++i) text += "0,1,0.5,1\n";
  text += "1,0,abc,1\n";  // line 7
  write_text(dir / "d.csv", text);
  try {
    load_csv(dir / "d.csv", 2, 2);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7);
    EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos) << e.what();
  }
}

TEST(Csv, RangeAndSchemaErrors) {
  const fs::path dir = temp_dir("errors");
  write_text(dir / "label.csv", "domain_id,label,f0\n0,2,1\n");
  EXPECT_THROW(load_csv(dir / "label.csv", 1, 2), ValidationError);
  write_text(dir / "domain.csv", "domain_id,label,f0\n-1,0,1\n");
  EXPECT_THROW(load_csv(dir / "domain.csv", 1, 2), ValidationError);
  write_text(dir / "width.csv", "domain_id,label,f0,f1\n0,0,1,2\n");
  EXPECT_THROW(load_csv(dir / "width.csv", 3, 2), SchemaError);
  write_text(dir / "row.csv", "domain_id,label,f0,f1\n0,0,1\n");
  EXPECT_THROW(load_csv(dir / "row.csv", 2, 2), SchemaError);
  EXPECT_EQ(csv_feature_dim(dir / "width.csv"), 2);
  EXPECT_THROW(load_csv(dir / "missing.csv", 2, 2), IoError);
}

TEST(StratifiedBatches, DivisibleCase) {
  const std::vector<Environment> envs = {env_of(0, 8), env_of(1, 8)};
  const StratifiedBatches batches(envs, 4, 1);
  ASSERT_EQ(batches.steps(), 2u);
  std::size_t steps = 0;
  for (const BatchGroup& group : batches) {
    ASSERT_EQ(group.size(), 2u);
    for (const Batch& b : group) EXPECT_EQ(b.features.rows(), 4);
    ++steps;
  }
  EXPECT_EQ(steps, 2u);
}

TEST(StratifiedBatches, SmallEnvironmentWraps) {
  const std::vector<Environment> envs = {env_of(0, 10), env_of(1, 4)};
  const StratifiedBatches batches(envs, 4, 3);
  ASSERT_EQ(batches.steps(), 3u);
  EXPECT_EQ(batches.batch_size_at(2), 2u);
  // The small environment's sequence is its shuffled order repeated.
  std::vector<std::size_t> small;
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t i : batches.indices(1, s)) small.push_back(i);
  ASSERT_EQ(small.size(), 10u);
  for (std::size_t k = 4; k < small.size(); ++k) EXPECT_EQ(small[k], small[k - 4]);
  EXPECT_EQ(std::set<std::size_t>(small.begin(), small.begin() + 4).size(), 4u);
  // The large one is a permutation.
  std::vector<std::size_t> large;
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t i : batches.indices(0, s)) large.push_back(i);
  std::sort(large.begin(), large.end());
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(large[k], k);
}

TEST(StratifiedBatches, CoverageOnDefaultSizes) {
  const DatasetBundle b = generate_spurious_environments(SpuriousSpec{});
  std::vector<Environment> envs = b.train_envs;
  envs[1].examples.resize(100);
  const StratifiedBatches batches(envs, 64, 77);
  for (std::size_t e = 0; e < envs.size(); ++e) {
    std::vector<int> seen(envs[e].size(), 0);
    for (std::size_t s = 0; s < batches.steps(); ++s)
      for (std::size_t i : batches.indices(e, s)) ++seen[i];
    for (int c : seen) EXPECT_GE(c, 1);
    if (envs[e].size() == 281)
      for (int c : seen) EXPECT_EQ(c, 1);
  }
}

TEST(StratifiedBatches, DeterministicPerSeed) {
  const std::vector<Environment> envs = {env_of(0, 13), env_of(1, 7)};
  const StratifiedBatches a(envs, 5, 42), b(envs, 5, 42), c(envs, 5, 43);
  bool differs = false;
  for (std::size_t s = 0; s < a.steps(); ++s)
    for (std::size_t e = 0; e < 2; ++e) {
      EXPECT_EQ(a.indices(e, s), b.indices(e, s));
      differs = differs || a.indices(e, s) != c.indices(e, s);
    }
  EXPECT_TRUE(differs);
}

TEST(StratifiedBatches, Errors) {
  EXPECT_THROW(StratifiedBatches({}, 4, 0), ValidationError);
  const std::vector<Environment> envs = {env_of(0, 3)};
  EXPECT_THROW(StratifiedBatches(envs, 0, 0), ValidationError);
}

TEST(Batch, MakeBatchAndOneHot) {
  const Environment e = env_of(5, 6);
  const std::vector<std::size_t> idx = {4, 1};
  const Batch b = make_batch(e, idx);
  EXPECT_EQ(b.domain_id, 5);
  EXPECT_EQ(b.features(0, 0), 4.0);
  EXPECT_EQ(b.labels, (std::vector<int>{0, 1}));
  const std::vector<int> labels = {2, 0};
  const Tensor oh = one_hot(labels, 3);
  EXPECT_EQ(oh(0, 2), 1.0);
  EXPECT_EQ(oh.sum(), 2.0);
  const std::vector<int> bad = {3};
  EXPECT_THROW(one_hot(bad, 3), ValidationError);
}

TEST(Bundle, ValidateRequiresTwoTrainEnvironments) {
  DatasetBundle b;
  b.feature_dim = 1;
  b.train_envs = {env_of(0, 2)};
  EXPECT_THROW(b.validate(), ValidationError);
  b.train_envs.push_back(env_of(1, 2));
  EXPECT_NO_THROW(b.validate());
}

}  // namespace
}  // namespace vrexmix
