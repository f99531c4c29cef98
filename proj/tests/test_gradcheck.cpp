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

#include "vrexmix/gradcheck.hpp"
#include "vrexmix/gradcheck_suite.hpp"
#include "vrexmix/model.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <random>

namespace vrexmix {
namespace {

using T = Traced<double>;

Tensor random_tensor(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> d;
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = d(rng);
  return t;
}

TEST(GradCheck, MeanIsExact) {
  std::mt19937_64 rng(1);
  const TracedFunction<double> f = [](Tape<double>&, const T& x) { return reduce_mean(x); };
  for (int i = 0; i < 20; ++i)
    EXPECT_LT(grad_check<double>(f, random_tensor(rng, 4, 3), 1e-5).max_relative_error, 1e-10);
}

TEST(GradCheck, SoftmaxCrossEntropyRandomLogits) {
  std::mt19937_64 rng(2);
  Tensor t = Tensor::Zero(6, 3);
  for (int r = 0; r < 6; ++r) t(r, r % 3) = 1.0;
  const TracedFunction<double> f = [t](Tape<double>&, const T& x) {
    return softmax_cross_entropy(x, t);
  };
  for (int i = 0; i < 20; ++i)
    EXPECT_LT(grad_check<double>(f, random_tensor(rng, 6, 3), 1e-5).max_relative_error, 1e-4);
}

TEST(GradCheck, FullMlpLoss) {
  const ModelParams params = init_params(ModelConfig{6, {32, 32}, 2, InitScheme::he, 9});
  std::mt19937_64 rng(9);
  const Tensor batch = random_tensor(rng, 4, 6);
  Tensor targets = Tensor::Zero(4, 2);
  for (int r = 0; r < 4; ++r) targets(r, r % 2) = 1.0;
  const TracedFunction<double> f = [&](Tape<double>& tape, const T& x) {
    BoundParams bound;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
      bound.weights.push_back(k == 2 ? x : tape.constant(params.layers[k].weight));
      bound.biases.push_back(tape.constant(params.layers[k].bias));
    }
    return softmax_cross_entropy(forward(tape, bound, batch), targets);
  };
  EXPECT_LT(grad_check<double>(f, params.layers[2].weight, 1e-5).max_relative_error, 1e-4);
}

TEST(GradCheck, RelativeErrorFormula) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 3.0), 0.5);
  // Both tiny: the 1e-8 floor applies.
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-12), 1e-4);
}

TEST(GradCheck, DetectsWrongGradient) {
  const TracedFunction<double> f = [](Tape<double>& tape, const T& x) {
    // Forward is x^2 summed; backward claims 3x.
    Tensor sq = x.value().array().square();
    Tensor one(1, 1);
    one(0, 0) = sq.sum();
    return tape.record(one, {x}, [&tape, id = x.id()](const Tensor& g, std::span<Tensor* const> pg) {
      if (pg[0]) *pg[0] += tape.value(id) * (3.0 * g(0, 0));
    });
  };
  Tensor p(1, 2);
  p << 1.0, -2.0;
  const auto r = grad_check<double>(f, p, 1e-5);
  EXPECT_NEAR(r.max_relative_error, 0.2, 1e-6);
  EXPECT_NEAR(r.numeric(0, 0), 2.0, 1e-6);
  EXPECT_NEAR(r.analytic(0, 0), 3.0, 1e-12);
}

TEST(GradCheck, NonFiniteNamesComponent) {
  const TracedFunction<double> f = [](Tape<double>& tape, const T& x) {
    Tensor out(1, 1);
    out(0, 0) = x.value()(0, 1) > 0.5 ? std::numeric_limits<double>::infinity() : x.value().sum();
    return tape.record(out, {x}, [](const Tensor& g, std::span<Tensor* const> pg) {
      if (pg[0]) pg[0]->array() += g(0, 0);
    });
  };
  Tensor p(1, 2);
  p << 0.0, 0.5;
  try {
    grad_check<double>(f, p, 1e-5);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("component 1"), std::string::npos) << e.what();
  }
}

TEST(GradCheckSuite, FreshBuildPasses) {
  const auto results = run_gradcheck_suite(GradCheckOptions{});
  EXPECT_GE(results.size(), 13u);
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed) << r.name << " " << r.max_relative_error;
    EXPECT_EQ(r.inputs, 100) << r.name;
    EXPECT_LT(r.max_relative_error, 1e-4) << r.name;
  }
}

TEST(GradCheckSuite, InjectedReluFaultIsCaught) {
  GradCheckOptions opts;
  opts.inputs = 10;
  opts.inject_relu_fault = true;
  bool relu_failed = false;
  for (const auto& r : run_gradcheck_suite(opts))
    if (r.name == "relu") relu_failed = !r.passed;
  EXPECT_TRUE(relu_failed);
}

TEST(GradCheckSuite, SeedSweep) {
  for (std::uint64_t seed = 1; seed < 20; ++seed) {
    GradCheckOptions opts;
    opts.seed = seed;
    opts.inputs = 25;
    for (const auto& r : run_gradcheck_suite(opts))
      EXPECT_TRUE(r.passed) << "seed " << seed << " " << r.name << " " << r.max_relative_error;
  }
}

}  // namespace
}  // namespace vrexmix
