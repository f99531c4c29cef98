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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace vrexmix {
namespace {

TEST(InitParams, SameSeedIsBitwiseIdentical) {
  const ModelConfig cfg{6, {32, 32}, 2, InitScheme::he, 42};
  EXPECT_TRUE(init_params(cfg) == init_params(cfg));
  ModelConfig other = cfg;
  other.seed = 43;
  EXPECT_FALSE(init_params(cfg) == init_params(other));
}

TEST(InitParams, BiasesAreZero) {
  for (const auto scheme : {InitScheme::he, InitScheme::xavier}) {
    const ModelParams p = init_params(ModelConfig{5, {7, 3}, 4, scheme, 1});
    for (const auto& l : p.layers) EXPECT_TRUE(l.bias.isZero(0.0));
  }
}

TEST(InitParams, HeStdMatchesTheory) {
  // in=50 gives std sqrt(2/50) = 0.2. 50 x 20000 = 10^6 weights.
  const ModelParams p = init_params(ModelConfig{50, {}, 20000, InitScheme::he, 5});
  const Tensor& w = p.layers.front().weight;
  ASSERT_EQ(w.size(), 1000000);
  const double mean = w.mean();
  const double sd = std::sqrt((w.array() - mean).square().sum() / static_cast<double>(w.size()));
  EXPECT_NEAR(sd, 0.2, 0.01);
  EXPECT_NEAR(mean, 0.0, 0.002);
}

TEST(InitParams, XavierWithinBound) {
  const ModelParams p = init_params(ModelConfig{30, {}, 10, InitScheme::xavier, 2});
  const double bound = std::sqrt(6.0 / 40.0);
  const Tensor& w = p.layers.front().weight;
  EXPECT_LE(w.cwiseAbs().maxCoeff(), bound);
  EXPECT_GT(w.cwiseAbs().maxCoeff(), 0.9 * bound);
}

TEST(InitParams, ShapesChain) {
  const ModelParams p = init_params(ModelConfig{6, {32, 16}, 3, InitScheme::he, 0});
  ASSERT_EQ(p.layers.size(), 3u);
  EXPECT_EQ(p.layers[0].weight.rows(), 6);
  EXPECT_EQ(p.layers[0].weight.cols(), 32);
  EXPECT_EQ(p.layers[1].weight.rows(), 32);
  EXPECT_EQ(p.layers[1].weight.cols(), 16);
  EXPECT_EQ(p.layers[2].weight.cols(), 3);
  EXPECT_EQ(p.layers[2].bias.cols(), 3);
  EXPECT_EQ(p.input_dim(), 6);
  EXPECT_EQ(p.num_classes(), 3);
}

TEST(InitParams, ParameterCount) {
  const ModelParams p = init_params(ModelConfig{6, {32, 32}, 2, InitScheme::he, 0});
  EXPECT_EQ(p.parameter_count(), 6u * 32 + 32 + 32 * 32 + 32 + 32 * 2 + 2);
}

TEST(ModelConfig, ValidationErrors) {
  EXPECT_THROW((ModelConfig{0, {4}, 2, InitScheme::he, 0}.validate()), ValidationError);
  EXPECT_THROW((ModelConfig{3, {0}, 2, InitScheme::he, 0}.validate()), ValidationError);
  EXPECT_THROW((ModelConfig{3, {4}, 1, InitScheme::he, 0}.validate()), ValidationError);
  EXPECT_NO_THROW((ModelConfig{3, {}, 5, InitScheme::xavier, 0}.validate()));
  EXPECT_EQ(parse_init_scheme("xavier"), InitScheme::xavier);
  EXPECT_THROW(parse_init_scheme("lecun"), ValidationError);
}

TEST(Forward, ZeroParamsGiveZeroLogits) {
  ModelParams p = init_params(ModelConfig{3, {4}, 2, InitScheme::he, 0}).zeros_like();
  Tape<double> tape;
  const Tensor batch = Tensor::Random(5, 3);
  const auto out = forward(tape, bind(tape, p), batch);
  EXPECT_TRUE(out.value().isZero(0.0));
  EXPECT_TRUE(logits(p, batch).isZero(0.0));
}

TEST(Forward, NoHiddenLayersIsAffine) {
  ModelParams p = init_params(ModelConfig{3, {}, 2, InitScheme::he, 8});
  p.layers[0].bias << 0.5, -1.5;
  const Tensor batch = Tensor::Random(4, 3);
  Tensor expected = batch * p.layers[0].weight;
  expected.rowwise() += p.layers[0].bias.row(0);
  Tape<double> tape;
  EXPECT_TRUE(bitwise_equal(forward(tape, bind(tape, p), batch).value(), expected));
}

TEST(Forward, HandComputedOneHiddenLayer) {
  // x = [1, 2]; W0 = [[1, -1], [1, 1]], b0 = [0, -4] -> pre [3, -3] -> h = [3, 0]
  // W1 = [[2, 0], [5, 1]], b1 = [1, 1] -> logits [7, 1]
  ModelParams p;
  p.layers.resize(2);
  p.layers[0].weight = Tensor(2, 2);
  p.layers[0].weight << 1, -1, 1, 1;
  p.layers[0].bias = Tensor(1, 2);
  p.layers[0].bias << 0, -4;
  p.layers[1].weight = Tensor(2, 2);
  p.layers[1].weight << 2, 0, 5, 1;
  p.layers[1].bias = Tensor(1, 2);
  p.layers[1].bias << 1, 1;
  Tensor x(1, 2);
  x << 1, 2;
  const Tensor z = logits(p, x);
  EXPECT_EQ(z(0, 0), 7.0);
  EXPECT_EQ(z(0, 1), 1.0);
  Tape<double> tape;
  EXPECT_TRUE(bitwise_equal(forward(tape, bind(tape, p), x).value(), z));
}

TEST(Forward, WidthMismatchIsShapeError) {
  const ModelParams p = init_params(ModelConfig{6, {8}, 2, InitScheme::he, 0});
  Tape<double> tape;
  EXPECT_THROW(forward(tape, bind(tape, p), Tensor::Zero(2, 5)), ShapeError);
  EXPECT_THROW(logits(p, Tensor::Zero(2, 7)), ShapeError);
}

TEST(Forward, BatchEqualsRowwise) {
  const ModelParams p = init_params(ModelConfig{6, {32, 32}, 2, InitScheme::he, 4});
  std::mt19937_64 rng(4);
  std::normal_distribution<double> d;
  Tensor batch(17, 6);
  for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] = d(rng);
  const Tensor all = logits(p, batch);
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    const Tensor one = logits(p, batch.row(r));
    EXPECT_LE((one - all.row(r)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, TracedMatchesUntraced) {
  const ModelParams p = init_params(ModelConfig{6, {16}, 3, InitScheme::xavier, 2});
  const Tensor batch = Tensor::Random(9, 6);
  Tape<double> tape;
  EXPECT_TRUE(bitwise_equal(forward(tape, bind(tape, p), batch).value(), logits(p, batch)));
}

TEST(Forward, GradientsShapedLikeParams) {
  const ModelParams p = init_params(ModelConfig{4, {5}, 2, InitScheme::he, 2});
  Tape<double> tape;
  const BoundParams bound = bind(tape, p);
  const auto loss = reduce_mean(forward(tape, bound, Tensor::Random(3, 4)));
  const ModelParams g = collect_gradients(tape.backward(loss), bound);
  ASSERT_EQ(g.layers.size(), p.layers.size());
  for (std::size_t k = 0; k < g.layers.size(); ++k) {
    EXPECT_EQ(g.layers[k].weight.rows(), p.layers[k].weight.rows());
    EXPECT_EQ(g.layers[k].weight.cols(), p.layers[k].weight.cols());
    EXPECT_EQ(g.layers[k].bias.cols(), p.layers[k].bias.cols());
  }
  // d mean(logits)/d b_last = 1/C for each class.
  EXPECT_TRUE((g.layers.back().bias.array() == 0.5).all());
}

TEST(Predict, ArgmaxAndTies) {
  Tensor s(3, 2);
  s << 0.1, 0.9, 0.5, 0.5, 2.0, -1.0;
  EXPECT_EQ(argmax_rows(s), (std::vector<int>{1, 0, 0}));
  Tensor hand(3, 2);
  hand << 0.9, 0.1, 0.2, 0.8, 0.5, 0.5;
  EXPECT_EQ(argmax_rows(hand), (std::vector<int>{0, 1, 0}));
  Tensor three(2, 3);
  three << 1, 3, 3, 4, 4, 4;
  EXPECT_EQ(argmax_rows(three), (std::vector<int>{1, 0}));
}

TEST(Predict, ShiftInvariant) {
  const ModelParams p = init_params(ModelConfig{6, {8}, 3, InitScheme::he, 3});
  ModelParams shifted = p;
  shifted.layers.back().bias.array() += 17.25;
  const Tensor batch = Tensor::Random(50, 6);
  EXPECT_EQ(predict(p, batch), predict(shifted, batch));
  EXPECT_EQ(predict(p, batch), argmax_rows(logits(p, batch)));
}

TEST(ModelParams, ValidateCatchesBrokenChain) {
  ModelParams p = init_params(ModelConfig{6, {8, 4}, 2, InitScheme::he, 0});
  EXPECT_NO_THROW(p.validate());
  p.layers[1].weight = Tensor::Zero(7, 4);
  EXPECT_THROW(p.validate(), ShapeError);
}

}  // namespace
}  // namespace vrexmix
