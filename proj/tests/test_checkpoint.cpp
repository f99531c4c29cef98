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

#include "vrexmix/checkpoint.hpp"

#include "vrexmix/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

namespace vrexmix {
namespace {

Checkpoint sample_checkpoint() {
  ModelConfig mc;
  mc.hidden_dims = {5, 3};
  mc.seed = 11;
  Checkpoint c;
  c.params = init_params(mc);
  c.optimizer.step = 417;
  c.optimizer.first_moment = c.params.zeros_like();
  c.optimizer.second_moment = c.params.zeros_like();
  c.optimizer.first_moment.layers[0].weight(1, 2) = 1.0 / 3.0;
  c.optimizer.second_moment.layers[2].bias(0, 1) = 5e-320;
  c.params.layers[1].weight(0, 0) = 0.1 + 0.2;
  c.params.layers[1].bias(0, 0) = -0.0;
  c.stage = Stage::stage2;
  c.epoch = 17;
  c.config.set("train.lr_stage1", "0.001");
  c.config.set("model.hidden_dims", "5,3");
  return c;
}

bool bitwise_equal(const ModelParams& a, const ModelParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    const auto& wa = a.layers[k].weight;
    const auto& wb = b.layers[k].weight;
    const auto& ba = a.layers[k].bias;
    const auto& bb = b.layers[k].bias;
    if (wa.rows() != wb.rows() || wa.cols() != wb.cols() || ba.cols() != bb.cols()) return false;
    if (std::memcmp(wa.data(), wb.data(), sizeof(double) * wa.size()) != 0) return false;
    if (std::memcmp(ba.data(), bb.data(), sizeof(double) * ba.size()) != 0) return false;
  }
  return true;
}

TEST(Checkpoint, TextRoundTripIsBitExact) {
  const Checkpoint c = sample_checkpoint();
  const std::string text = checkpoint_to_text(c);
  const Checkpoint back = checkpoint_from_text(text);
  EXPECT_EQ(back, c);
  EXPECT_TRUE(bitwise_equal(back.params, c.params));
  EXPECT_TRUE(bitwise_equal(back.optimizer.first_moment, c.optimizer.first_moment));
  EXPECT_TRUE(bitwise_equal(back.optimizer.second_moment, c.optimizer.second_moment));
  EXPECT_TRUE(std::signbit(back.params.layers[1].bias(0, 0)));
  EXPECT_EQ(checkpoint_to_text(back), text);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "vrexmix_ckpt_roundtrip.json";
  const Checkpoint c = sample_checkpoint();
  save_checkpoint(path, c);
  EXPECT_EQ(load_checkpoint(path), c);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RefusesNonFinite) {
  Checkpoint c = sample_checkpoint();
  c.params.layers[0].weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(checkpoint_to_text(c), NumericalError);
  c = sample_checkpoint();
  c.optimizer.second_moment.layers[0].bias(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(checkpoint_to_text(c), NumericalError);
}

TEST(Checkpoint, MalformedInputs) {
  EXPECT_THROW(checkpoint_from_text("{not json"), ParseError);
  EXPECT_THROW(checkpoint_from_text("{}"), ParseError);
  std::string text = checkpoint_to_text(sample_checkpoint());
  const auto pos = text.find("\"version\": 1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 12, "\"version\": 9");
  EXPECT_THROW(checkpoint_from_text(text), ParseError);
}

TEST(Checkpoint, IoErrorsNameThePath) {
  const std::filesystem::path missing = "/nonexistent_vrexmix_dir/ckpt.json";
  try {
    save_checkpoint(missing, sample_checkpoint());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(missing.string()), std::string::npos);
  }
  try {
    load_checkpoint(missing);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(missing.string()), std::string::npos);
  }
}

}  // namespace
}  // namespace vrexmix
