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

#include "vrexmix/trainer.hpp"

#include "vrexmix/checkpoint.hpp"
#include "vrexmix/error.hpp"
#include "vrexmix/seed.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

namespace vrexmix {
namespace {

namespace fs = std::filesystem;

DatasetBundle small_bundle() {
  SpuriousSpec spec;
  spec.train_sizes = {48, 40, 36, 44};
  spec.val_sizes = {20, 20, 20, 20};
  spec.test_size = 40;
  spec.seed = 5;
  return generate_spurious_environments(spec);
}

TrainConfig small_config() {
  TrainConfig c;
  c.model.hidden_dims = {8, 8};
  c.model.seed = 3;
  c.batch_size = 16;
  c.stage1_epochs = 6;
  c.stage2_epochs = 4;
  c.vrex.warmup_epochs = 2;
  c.run_seed = 21;
  c.mixup.seed = 4;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vrexmix_trainer_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(Trainer, ZeroEpochsReturnInitialParams) {
  const DatasetBundle bundle = small_bundle();
  TrainConfig c = small_config();
  c.stage1_epochs = 0;
  c.stage2_epochs = 0;
  EXPECT_EQ(train_stage1_vrex(bundle, c).params, init_params(c.model));
  EXPECT_EQ(train_stage2_mixup(bundle, c).params, init_params(c.model));
  const RunResult r = run_two_stage(bundle, c);
  EXPECT_EQ(r.params, init_params(c.model));
  EXPECT_TRUE(r.log.records.empty());
}

// Pooled-mean ERM written out directly: same batches, one concatenated
// cross-entropy per step.
std::vector<double> reference_erm_losses(const DatasetBundle& bundle, const TrainConfig& c) {
  ModelParams params = init_params(c.model);
  OptimizerState state;
  std::vector<double> losses;
  for (int epoch = 0; epoch < c.stage1_epochs; ++epoch) {
    const StratifiedBatches batches(bundle.train_envs, c.batch_size,
                                    derive_seed(c.run_seed, {1, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t step = 0; step < batches.steps(); ++step) {
      std::vector<Example> pooled;
      for (std::size_t e = 0; e < bundle.train_envs.size(); ++e)
        for (std::size_t i : batches.indices(e, step)) pooled.push_back(bundle.train_envs[e].examples[i]);
      Environment all;
      all.examples = pooled;
      const Tensor x = all.features();
      const std::vector<int> y = all.labels();
      Tape<double> tape;
      const BoundParams bound = bind(tape, params);
      const auto loss = softmax_cross_entropy(forward(tape, bound, x), one_hot(y, 2));
      losses.push_back(loss.scalar());
      optimizer_step(params, collect_gradients(tape.backward(loss), bound), state,
                     c.optimizer_config(Stage::stage1));
    }
  }
  return losses;
}

TEST(Trainer, ZeroLambdaMatchesPooledErm) {
  const DatasetBundle bundle = small_bundle();
  TrainConfig c = small_config();
  c.vrex.lambda_max = 0.0;
  c.stage1_epochs = 40;
  std::vector<double> losses;
  StageOptions opts;
  opts.on_step = [&](const StepRecord& r) { losses.push_back(r.loss); };
  train_stage1_vrex(bundle, c, opts);
  const std::vector<double> ref = reference_erm_losses(bundle, c);
  ASSERT_EQ(losses.size(), ref.size());
  ASSERT_GE(losses.size(), 120u);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(losses[i], ref[i], 1e-12) << "step " << i;
}

TEST(Trainer, StageOneReducesRiskVarianceOnDefaultBundle) {
  const DatasetBundle bundle = generate_spurious_environments(SpuriousSpec{});
  TrainConfig c;
  c.stage2_epochs = 0;
  const StageResult r = train_stage1_vrex(bundle, c);
  ASSERT_EQ(r.log.records.size(), 100u);
  EXPECT_LT(r.log.records.back().risk_variance, r.log.records.front().risk_variance);
}

TEST(Trainer, LogRecordsAreConsistent) {
  const DatasetBundle bundle = small_bundle();
  const TrainConfig c = small_config();
  const RunResult r = run_two_stage(bundle, c);
  ASSERT_EQ(r.log.records.size(), 10u);
  for (std::size_t i = 0; i < r.log.records.size(); ++i) {
    const EpochRecord& rec = r.log.records[i];
    ASSERT_EQ(rec.risks.size(), 4u);
    double mean = 0;
    for (double v : rec.risks) mean += v / 4.0;
    double var = 0;
    for (double v : rec.risks) var += (v - mean) * (v - mean) / 4.0;
    EXPECT_NEAR(rec.mean_risk, mean, 1e-12);
    EXPECT_NEAR(rec.risk_variance, var, 1e-12);
    EXPECT_NEAR(rec.objective, rec.mean_risk + rec.lambda * rec.risk_variance, 1e-9);
    if (i < 6) {
      EXPECT_EQ(rec.stage, Stage::stage1);
      EXPECT_EQ(rec.epoch, static_cast<int>(i) + 1);
      EXPECT_EQ(rec.lambda, lambda_at_epoch(c.vrex, static_cast<int>(i)));
    } else {
      EXPECT_EQ(rec.stage, Stage::stage2);
      EXPECT_EQ(rec.lambda, 0.0);
    }
  }
  EXPECT_EQ(r.log.records.front().lambda, 0.0);
  EXPECT_EQ(r.log.records[5].lambda, c.vrex.lambda_max);
}

TEST(Trainer, RunsAreDeterministic) {
  const DatasetBundle bundle = small_bundle();
  const TrainConfig c = small_config();
  const RunResult a = run_two_stage(bundle, c);
  const RunResult b = run_two_stage(bundle, c);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(log_to_jsonl(a.log), log_to_jsonl(b.log));
  TrainConfig other = c;
  other.run_seed = 22;
  EXPECT_FALSE(run_two_stage(bundle, other).params == a.params);
}

TEST(Trainer, ResumeFromStageBoundaryMatches) {
  const DatasetBundle bundle = small_bundle();
  const TrainConfig c = small_config();
  const fs::path dir = fresh_dir("boundary");
  RunOptions opts;
  opts.checkpoint_dir = dir;
  const RunResult full = run_two_stage(bundle, c, opts);
  const Checkpoint boundary = load_checkpoint(dir / "stage1_end.json");
  EXPECT_EQ(boundary.stage, Stage::stage1);
  EXPECT_EQ(boundary.epoch, c.stage1_epochs);
  const RunResult resumed = resume_two_stage(bundle, c, boundary);
  EXPECT_EQ(resumed.params, full.params);
  ASSERT_EQ(resumed.log.records.size(), static_cast<std::size_t>(c.stage2_epochs));
  for (std::size_t i = 0; i < resumed.log.records.size(); ++i) {
    EpochRecord a = resumed.log.records[i];
    EpochRecord b = full.log.records[c.stage1_epochs + i];
    a.wall_time_s = b.wall_time_s = 0;
    EXPECT_EQ(a, b);
  }
  EXPECT_EQ(load_checkpoint(dir / "final.json").params, full.params);
  fs::remove_all(dir);
}

TEST(Trainer, ResumeMidStageMatches) {
  const DatasetBundle bundle = small_bundle();
  TrainConfig c = small_config();
  c.checkpoint_every = 3;
  const fs::path dir = fresh_dir("mid");
  RunOptions opts;
  opts.checkpoint_dir = dir;
  const RunResult full = run_two_stage(bundle, c, opts);
  EXPECT_TRUE(fs::exists(dir / "stage1_epoch0003.json"));
  EXPECT_TRUE(fs::exists(dir / "stage2_epoch0003.json"));
  for (const char* name : {"stage1_epoch0003.json", "stage2_epoch0003.json"}) {
    const RunResult resumed = resume_two_stage(bundle, c, load_checkpoint(dir / name));
    EXPECT_EQ(resumed.params, full.params) << name;
  }
  TrainConfig changed = c;
  changed.lr_stage2 = 5e-4;
  EXPECT_THROW(resume_two_stage(bundle, changed, load_checkpoint(dir / "stage1_end.json")),
               ValidationError);
  fs::remove_all(dir);
}

TEST(Trainer, ConcentratedMixupTargetsAreHalfForOppositeLabels) {
  const DatasetBundle bundle = small_bundle();
  TrainConfig c = small_config();
  c.mixup.alpha = 1e6;
  c.stage2_epochs = 2;
  std::size_t opposite = 0;
  StageOptions opts;
  opts.on_step = [&](const StepRecord& r) {
    ASSERT_NE(r.mixed, nullptr);
    const MixedBatch& m = *r.mixed;
    for (std::size_t row = 0; row < m.lams.size(); ++row) {
      EXPECT_NEAR(m.lams[row], 0.5, 5e-3);
      const int ya = bundle.train_envs[m.first[row].first].examples[m.first[row].second].label;
      const int yb = bundle.train_envs[m.second[row].first].examples[m.second[row].second].label;
      if (ya == yb) continue;
      ++opposite;
      EXPECT_NEAR(m.soft_labels(row, 0), 0.5, 5e-3);
      EXPECT_NEAR(m.soft_labels(row, 1), 0.5, 5e-3);
    }
  };
  train_stage2_mixup(bundle, c, opts);
  EXPECT_GT(opposite, 50u);
}

TEST(Trainer, StageTwoUsesLargerMixedBatches) {
  const DatasetBundle bundle = small_bundle();
  const TrainConfig c = small_config();
  std::size_t steps = 0;
  StageOptions opts;
  opts.on_step = [&](const StepRecord& r) {
    ++steps;
    EXPECT_EQ(r.mixed->features.rows(), c.batch_size * 4);
    for (std::size_t row = 0; row < r.mixed->first.size(); ++row)
      EXPECT_NE(r.mixed->first[row].first, r.mixed->second[row].first);
  };
  train_stage2_mixup(bundle, c, opts);
  EXPECT_EQ(steps, 3u * static_cast<std::size_t>(c.stage2_epochs));
}

TEST(TrainLogText, JsonlRoundTrip) {
  const RunResult r = run_two_stage(small_bundle(), small_config());
  const TrainLog back = log_from_jsonl(log_to_jsonl(r.log, true));
  ASSERT_EQ(back.records.size(), r.log.records.size());
  for (std::size_t i = 0; i < back.records.size(); ++i) EXPECT_EQ(back.records[i], r.log.records[i]);
  const std::string plain = log_to_jsonl(r.log);
  EXPECT_EQ(plain.find("wall_time"), std::string::npos);
  EXPECT_EQ(log_to_jsonl(log_from_jsonl(plain)), plain);
  try {
    log_from_jsonl(plain + "{\"epoch\": 1}\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 11);
  }
}

TEST(Trainer, ErrorsPropagate) {
  const DatasetBundle bundle = small_bundle();
  TrainConfig c = small_config();
  c.model.input_dim = 7;
  EXPECT_THROW(run_two_stage(bundle, c), ShapeError);
  c = small_config();
  c.batch_size = 0;
  EXPECT_THROW(run_two_stage(bundle, c), ValidationError);
  c = small_config();
  RunOptions opts;
  opts.checkpoint_dir = "/proc/vrexmix_no_such_place";
  try {
    run_two_stage(bundle, c, opts);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/proc/vrexmix_no_such_place"), std::string::npos);
  }
}

TEST(Trainer, FinalReportsCoverValidationAndTest) {
  const RunResult r = run_two_stage(small_bundle(), small_config());
  EXPECT_EQ(r.val_report.per_domain.size(), 4u);
  ASSERT_TRUE(r.test_report.has_value());
  EXPECT_EQ(r.test_report->per_domain.size(), 1u);
}

}  // namespace
}  // namespace vrexmix
