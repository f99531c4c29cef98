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

// Two-stage training: variance-penalized multi-environment pretraining
// followed by Mixup fine-tuning.

#ifndef VREXMIX_TRAINER_HPP_
#define VREXMIX_TRAINER_HPP_

#include "vrexmix/data.hpp"
#include "vrexmix/metrics.hpp"
#include "vrexmix/model.hpp"
#include "vrexmix/objectives.hpp"
#include "vrexmix/optimizer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace vrexmix {

enum class Stage { stage1, stage2, final };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& text);

struct TrainConfig {
  ModelConfig model;
  VRExConfig vrex;
  MixupConfig mixup;
  int stage1_epochs = 100;
  int stage2_epochs = 50;
  /// Examples per environment per step. Stage 2 draws batch_size * n_envs
  /// mixed pairs per step.
  int batch_size = 64;
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr_stage1 = 1e-3;
  double lr_stage2 = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t run_seed = 0;
  /// Periodic checkpoint interval in epochs; 0 keeps only stage boundaries.
  int checkpoint_every = 0;
  /// Keep lambda_max * Var[L_i] on stratified batches during Stage 2.
  bool stage2_keep_vrex = false;
  /// Stop a stage when validation average macro F1 has not improved for this
  /// many epochs. 0 disables.
  int early_stop_patience = 0;

  void validate() const;
  OptimizerConfig optimizer_config(Stage stage) const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based within the stage
  Stage stage = Stage::stage1;
  std::vector<double> risks;  // full-environment risks after the epoch
  double mean_risk = 0.0;
  double risk_variance = 0.0;
  double lambda = 0.0;
  double objective = 0.0;   // mean_risk + lambda * risk_variance
  double train_loss = 0.0;  // average per-step training loss
  double wall_time_s = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
  std::vector<EpochRecord> records;

  void append(const TrainLog& other);
};

/// One JSON object per line. Wall time is left out unless requested so that
/// logs of identical runs are byte-identical.
std::string log_to_jsonl(const TrainLog& log, bool include_wall_time = false);
TrainLog log_from_jsonl(const std::string& text);

struct StepRecord {
  Stage stage = Stage::stage1;
  int epoch = 0;  // 0-based
  std::size_t step = 0;
  double loss = 0.0;
  std::vector<double> risks;  // per-environment batch risks (Stage 1 or keep_vrex)
  double lambda = 0.0;
  const MixedBatch* mixed = nullptr;  // Stage 2 only, valid during the callback
};

struct Checkpoint;

struct StageOptions {
  std::optional<ModelParams> initial_params;  // init_params(config.model) when empty
  OptimizerState optimizer;
  int start_epoch = 0;  // epochs of this stage already completed
  std::function<void(const StepRecord&)> on_step;
  /// Called every checkpoint_every epochs with the state after that epoch.
  std::function<void(Stage, int epoch, const ModelParams&, const OptimizerState&)> on_epoch_end;
};

struct StageResult {
  ModelParams params;
  OptimizerState optimizer;
  TrainLog log;
};

/// Per step: stratified batch group -> per-environment risks ->
/// mean + lambda(epoch) * variance -> backward -> optimizer step.
StageResult train_stage1_vrex(const DatasetBundle& bundle, const TrainConfig& config,
                              const StageOptions& options = {});

/// Per step: cross-domain Mixup batch -> soft-label cross-entropy -> backward
/// -> optimizer step at lr_stage2. Steps per epoch match Stage 1.
StageResult train_stage2_mixup(const DatasetBundle& bundle, const TrainConfig& config,
                               const StageOptions& options = {});

/// Untraced risks of every environment under one-hot targets.
std::vector<double> environment_risks(const ModelParams& params, std::span<const Environment> envs);

struct RunOptions {
  /// Where checkpoints go; nothing is written when empty.
  std::filesystem::path checkpoint_dir;
  std::function<void(const StepRecord&)> on_step;
};

struct RunResult {
  ModelParams params;
  TrainLog log;
  EvalReport val_report;  // validation environments, or training ones when absent
  std::optional<EvalReport> test_report;
  std::vector<std::filesystem::path> checkpoints;
};

/// Stage 1 then Stage 2, checkpointing at stage boundaries, every
/// checkpoint_every epochs and at the end.
RunResult run_two_stage(const DatasetBundle& bundle, const TrainConfig& config,
                        const RunOptions& options = {});

/// Continues a run from a checkpoint produced by run_two_stage with the same
/// config. The returned log holds only the epochs trained after the resume.
RunResult resume_two_stage(const DatasetBundle& bundle, const TrainConfig& config,
                           const Checkpoint& from, const RunOptions& options = {});

}  // namespace vrexmix

#endif  // VREXMIX_TRAINER_HPP_
