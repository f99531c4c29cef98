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
#include "vrexmix/config.hpp"
#include "vrexmix/error.hpp"
#include "vrexmix/seed.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <sstream>

namespace vrexmix {

namespace {

// Seed paths: stage-1 epoch shuffles, stage-2 mixup draws, stage-2 stratified
// batches for the optional variance term.
constexpr std::uint64_t kStage1Shuffle = 1;
constexpr std::uint64_t kStage2Mixup = 2;
constexpr std::uint64_t kStage2Shuffle = 3;

void check_compatible(const DatasetBundle& bundle, const TrainConfig& config) {
  bundle.validate();
  config.validate();
  if (config.model.input_dim != bundle.feature_dim)
    throw ShapeError("model input_dim " + std::to_string(config.model.input_dim) +
                     " does not match dataset feature_dim " + std::to_string(bundle.feature_dim));
  if (config.model.num_classes != bundle.num_classes)
    throw ShapeError("model num_classes " + std::to_string(config.model.num_classes) +
                     " does not match dataset num_classes " + std::to_string(bundle.num_classes));
}

EpochRecord make_record(Stage stage, int epoch, std::vector<double> risks, double lambda,
                        VarianceMode mode, double train_loss, double wall_time) {
  EpochRecord r;
  r.stage = stage;
  r.epoch = epoch;
  const double n = static_cast<double>(risks.size());
  double sum = 0.0;
  for (double v : risks) sum += v;
  r.mean_risk = sum / n;
  double sq = 0.0;
  for (double v : risks) sq += (v - r.mean_risk) * (v - r.mean_risk);
  r.risk_variance = risks.size() < 2 ? 0.0 : sq / (mode == VarianceMode::population ? n : n - 1.0);
  r.lambda = lambda;
  r.objective = r.mean_risk + lambda * r.risk_variance;
  r.train_loss = train_loss;
  r.wall_time_s = wall_time;
  r.risks = std::move(risks);
  return r;
}

std::size_t steps_per_epoch(const DatasetBundle& bundle, int batch_size) {
  std::size_t max_size = 0;
  for (const auto& env : bundle.train_envs) max_size = std::max(max_size, env.size());
  const auto b = static_cast<std::size_t>(batch_size);
  return (max_size + b - 1) / b;
}

/// Tracks validation macro F1 for early stopping.
class EarlyStop {
 public:
  EarlyStop(const DatasetBundle& bundle, int patience) : bundle_(bundle), patience_(patience) {}

  bool should_stop(const ModelParams& params) {
    if (patience_ <= 0 || bundle_.val_envs.empty()) return false;
    const double f1 = evaluate(params, bundle_.val_envs).average_macro_f1;
    if (f1 > best_) {
      best_ = f1;
      stale_ = 0;
      return false;
    }
    return ++stale_ >= patience_;
  }

 private:
  const DatasetBundle& bundle_;
  int patience_;
  double best_ = -1.0;
  int stale_ = 0;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::stage1:
      return "stage1";
    case Stage::stage2:
      return "stage2";
    case Stage::final:
      return "final";
  }
  return "stage1";
}

Stage parse_stage(const std::string& text) {
  if (text == "stage1") return Stage::stage1;
  if (text == "stage2") return Stage::stage2;
  if (text == "final") return Stage::final;
  throw ValidationError("unknown stage '" + text + "'");
}

void TrainConfig::validate() const {
  model.validate();
  vrex.validate();
  mixup.validate();
  if (stage1_epochs < 0 || stage2_epochs < 0) throw ValidationError("epochs must be nonnegative");
  if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
  if (!(lr_stage1 > 0.0) || !(lr_stage2 > 0.0)) throw ValidationError("learning rates must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ValidationError("adam betas must lie in [0,1)");
  if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be positive");
  if (checkpoint_every < 0) throw ValidationError("checkpoint_every must be nonnegative");
  if (early_stop_patience < 0) throw ValidationError("early_stop_patience must be nonnegative");
}

OptimizerConfig TrainConfig::optimizer_config(Stage stage) const {
  OptimizerConfig c;
  c.kind = optimizer;
  c.lr = stage == Stage::stage1 ? lr_stage1 : lr_stage2;
  c.beta1 = adam_beta1;
  c.beta2 = adam_beta2;
  c.eps = adam_eps;
  return c;
}

void TrainLog::append(const TrainLog& other) {
  records.insert(records.end(), other.records.begin(), other.records.end());
}

std::string log_to_jsonl(const TrainLog& log, bool include_wall_time) {
  std::string out;
  for (const auto& r : log.records) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["stage"] = to_string(r.stage);
    j["risks"] = r.risks;
    j["mean_risk"] = r.mean_risk;
    j["risk_variance"] = r.risk_variance;
    j["lambda"] = r.lambda;
    j["objective"] = r.objective;
    j["train_loss"] = r.train_loss;
    if (include_wall_time) j["wall_time_s"] = r.wall_time_s;
    out += j.dump();
    out += '\n';
  }
  return out;
}

TrainLog log_from_jsonl(const std::string& text) {
  TrainLog log;
  std::stringstream ss(text);
  std::string line;
  long line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EpochRecord r;
      r.epoch = j.at("epoch").get<int>();
      r.stage = parse_stage(j.at("stage").get<std::string>());
      r.risks = j.at("risks").get<std::vector<double>>();
      r.mean_risk = j.at("mean_risk").get<double>();
      r.risk_variance = j.at("risk_variance").get<double>();
      r.lambda = j.at("lambda").get<double>();
      r.objective = j.at("objective").get<double>();
      r.train_loss = j.at("train_loss").get<double>();
      if (j.contains("wall_time_s")) r.wall_time_s = j.at("wall_time_s").get<double>();
      log.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(std::string("train log: ") + ex.what(), line_no);
    }
  }
  return log;
}

std::vector<double> environment_risks(const ModelParams& params, std::span<const Environment> envs) {
  std::vector<double> out;
  out.reserve(envs.size());
  for (const auto& env : envs) {
    Tape<double> tape;
    const auto scores = tape.constant(logits(params, env.features()));
    const auto labels = env.labels();
    out.push_back(softmax_cross_entropy(scores, one_hot(labels, params.num_classes())).scalar());
  }
  return out;
}

StageResult train_stage1_vrex(const DatasetBundle& bundle, const TrainConfig& config,
                              const StageOptions& options) {
  check_compatible(bundle, config);
  StageResult result;
  result.params = options.initial_params ? *options.initial_params : init_params(config.model);
  result.optimizer = options.optimizer;
  const OptimizerConfig opt = config.optimizer_config(Stage::stage1);
  const std::size_t n_envs = bundle.train_envs.size();
  EarlyStop early(bundle, config.early_stop_patience);

  for (int epoch = options.start_epoch; epoch < config.stage1_epochs; ++epoch) {
    const auto t0 = Clock::now();
    const double lambda = lambda_at_epoch(config.vrex, epoch);
    const StratifiedBatches batches(bundle.train_envs, config.batch_size,
                                    derive_seed(config.run_seed, {kStage1Shuffle,
                                                                  static_cast<std::uint64_t>(epoch)}));
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < batches.steps(); ++step) {
      Tape<double> tape;
      const BoundParams bound = bind(tape, result.params);
      const RiskVector risks =
          per_environment_risks(tape, bound, batches.at(step), bundle.num_classes, n_envs);
      const Traced<double> objective = vrex_objective(risks, lambda, config.vrex.variance_mode);
      const ModelParams grads = collect_gradients(tape.backward(objective), bound);
      if (options.on_step) {
        StepRecord rec;
        rec.stage = Stage::stage1;
        rec.epoch = epoch;
        rec.step = step;
        rec.loss = objective.scalar();
        rec.lambda = lambda;
        for (std::size_t i = 0; i < risks.size(); ++i) rec.risks.push_back(risks[i]);
        options.on_step(rec);
      }
      optimizer_step(result.params, grads, result.optimizer, opt);
      loss_sum += objective.scalar();
    }
    result.log.records.push_back(make_record(
        Stage::stage1, epoch + 1, environment_risks(result.params, bundle.train_envs), lambda,
        config.vrex.variance_mode, loss_sum / static_cast<double>(batches.steps()),
        seconds_since(t0)));
    if (options.on_epoch_end && config.checkpoint_every > 0 &&
        (epoch + 1) % config.checkpoint_every == 0)
      options.on_epoch_end(Stage::stage1, epoch + 1, result.params, result.optimizer);
    if (early.should_stop(result.params)) break;
  }
  return result;
}

StageResult train_stage2_mixup(const DatasetBundle& bundle, const TrainConfig& config,
                               const StageOptions& options) {
  check_compatible(bundle, config);
  StageResult result;
  result.params = options.initial_params ? *options.initial_params : init_params(config.model);
  result.optimizer = options.optimizer;
  const OptimizerConfig opt = config.optimizer_config(Stage::stage2);
  const std::size_t n_envs = bundle.train_envs.size();
  const std::size_t steps = steps_per_epoch(bundle, config.batch_size);
  const int mixed_size = config.batch_size * static_cast<int>(n_envs);
  const double lambda = config.stage2_keep_vrex ? config.vrex.lambda_max : 0.0;
  EarlyStop early(bundle, config.early_stop_patience);

  for (int epoch = options.start_epoch; epoch < config.stage2_epochs; ++epoch) {
    const auto t0 = Clock::now();
    const auto e = static_cast<std::uint64_t>(epoch);
    std::optional<StratifiedBatches> batches;
    if (config.stage2_keep_vrex)
      batches.emplace(bundle.train_envs, config.batch_size,
                      derive_seed(config.run_seed, {kStage2Shuffle, e}));
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      const MixedBatch mixed =
          sample_mixup_batch(bundle.train_envs, mixed_size, config.mixup,
                             derive_seed(config.run_seed, {kStage2Mixup, e, step}),
                             bundle.num_classes);
      Tape<double> tape;
      const BoundParams bound = bind(tape, result.params);
      Traced<double> loss = mixed_loss(tape, bound, mixed);
      std::vector<double> step_risks;
      if (batches) {
        const RiskVector risks =
            per_environment_risks(tape, bound, batches->at(step), bundle.num_classes, n_envs);
        loss = add(loss, scale(variance(risks.risks, config.vrex.variance_mode), lambda));
        for (std::size_t i = 0; i < risks.size(); ++i) step_risks.push_back(risks[i]);
      }
      const ModelParams grads = collect_gradients(tape.backward(loss), bound);
      if (options.on_step) {
        StepRecord rec;
        rec.stage = Stage::stage2;
        rec.epoch = epoch;
        rec.step = step;
        rec.loss = loss.scalar();
        rec.lambda = lambda;
        rec.risks = std::move(step_risks);
        rec.mixed = &mixed;
        options.on_step(rec);
      }
      optimizer_step(result.params, grads, result.optimizer, opt);
      loss_sum += loss.scalar();
    }
    result.log.records.push_back(make_record(
        Stage::stage2, epoch + 1, environment_risks(result.params, bundle.train_envs), lambda,
        config.vrex.variance_mode, steps ? loss_sum / static_cast<double>(steps) : 0.0,
        seconds_since(t0)));
    if (options.on_epoch_end && config.checkpoint_every > 0 &&
        (epoch + 1) % config.checkpoint_every == 0)
      options.on_epoch_end(Stage::stage2, epoch + 1, result.params, result.optimizer);
    if (early.should_stop(result.params)) break;
  }
  return result;
}

namespace {

RunResult run_from(const DatasetBundle& bundle, const TrainConfig& config, Stage stage,
                   int start_epoch, ModelParams params, OptimizerState state,
                   const RunOptions& options) {
  RunResult result;
  const ConfigMap config_echo = echo(config);

  auto write = [&](Stage s, int epoch, const ModelParams& p, const OptimizerState& o,
                   const std::string& name) {
    if (options.checkpoint_dir.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(options.checkpoint_dir, ec);
    if (ec)
      throw IoError("cannot create checkpoint directory " + options.checkpoint_dir.string() + ": " +
                    ec.message());
    const auto path = options.checkpoint_dir / name;
    save_checkpoint(path, Checkpoint{kCheckpointVersion, config_echo, s, epoch, p, o});
    result.checkpoints.push_back(path);
  };
  auto periodic = [&](Stage s, int epoch, const ModelParams& p, const OptimizerState& o) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_epoch%04d.json", to_string(s).c_str(), epoch);
    write(s, epoch, p, o, name);
  };

  if (stage == Stage::stage1) {
    StageOptions opts;
    opts.initial_params = std::move(params);
    opts.optimizer = std::move(state);
    opts.start_epoch = start_epoch;
    opts.on_step = options.on_step;
    opts.on_epoch_end = periodic;
    StageResult r = train_stage1_vrex(bundle, config, opts);
    write(Stage::stage1, config.stage1_epochs, r.params, r.optimizer, "stage1_end.json");
    result.log.append(r.log);
    params = std::move(r.params);
    state = OptimizerState{};
    stage = Stage::stage2;
    start_epoch = 0;
  }
  if (stage == Stage::stage2) {
    StageOptions opts;
    opts.initial_params = std::move(params);
    opts.optimizer = std::move(state);
    opts.start_epoch = start_epoch;
    opts.on_step = options.on_step;
    opts.on_epoch_end = periodic;
    StageResult r = train_stage2_mixup(bundle, config, opts);
    write(Stage::final, config.stage2_epochs, r.params, r.optimizer, "final.json");
    result.log.append(r.log);
    params = std::move(r.params);
  }

  result.params = std::move(params);
  result.val_report =
      evaluate(result.params, bundle.val_envs.empty() ? bundle.train_envs : bundle.val_envs);
  if (!bundle.test_envs.empty()) result.test_report = evaluate(result.params, bundle.test_envs);
  return result;
}

}  // namespace

RunResult run_two_stage(const DatasetBundle& bundle, const TrainConfig& config,
                        const RunOptions& options) {
  check_compatible(bundle, config);
  return run_from(bundle, config, Stage::stage1, 0, init_params(config.model), {}, options);
}

RunResult resume_two_stage(const DatasetBundle& bundle, const TrainConfig& config,
                           const Checkpoint& from, const RunOptions& options) {
  check_compatible(bundle, config);
  if (!(from.config == echo(config)))
    throw ValidationError("resume: checkpoint was written with a different configuration");
  return run_from(bundle, config, from.stage, from.epoch, from.params, from.optimizer, options);
}

}  // namespace vrexmix
