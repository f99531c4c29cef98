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

#include "vrexmix/cli.hpp"

#include "vrexmix/checkpoint.hpp"
#include "vrexmix/config.hpp"
#include "vrexmix/data.hpp"
#include "vrexmix/error.hpp"
#include "vrexmix/gradcheck_suite.hpp"
#include "vrexmix/metrics.hpp"
#include "vrexmix/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#ifndef VREXMIX_VERSION
#define VREXMIX_VERSION "0.0.0"
#endif

namespace vrexmix::cli {

namespace fs = std::filesystem;

namespace {

/// Bad flags, unreadable inputs or inconsistent configuration: exit 2.
class UsageFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

/// Runs `fn`, turning library errors into UsageFailure.
template <typename Fn>
auto as_usage(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw UsageFailure(e.what());
  }
}

/// Artifact paths are stored relative to `root` so identical runs in
/// different directories give identical manifests.
std::string manifest_json(const std::string& command, const std::string& config_path,
                          std::uint64_t seed, const ConfigMap& config, const fs::path& root,
                          const std::vector<fs::path>& artifacts) {
  nlohmann::ordered_json j;
  j["tool"] = "vrexmix";
  j["version"] = VREXMIX_VERSION;
  j["command"] = command;
  j["config_path"] = config_path;
  j["seed"] = seed;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config.entries()) cfg[k] = v;
  j["config"] = std::move(cfg);
  std::vector<std::string> paths;
  for (const auto& p : artifacts) paths.push_back(p.lexically_relative(root).generic_string());
  j["artifacts"] = paths;
  return j.dump(2) + "\n";
}

ConfigMap config_from_manifest(const fs::path& path) {
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    ConfigMap map;
    for (const auto& [k, v] : j.at("config").items()) map.set(k, v.get<std::string>());
    return map;
  } catch (const nlohmann::json::exception& e) {
    throw UsageFailure("manifest " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Methods and training runs shared by `train` and `sweep`.

const std::map<std::string, ConfigMap>& method_presets() {
  static const std::map<std::string, ConfigMap> presets = [] {
    std::map<std::string, ConfigMap> m;
    m["vrex_mixup"] = ConfigMap{};
    ConfigMap erm;
    erm.set("vrex.lambda_max", "0");
    erm.set("train.stage2_epochs", "0");
    m["erm"] = erm;
    ConfigMap vrex;
    vrex.set("train.stage2_epochs", "0");
    m["vrex"] = vrex;
    ConfigMap mixup;
    mixup.set("vrex.lambda_max", "0");
    m["mixup"] = mixup;
    return m;
  }();
  return presets;
}

ConfigMap method_preset(const std::string& method) {
  const auto it = method_presets().find(method);
  if (it == method_presets().end())
    throw UsageFailure("--method: unknown method '" + method +
                       "' (expected vrex_mixup, erm, vrex or mixup)");
  return it->second;
}

ConfigMap seed_overrides(std::uint64_t seed) {
  ConfigMap m;
  const std::string s = std::to_string(seed);
  m.set("train.run_seed", s);
  m.set("model.seed", s);
  m.set("mixup.seed", s);
  m.set("data.seed", s);
  return m;
}

ConfigMap keys_with_prefix(const ConfigMap& map, const std::vector<std::string>& prefixes) {
  ConfigMap out;
  for (const auto& p : prefixes) out.merge(map.section(p));
  return out;
}

/// Generates the data bundle for a spec, sizing environments from the totals
/// when sizes were not given explicitly.
SpuriousSpec spec_from(const ConfigMap& user) {
  SpuriousSpec spec;
  ConfigMap data = user.section("data");
  int train_total = 1124;
  int val_total = 308;
  if (data.contains("data.train_total"))
    train_total = static_cast<int>(parse_int("data.train_total", data.at("data.train_total")));
  if (data.contains("data.val_total"))
    val_total = static_cast<int>(parse_int("data.val_total", data.at("data.val_total")));
  ConfigMap filtered;
  for (const auto& [k, v] : data.entries())
    if (k != "data.path" && k != "data.train_total" && k != "data.val_total") filtered.set(k, v);
  apply(filtered, spec);
  if (!filtered.contains("data.train_sizes")) spec.train_sizes = even_split(train_total, spec.n_train_envs);
  if (!filtered.contains("data.val_sizes")) spec.val_sizes = even_split(val_total, spec.n_train_envs);
  if (!filtered.contains("data.test_size")) spec.test_size = val_total;
  return spec;
}

struct Resolved {
  ConfigMap config;  // fully resolved, reproducible
  TrainConfig train;
  DatasetBundle bundle;
};

Resolved resolve_training(const ConfigMap& user) {
  Resolved r;
  ConfigMap data_echo;
  if (user.contains("data.path")) {
    const fs::path dir = user.at("data.path");
    const int classes = user.contains("model.num_classes")
                            ? static_cast<int>(parse_int("model.num_classes", user.at("model.num_classes")))
                            : 2;
    r.bundle = load_bundle(dir, classes);
    data_echo.set("data.path", user.at("data.path"));
  } else {
    const SpuriousSpec spec = spec_from(user);
    r.bundle = generate_spurious_environments(spec);
    data_echo = echo(spec);
  }

  ConfigMap train_keys = keys_with_prefix(user, {"model", "vrex", "mixup", "train"});
  if (!train_keys.contains("model.input_dim"))
    train_keys.set("model.input_dim", std::to_string(r.bundle.feature_dim));
  if (!train_keys.contains("model.num_classes"))
    train_keys.set("model.num_classes", std::to_string(r.bundle.num_classes));
  apply(train_keys, r.train);
  r.train.validate();

  for (const auto& [k, v] : user.entries())
    if (k.rfind("run.", 0) == 0) r.config.set(k, v);
  r.config.merge(echo(r.train));
  r.config.merge(data_echo);
  return r;
}

/// Rejects keys outside the known sections so typos surface as usage errors.
void check_sections(const ConfigMap& user) {
  for (const auto& [k, v] : user.entries()) {
    const bool known = k.rfind("model.", 0) == 0 || k.rfind("vrex.", 0) == 0 ||
                       k.rfind("mixup.", 0) == 0 || k.rfind("train.", 0) == 0 ||
                       k.rfind("data.", 0) == 0 || k == "run.method";
    if (!known) throw UsageFailure("unknown config key '" + k + "'");
  }
}

struct TrainOutcome {
  RunResult result;
  ConfigMap config;
  std::vector<fs::path> artifacts;
};

TrainOutcome execute_training(const Resolved& resolved, const fs::path& out,
                              const std::optional<fs::path>& resume, bool timing) {
  as_usage([&] { make_dirs(out); });
  RunOptions options;
  options.checkpoint_dir = out / "checkpoints";

  TrainOutcome outcome;
  outcome.config = resolved.config;
  if (resume) {
    const Checkpoint from = as_usage([&] { return load_checkpoint(*resume); });
    // Epochs up to the checkpoint come from the log of the run that wrote it
    // (<run>/checkpoints/x.json), else from a log already in `out`.
    TrainLog earlier;
    fs::path prior = out / "log.jsonl";
    if (resume->parent_path().filename() == "checkpoints" &&
        fs::exists(resume->parent_path().parent_path() / "log.jsonl"))
      prior = resume->parent_path().parent_path() / "log.jsonl";
    if (fs::exists(prior)) {
      const TrainLog old = as_usage([&] { return log_from_jsonl(read_file(prior)); });
      for (const auto& r : old.records) {
        const bool before = from.stage == Stage::final ||
                            (r.stage == from.stage && r.epoch <= from.epoch) ||
                            (r.stage == Stage::stage1 && from.stage == Stage::stage2);
        if (before) earlier.records.push_back(r);
      }
    }
    outcome.result = resume_two_stage(resolved.bundle, resolved.train, from, options);
    for (const auto& r : outcome.result.log.records) earlier.records.push_back(r);
    outcome.result.log = std::move(earlier);
  } else {
    outcome.result = run_two_stage(resolved.bundle, resolved.train, options);
  }

  auto& artifacts = outcome.artifacts;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_file(out / name, text);
    artifacts.push_back(out / name);
  };
  emit("config.txt", resolved.config.to_text());
  emit("log.jsonl", log_to_jsonl(outcome.result.log));
  if (timing) {
    std::string t = "stage,epoch,wall_time_s\n";
    for (const auto& r : outcome.result.log.records)
      t += to_string(r.stage) + "," + std::to_string(r.epoch) + "," + format_double(r.wall_time_s) + "\n";
    emit("timing.csv", t);
  }
  emit("report.json", report_to_json(outcome.result.val_report));
  emit("report.csv", report_to_csv(outcome.result.val_report));
  if (outcome.result.test_report) {
    emit("test_report.json", report_to_json(*outcome.result.test_report));
    emit("test_report.csv", report_to_csv(*outcome.result.test_report));
  }
  // Listed from disk so checkpoints kept from before a resume are included.
  std::vector<fs::path> checkpoints;
  if (fs::is_directory(options.checkpoint_dir))
    for (const auto& entry : fs::directory_iterator(options.checkpoint_dir))
      if (entry.is_regular_file()) checkpoints.push_back(entry.path());
  std::sort(checkpoints.begin(), checkpoints.end());
  artifacts.insert(artifacts.end(), checkpoints.begin(), checkpoints.end());
  return outcome;
}

// ---------------------------------------------------------------------------
// Commands

struct CommonFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* app, CommonFlags& flags, const std::string& default_out) {
  flags.out = default_out;
  app->add_option("--config", flags.config, "Flat key = value config file");
  flags.seed_opt = app->add_option("--seed", flags.seed, "Seed for data, model and batching");
  app->add_option("--out", flags.out, "Output directory")->capture_default_str();
}

ConfigMap base_config(const CommonFlags& flags) {
  ConfigMap map;
  if (!flags.config.empty()) map = as_usage([&] { return ConfigMap::load(flags.config); });
  return map;
}

struct GenDataFlags {
  CommonFlags common;
  std::string train_correlations;
  int n_train_envs = 0;
  double test_correlation = 0.0;
  int train_total = 0;
  int val_total = 0;
  int test_size = 0;
  std::map<std::string, CLI::Option*> opts;
};

int cmd_gen_data(const GenDataFlags& f, std::ostream& out) {
  ConfigMap user = base_config(f.common);
  if (f.common.seed_opt->count()) user.set("data.seed", std::to_string(f.common.seed));
  if (f.opts.at("n")->count()) user.set("data.n_train_envs", std::to_string(f.n_train_envs));
  if (f.opts.at("tc")->count()) user.set("data.test_correlation", format_double(f.test_correlation));
  if (f.opts.at("tt")->count()) user.set("data.train_total", std::to_string(f.train_total));
  if (f.opts.at("vt")->count()) user.set("data.val_total", std::to_string(f.val_total));
  if (f.opts.at("ts")->count()) user.set("data.test_size", std::to_string(f.test_size));
  if (f.opts.at("corr")->count()) {
    const auto values = as_usage([&] {
      return parse_double_list("--train-correlations", f.train_correlations);
    });
    const int n = user.contains("data.n_train_envs")
                      ? static_cast<int>(as_usage([&] {
                          return parse_int("data.n_train_envs", user.at("data.n_train_envs"));
                        }))
                      : SpuriousSpec{}.n_train_envs;
    if (static_cast<int>(values.size()) != n)
      throw UsageFailure("--train-correlations: expected " + std::to_string(n) +
                         " values (one per training environment), got " +
                         std::to_string(values.size()));
    user.set("data.train_correlations", f.train_correlations);
  }
  for (const auto& [k, v] : user.entries())
    if (k.rfind("data.", 0) != 0) throw UsageFailure("gen-data: unexpected config key '" + k + "'");

  const SpuriousSpec spec = as_usage([&] {
    SpuriousSpec s = spec_from(user);
    s.validate();
    return s;
  });
  const DatasetBundle bundle = generate_spurious_environments(spec);
  const fs::path dir = f.common.out;
  as_usage([&] { make_dirs(dir); });
  write_bundle(dir, bundle);

  std::vector<fs::path> artifacts = {dir / "train.csv", dir / "val.csv"};
  if (!bundle.test_envs.empty()) artifacts.push_back(dir / "test.csv");
  const ConfigMap resolved = echo(spec);
  write_file(dir / "config.txt", resolved.to_text());
  artifacts.push_back(dir / "config.txt");
  artifacts.push_back(dir / "manifest.json");
  write_file(dir / "manifest.json",
             manifest_json("gen-data", f.common.config, spec.seed, resolved, dir, artifacts));

  auto count = [](const std::vector<Environment>& envs) {
    std::size_t n = 0, ones = 0;
    for (const auto& e : envs)
      for (const auto& ex : e.examples) {
        ++n;
        ones += ex.label == 1;
      }
    return std::pair{n, ones};
  };
  for (const auto& [name, envs] : {std::pair{"train", &bundle.train_envs},
                                   std::pair{"val", &bundle.val_envs},
                                   std::pair{"test", &bundle.test_envs}}) {
    if (envs->empty()) continue;
    const auto [n, ones] = count(*envs);
    out << name << ": rows=" << n << " class0=" << (n - ones) << " class1=" << ones
        << " environments=" << envs->size() << "\n";
  }
  return kExitOk;
}

struct TrainFlags {
  CommonFlags common;
  std::string data;
  std::string method;
  std::string manifest;
  std::string resume;
  int stage1_epochs = 0;
  int stage2_epochs = 0;
  int batch_size = 0;
  double lambda = 0.0;
  double alpha = 0.0;
  double lr_stage1 = 0.0;
  double lr_stage2 = 0.0;
  int checkpoint_every = 0;
  bool timing = false;
  bool verbose = false;
  std::map<std::string, CLI::Option*> opts;
};

ConfigMap train_user_config(const TrainFlags& f) {
  ConfigMap user;
  std::string method = "vrex_mixup";
  if (!f.manifest.empty()) {
    if (!f.common.config.empty()) throw UsageFailure("--manifest and --config are exclusive");
    user = config_from_manifest(f.manifest);
  } else {
    user = base_config(f.common);
  }
  if (user.contains("run.method")) method = user.at("run.method");
  if (f.opts.at("method")->count()) method = f.method;
  user.merge(method_preset(method));
  user.set("run.method", method);
  if (f.common.seed_opt->count()) user.merge(seed_overrides(f.common.seed));
  if (f.opts.at("data")->count()) user.set("data.path", f.data);
  if (f.opts.at("s1")->count()) user.set("train.stage1_epochs", std::to_string(f.stage1_epochs));
  if (f.opts.at("s2")->count()) user.set("train.stage2_epochs", std::to_string(f.stage2_epochs));
  if (f.opts.at("bs")->count()) user.set("train.batch_size", std::to_string(f.batch_size));
  if (f.opts.at("lambda")->count()) user.set("vrex.lambda_max", format_double(f.lambda));
  if (f.opts.at("alpha")->count()) user.set("mixup.alpha", format_double(f.alpha));
  if (f.opts.at("lr1")->count()) user.set("train.lr_stage1", format_double(f.lr_stage1));
  if (f.opts.at("lr2")->count()) user.set("train.lr_stage2", format_double(f.lr_stage2));
  if (f.opts.at("ckpt")->count()) user.set("train.checkpoint_every", std::to_string(f.checkpoint_every));
  check_sections(user);
  return user;
}

int cmd_train(const TrainFlags& f, std::ostream& out) {
  const ConfigMap user = train_user_config(f);
  const Resolved resolved = as_usage([&] { return resolve_training(user); });
  std::optional<fs::path> resume;
  if (!f.resume.empty()) resume = f.resume;

  const fs::path dir = f.common.out;
  TrainOutcome outcome = execute_training(resolved, dir, resume, f.timing);
  outcome.artifacts.push_back(dir / "manifest.json");
  write_file(dir / "manifest.json",
             manifest_json("train", f.manifest.empty() ? f.common.config : f.manifest,
                           resolved.train.run_seed, resolved.config, dir, outcome.artifacts));

  const RunResult& r = outcome.result;
  if (f.verbose)
    for (const auto& rec : r.log.records)
      out << to_string(rec.stage) << " epoch=" << rec.epoch << " mean_risk=" << format_double(rec.mean_risk)
          << " risk_variance=" << format_double(rec.risk_variance) << " lambda=" << format_double(rec.lambda)
          << " objective=" << format_double(rec.objective) << "\n";
  for (const auto& d : r.val_report.per_domain)
    out << "val domain=" << d.domain_id << " n=" << d.n << " macro_f1=" << format_double(d.macro_f1) << "\n";
  if (r.test_report) {
    for (const auto& d : r.test_report->per_domain)
      out << "test domain=" << d.domain_id << " n=" << d.n << " macro_f1=" << format_double(d.macro_f1)
          << "\n";
    out << "test_average_macro_f1=" << format_double(r.test_report->average_macro_f1) << "\n";
  }
  out << "average_macro_f1=" << format_double(r.val_report.average_macro_f1) << "\n";
  return kExitOk;
}

struct EvalFlags {
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  std::string out;
  bool pooled = false;
};

int cmd_eval(const EvalFlags& f, std::ostream& out) {
  const Checkpoint ckpt = as_usage([&] { return load_checkpoint(f.checkpoint); });
  const fs::path data = f.data;
  fs::path csv = data;
  if (fs::is_directory(data)) csv = data / (f.split + ".csv");
  const int width = as_usage([&] { return csv_feature_dim(csv); });
  if (width != ckpt.params.input_dim())
    throw UsageFailure("checkpoint input_dim " + std::to_string(ckpt.params.input_dim()) +
                       " does not match dataset feature_dim " + std::to_string(width));
  const auto envs =
      as_usage([&] { return load_csv(csv, width, ckpt.params.num_classes()); });
  if (envs.empty()) throw UsageFailure(csv.string() + " holds no examples");
  const EvalReport report = evaluate(ckpt.params, envs);

  if (!f.out.empty()) {
    as_usage([&] { make_dirs(f.out); });
    write_file(fs::path(f.out) / "report.json", report_to_json(report));
    write_file(fs::path(f.out) / "report.csv", report_to_csv(report));
  }
  for (const auto& d : report.per_domain)
    out << "domain=" << d.domain_id << " n=" << d.n << " macro_f1=" << format_double(d.macro_f1) << "\n";
  if (f.pooled) out << "pooled_macro_f1=" << format_double(report.pooled_macro_f1) << "\n";
  out << "average_macro_f1=" << format_double(report.average_macro_f1) << "\n";
  return kExitOk;
}

struct GradCheckFlags {
  std::uint64_t seed = 0;
  int seeds = 1;
  int inputs = 100;
  double h = 1e-5;
  bool inject_relu_fault = false;
};

int cmd_gradcheck(const GradCheckFlags& f, std::ostream& out) {
  if (f.seeds < 1 || f.inputs < 1) throw UsageFailure("--seeds and --inputs must be positive");
  std::vector<GradCheckCaseResult> merged;
  for (int s = 0; s < f.seeds; ++s) {
    GradCheckOptions opts;
    opts.seed = f.seed + static_cast<std::uint64_t>(s);
    opts.inputs = f.inputs;
    opts.h = f.h;
    opts.inject_relu_fault = f.inject_relu_fault;
    const auto results = run_gradcheck_suite(opts);
    if (merged.empty()) {
      merged = results;
      continue;
    }
    for (std::size_t i = 0; i < results.size(); ++i) {
      merged[i].max_relative_error = std::max(merged[i].max_relative_error, results[i].max_relative_error);
      merged[i].inputs += results[i].inputs;
      merged[i].passed = merged[i].passed && results[i].passed;
    }
  }
  int failed = 0;
  for (const auto& r : merged) {
    out << r.name << " max_rel_err=" << format_double(r.max_relative_error) << " inputs=" << r.inputs
        << (r.passed ? " PASS" : " FAIL") << "\n";
    failed += r.passed ? 0 : 1;
  }
  out << "gradcheck: " << (failed == 0 ? "all passed" : std::to_string(failed) + " failed") << "\n";
  return failed == 0 ? kExitOk : kExitFailure;
}

struct ReportFlags {
  std::vector<std::string> logs;
  std::vector<std::string> evals;
  std::string out = ".";
};

std::string curve_csv(const TrainLog& log) {
  std::size_t n = 0;
  for (const auto& r : log.records) n = std::max(n, r.risks.size());
  std::string s = "stage,epoch,mean_risk,risk_variance,lambda,objective,train_loss";
  for (std::size_t i = 0; i < n; ++i) s += ",risk_" + std::to_string(i);
  s += "\n";
  for (const auto& r : log.records) {
    s += to_string(r.stage) + "," + std::to_string(r.epoch) + "," + format_double(r.mean_risk) + "," +
         format_double(r.risk_variance) + "," + format_double(r.lambda) + "," +
         format_double(r.objective) + "," + format_double(r.train_loss);
    for (std::size_t i = 0; i < n; ++i) s += "," + (i < r.risks.size() ? format_double(r.risks[i]) : "");
    s += "\n";
  }
  return s;
}

std::string comparison_csv(const std::vector<TrainLog>& logs) {
  using Key = std::pair<int, int>;  // stage order, epoch
  std::map<Key, std::vector<const EpochRecord*>> rows;
  for (std::size_t i = 0; i < logs.size(); ++i)
    for (const auto& r : logs[i].records) {
      auto& slot = rows[{static_cast<int>(r.stage), r.epoch}];
      slot.resize(logs.size(), nullptr);
      slot[i] = &r;
    }
  std::string s = "stage,epoch";
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const std::string p = ",run" + std::to_string(i) + "_";
    s += p + "mean_risk" + p + "risk_variance" + p + "lambda" + p + "objective";
  }
  s += "\n";
  for (const auto& [key, recs] : rows) {
    s += to_string(static_cast<Stage>(key.first)) + "," + std::to_string(key.second);
    for (const EpochRecord* r : recs) {
      if (!r) {
        s += ",,,,";
        continue;
      }
      s += "," + format_double(r->mean_risk) + "," + format_double(r->risk_variance) + "," +
           format_double(r->lambda) + "," + format_double(r->objective);
    }
    s += "\n";
  }
  return s;
}

int cmd_report(const ReportFlags& f, std::ostream& out) {
  if (f.logs.empty() && f.evals.empty()) throw UsageFailure("report: give at least one --log or --eval");
  std::vector<TrainLog> logs;
  for (const auto& p : f.logs) logs.push_back(as_usage([&] { return log_from_jsonl(read_file(p)); }));
  std::vector<EvalReport> reports;
  for (const auto& p : f.evals) reports.push_back(as_usage([&] { return report_from_json(read_file(p)); }));

  const fs::path dir = f.out;
  as_usage([&] { make_dirs(dir); });
  if (logs.size() == 1) {
    write_file(dir / "curves.csv", curve_csv(logs.front()));
    out << "wrote " << (dir / "curves.csv").generic_string() << "\n";
  } else if (logs.size() > 1) {
    for (std::size_t i = 0; i < logs.size(); ++i)
      write_file(dir / ("curves_" + std::to_string(i) + ".csv"), curve_csv(logs[i]));
    write_file(dir / "comparison.csv", comparison_csv(logs));
    out << "wrote " << (dir / "comparison.csv").generic_string() << "\n";
  }
  if (!reports.empty()) {
    std::size_t classes = 0;
    for (const auto& r : reports)
      for (const auto& d : r.per_domain) classes = std::max(classes, d.f1.size());
    std::string s = "report,domain_id,macro_f1";
    for (std::size_t c = 0; c < classes; ++c) s += ",f1_class" + std::to_string(c);
    s += ",n\n";
    for (std::size_t i = 0; i < reports.size(); ++i)
      for (const auto& d : reports[i].per_domain) {
        s += std::to_string(i) + "," + std::to_string(d.domain_id) + "," + format_double(d.macro_f1);
        for (std::size_t c = 0; c < classes; ++c) s += "," + format_double(c < d.f1.size() ? d.f1[c] : 0.0);
        s += "," + std::to_string(d.n) + "\n";
      }
    write_file(dir / "f1_table.csv", s);
    out << "wrote " << (dir / "f1_table.csv").generic_string() << "\n";
  }
  return kExitOk;
}

struct SweepFlags {
  CommonFlags common;
  std::string data;
  std::string seeds = "0,1,2,3,4";
  std::string methods = "erm,vrex_mixup";
  int jobs = 1;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_sweep(const SweepFlags& f, std::ostream& out) {
  if (f.jobs < 1) throw UsageFailure("--jobs must be at least 1");
  const ConfigMap base = base_config(f.common);
  const auto seeds = as_usage([&] { return parse_int_list("--seeds", f.seeds); });
  std::vector<std::string> methods;
  {
    std::stringstream ss(f.methods);
    std::string m;
    while (std::getline(ss, m, ',')) {
      method_preset(m);
      methods.push_back(m);
    }
  }
  if (seeds.empty() || methods.empty()) throw UsageFailure("sweep: no seeds or methods");

  struct Job {
    std::string method;
    std::uint64_t seed;
    ConfigMap user;
    double val = 0.0;
    double test = 0.0;
    bool has_test = false;
    std::string error;
  };
  std::vector<Job> jobs;
  for (const auto& m : methods)
    for (int s : seeds) {
      if (s < 0) throw UsageFailure("--seeds: seeds must be nonnegative");
      ConfigMap user = base;
      user.merge(method_preset(m));
      user.set("run.method", m);
      user.merge(seed_overrides(static_cast<std::uint64_t>(s)));
      if (!f.data.empty()) user.set("data.path", f.data);
      check_sections(user);
      Job job;
      job.method = m;
      job.seed = static_cast<std::uint64_t>(s);
      job.user = std::move(user);
      jobs.push_back(std::move(job));
    }

  const fs::path dir = f.common.out;
  as_usage([&] { make_dirs(dir); });
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& job = jobs[i];
      try {
        const Resolved resolved = resolve_training(job.user);
        const fs::path run_dir = dir / (job.method + "_seed" + std::to_string(job.seed));
        const TrainOutcome outcome = execute_training(resolved, run_dir, std::nullopt, false);
        job.val = outcome.result.val_report.average_macro_f1;
        if (outcome.result.test_report) {
          job.test = outcome.result.test_report->average_macro_f1;
          job.has_test = true;
        }
      } catch (const std::exception& e) {
        job.error = e.what();
      }
    }
  };
  std::vector<std::thread> threads;
  const int n_threads = std::min<int>(f.jobs, static_cast<int>(jobs.size()));
  for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  for (const auto& job : jobs)
    if (!job.error.empty())
      throw std::runtime_error("sweep: " + job.method + " seed " + std::to_string(job.seed) + ": " + job.error);

  std::string table = "method,seed,val_average_macro_f1,test_average_macro_f1\n";
  for (const auto& job : jobs)
    table += job.method + "," + std::to_string(job.seed) + "," + format_double(job.val) + "," +
             (job.has_test ? format_double(job.test) : "") + "\n";
  write_file(dir / "sweep.csv", table);

  std::string summary = "method,runs,median_val_average_macro_f1,median_test_average_macro_f1\n";
  for (const auto& m : methods) {
    std::vector<double> val, test;
    for (const auto& job : jobs)
      if (job.method == m) {
        val.push_back(job.val);
        if (job.has_test) test.push_back(job.test);
      }
    const std::string mt = test.empty() ? "" : format_double(median(test));
    summary += m + "," + std::to_string(val.size()) + "," + format_double(median(val)) + "," + mt + "\n";
    out << "method=" << m << " runs=" << val.size() << " median_val_average_macro_f1="
        << format_double(median(val));
    if (!test.empty()) out << " median_test_average_macro_f1=" << mt;
    out << "\n";
  }
  write_file(dir / "summary.csv", summary);
  return kExitOk;
}

}  // namespace

const char* version() { return VREXMIX_VERSION; }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"vrexmix: variance-penalized pretraining + Mixup fine-tuning over multi-environment data",
               "vrexmix"};
  app.set_version_flag("--version", std::string(VREXMIX_VERSION));
  app.require_subcommand(1);

  GenDataFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic spurious-correlation dataset");
  add_common(gen_cmd, gen.common, "data");
  gen.opts["corr"] = gen_cmd->add_option("--train-correlations", gen.train_correlations,
                                         "Comma list of per-environment label/spurious agreement");
  gen.opts["n"] = gen_cmd->add_option("--n-train-envs", gen.n_train_envs, "Number of training environments");
  gen.opts["tc"] = gen_cmd->add_option("--test-correlation", gen.test_correlation, "Agreement in the test env");
  gen.opts["tt"] = gen_cmd->add_option("--train-total", gen.train_total, "Training rows split across envs");
  gen.opts["vt"] = gen_cmd->add_option("--val-total", gen.val_total, "Validation rows split across envs");
  gen.opts["ts"] = gen_cmd->add_option("--test-size", gen.test_size, "Rows in the held-out test env");

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Run two-stage training and report macro F1");
  add_common(train_cmd, train.common, "run");
  train.opts["data"] = train_cmd->add_option("--data", train.data, "Dataset directory from gen-data");
  train.opts["method"] = train_cmd->add_option("--method", train.method, "vrex_mixup | erm | vrex | mixup");
  train_cmd->add_option("--manifest", train.manifest, "Re-run the configuration recorded in a manifest");
  train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint of the same configuration");
  train.opts["s1"] = train_cmd->add_option("--stage1-epochs", train.stage1_epochs);
  train.opts["s2"] = train_cmd->add_option("--stage2-epochs", train.stage2_epochs);
  train.opts["bs"] = train_cmd->add_option("--batch-size", train.batch_size);
  train.opts["lambda"] = train_cmd->add_option("--lambda", train.lambda, "Variance penalty weight");
  train.opts["alpha"] = train_cmd->add_option("--alpha", train.alpha, "Mixup Beta concentration");
  train.opts["lr1"] = train_cmd->add_option("--lr-stage1", train.lr_stage1);
  train.opts["lr2"] = train_cmd->add_option("--lr-stage2", train.lr_stage2);
  train.opts["ckpt"] = train_cmd->add_option("--checkpoint-every", train.checkpoint_every);
  train_cmd->add_flag("--timing", train.timing, "Also write per-epoch wall times");
  train_cmd->add_flag("--verbose", train.verbose, "Print one line per epoch");

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--data", eval.data, "CSV file or gen-data directory")->required();
  eval_cmd->add_option("--split", eval.split, "Split to read from a directory")->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Directory for report.json / report.csv");
  eval_cmd->add_flag("--pooled", eval.pooled, "Also report macro F1 of the pooled confusion matrix");

  GradCheckFlags gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  gc_cmd->set_help_flag("--help", "Print this help message and exit");
  gc_cmd->add_option("--seed", gc.seed);
  gc_cmd->add_option("--seeds", gc.seeds, "Number of consecutive seeds to sweep")->capture_default_str();
  gc_cmd->add_option("--inputs", gc.inputs, "Random points per case")->capture_default_str();
  gc_cmd->add_option("--h", gc.h, "Finite-difference step")->capture_default_str();
  gc_cmd->add_flag("--inject-relu-fault", gc.inject_relu_fault, "Break the ReLU gradient on purpose")
      ->group("");

  ReportFlags rep;
  auto* rep_cmd = app.add_subcommand("report", "Turn logs and reports into plot-ready CSV");
  rep_cmd->add_option("--log", rep.logs, "log.jsonl from train (repeatable)");
  rep_cmd->add_option("--eval", rep.evals, "report.json from train or eval (repeatable)");
  rep_cmd->add_option("--out", rep.out)->capture_default_str();

  SweepFlags sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train several methods over several seeds");
  add_common(sweep_cmd, sweep.common, "sweep");
  sweep_cmd->add_option("--data", sweep.data, "Dataset directory; synthetic per seed when omitted");
  sweep_cmd->add_option("--seeds", sweep.seeds, "Comma list of seeds")->capture_default_str();
  sweep_cmd->add_option("--methods", sweep.methods, "Comma list of methods")->capture_default_str();
  sweep_cmd->add_option("--jobs", sweep.jobs, "Parallel runs")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << VREXMIX_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen, out);
    if (train_cmd->parsed()) return cmd_train(train, out);
    if (eval_cmd->parsed()) return cmd_eval(eval, out);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc, out);
    if (rep_cmd->parsed()) return cmd_report(rep, out);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep, out);
  } catch (const UsageFailure& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace vrexmix::cli
