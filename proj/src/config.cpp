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

#include "vrexmix/config.hpp"

#include "vrexmix/data.hpp"
#include "vrexmix/error.hpp"
#include "vrexmix/trainer.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace vrexmix {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values, const std::function<std::string(const T&)>& fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += fmt(values[i]);
  }
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  return join<double>(v, [](const double& x) { return format_double(x); });
}

std::string join_ints(const std::vector<int>& v) {
  return join<int>(v, [](const int& x) { return std::to_string(x); });
}

int to_int(const std::string& key, const std::string& text) {
  const long long v = parse_int(key, text);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ValidationError(key + ": value " + text + " out of range");
  return static_cast<int>(v);
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;

void apply_with(const ConfigMap& map, const std::map<std::string, Setter>& setters,
                const std::string& what) {
  for (const auto& [key, value] : map.entries()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ValidationError("unknown " + what + " key '" + key + "'");
    it->second(key, value);
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ValidationError(key + ": expected a number, got '" + text + "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long long v = 0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ValidationError(key + ": expected an integer, got '" + text + "'");
  return v;
}

unsigned long long parse_u64(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  unsigned long long v = 0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ValidationError(key + ": expected an unsigned integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ValidationError(key + ": expected true or false, got '" + text + "'");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (const auto& item : split_list(text)) out.push_back(parse_double(key, item));
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  if (trim(text).empty()) return out;
  for (const auto& item : split_list(text)) out.push_back(to_int(key, item));
  return out;
}

ConfigMap ConfigMap::parse(const std::string& text) {
  ConfigMap map;
  std::stringstream ss(text);
  std::string line;
  long line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", line_no);
    map.set(key, trim(line.substr(eq + 1)));
  }
  return map;
}

ConfigMap ConfigMap::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

const std::string& ConfigMap::at(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ValidationError("missing config key '" + key + "'");
  return it->second;
}

ConfigMap ConfigMap::section(const std::string& prefix) const {
  ConfigMap out;
  const std::string p = prefix + ".";
  for (const auto& [k, v] : entries_)
    if (k.compare(0, p.size(), p) == 0) out.set(k, v);
  return out;
}

void ConfigMap::merge(const ConfigMap& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

std::string ConfigMap::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

void apply(const ConfigMap& map, TrainConfig& c) {
  const std::map<std::string, Setter> setters = {
      {"model.input_dim", [&](auto& k, auto& v) { c.model.input_dim = to_int(k, v); }},
      {"model.hidden_dims", [&](auto& k, auto& v) { c.model.hidden_dims = parse_int_list(k, v); }},
      {"model.num_classes", [&](auto& k, auto& v) { c.model.num_classes = to_int(k, v); }},
      {"model.init_scheme", [&](auto&, auto& v) { c.model.init_scheme = parse_init_scheme(v); }},
      {"model.seed", [&](auto& k, auto& v) { c.model.seed = parse_u64(k, v); }},
      {"vrex.lambda_max", [&](auto& k, auto& v) { c.vrex.lambda_max = parse_double(k, v); }},
      {"vrex.warmup_epochs", [&](auto& k, auto& v) { c.vrex.warmup_epochs = to_int(k, v); }},
      {"vrex.variance_mode", [&](auto&, auto& v) { c.vrex.variance_mode = parse_variance_mode(v); }},
      {"mixup.alpha", [&](auto& k, auto& v) { c.mixup.alpha = parse_double(k, v); }},
      {"mixup.pairing", [&](auto&, auto& v) { c.mixup.pairing = parse_pairing(v); }},
      {"mixup.seed", [&](auto& k, auto& v) { c.mixup.seed = parse_u64(k, v); }},
      {"train.stage1_epochs", [&](auto& k, auto& v) { c.stage1_epochs = to_int(k, v); }},
      {"train.stage2_epochs", [&](auto& k, auto& v) { c.stage2_epochs = to_int(k, v); }},
      {"train.batch_size", [&](auto& k, auto& v) { c.batch_size = to_int(k, v); }},
      {"train.optimizer", [&](auto&, auto& v) { c.optimizer = parse_optimizer(v); }},
      {"train.lr_stage1", [&](auto& k, auto& v) { c.lr_stage1 = parse_double(k, v); }},
      {"train.lr_stage2", [&](auto& k, auto& v) { c.lr_stage2 = parse_double(k, v); }},
      {"train.adam_beta1", [&](auto& k, auto& v) { c.adam_beta1 = parse_double(k, v); }},
      {"train.adam_beta2", [&](auto& k, auto& v) { c.adam_beta2 = parse_double(k, v); }},
      {"train.adam_eps", [&](auto& k, auto& v) { c.adam_eps = parse_double(k, v); }},
      {"train.run_seed", [&](auto& k, auto& v) { c.run_seed = parse_u64(k, v); }},
      {"train.checkpoint_every", [&](auto& k, auto& v) { c.checkpoint_every = to_int(k, v); }},
      {"train.stage2_keep_vrex", [&](auto& k, auto& v) { c.stage2_keep_vrex = parse_bool(k, v); }},
      {"train.early_stop_patience", [&](auto& k, auto& v) { c.early_stop_patience = to_int(k, v); }},
  };
  apply_with(map, setters, "training config");
}

ConfigMap echo(const TrainConfig& c) {
  ConfigMap m;
  m.set("model.input_dim", std::to_string(c.model.input_dim));
  m.set("model.hidden_dims", join_ints(c.model.hidden_dims));
  m.set("model.num_classes", std::to_string(c.model.num_classes));
  m.set("model.init_scheme", to_string(c.model.init_scheme));
  m.set("model.seed", std::to_string(c.model.seed));
  m.set("vrex.lambda_max", format_double(c.vrex.lambda_max));
  m.set("vrex.warmup_epochs", std::to_string(c.vrex.warmup_epochs));
  m.set("vrex.variance_mode", to_string(c.vrex.variance_mode));
  m.set("mixup.alpha", format_double(c.mixup.alpha));
  m.set("mixup.pairing", to_string(c.mixup.pairing));
  m.set("mixup.seed", std::to_string(c.mixup.seed));
  m.set("train.stage1_epochs", std::to_string(c.stage1_epochs));
  m.set("train.stage2_epochs", std::to_string(c.stage2_epochs));
  m.set("train.batch_size", std::to_string(c.batch_size));
  m.set("train.optimizer", to_string(c.optimizer));
  m.set("train.lr_stage1", format_double(c.lr_stage1));
  m.set("train.lr_stage2", format_double(c.lr_stage2));
  m.set("train.adam_beta1", format_double(c.adam_beta1));
  m.set("train.adam_beta2", format_double(c.adam_beta2));
  m.set("train.adam_eps", format_double(c.adam_eps));
  m.set("train.run_seed", std::to_string(c.run_seed));
  m.set("train.checkpoint_every", std::to_string(c.checkpoint_every));
  m.set("train.stage2_keep_vrex", c.stage2_keep_vrex ? "true" : "false");
  m.set("train.early_stop_patience", std::to_string(c.early_stop_patience));
  return m;
}

void apply(const ConfigMap& map, SpuriousSpec& s) {
  const std::map<std::string, Setter> setters = {
      {"data.n_train_envs", [&](auto& k, auto& v) { s.n_train_envs = to_int(k, v); }},
      {"data.train_correlations",
       [&](auto& k, auto& v) { s.train_correlations = parse_double_list(k, v); }},
      {"data.test_correlation", [&](auto& k, auto& v) { s.test_correlation = parse_double(k, v); }},
      {"data.n_invariant_dims", [&](auto& k, auto& v) { s.n_invariant_dims = to_int(k, v); }},
      {"data.invariant_mean", [&](auto& k, auto& v) { s.invariant_mean = parse_double(k, v); }},
      {"data.invariant_std", [&](auto& k, auto& v) { s.invariant_std = parse_double(k, v); }},
      {"data.spurious_mean", [&](auto& k, auto& v) { s.spurious_mean = parse_double(k, v); }},
      {"data.spurious_std", [&](auto& k, auto& v) { s.spurious_std = parse_double(k, v); }},
      {"data.train_sizes", [&](auto& k, auto& v) { s.train_sizes = parse_int_list(k, v); }},
      {"data.val_sizes", [&](auto& k, auto& v) { s.val_sizes = parse_int_list(k, v); }},
      {"data.test_size", [&](auto& k, auto& v) { s.test_size = to_int(k, v); }},
      {"data.class_balance", [&](auto& k, auto& v) { s.class_balance = parse_double(k, v); }},
      {"data.val_class_balance", [&](auto& k, auto& v) { s.val_class_balance = parse_double(k, v); }},
      {"data.exact_class_counts", [&](auto& k, auto& v) { s.exact_class_counts = parse_bool(k, v); }},
      {"data.seed", [&](auto& k, auto& v) { s.seed = parse_u64(k, v); }},
  };
  apply_with(map, setters, "data");
}

ConfigMap echo(const SpuriousSpec& s) {
  ConfigMap m;
  m.set("data.n_train_envs", std::to_string(s.n_train_envs));
  m.set("data.train_correlations", join_doubles(s.train_correlations));
  m.set("data.test_correlation", format_double(s.test_correlation));
  m.set("data.n_invariant_dims", std::to_string(s.n_invariant_dims));
  m.set("data.invariant_mean", format_double(s.invariant_mean));
  m.set("data.invariant_std", format_double(s.invariant_std));
  m.set("data.spurious_mean", format_double(s.spurious_mean));
  m.set("data.spurious_std", format_double(s.spurious_std));
  m.set("data.train_sizes", join_ints(s.train_sizes));
  m.set("data.val_sizes", join_ints(s.val_sizes));
  m.set("data.test_size", std::to_string(s.test_size));
  m.set("data.class_balance", format_double(s.class_balance));
  m.set("data.val_class_balance", format_double(s.val_class_balance));
  m.set("data.exact_class_counts", s.exact_class_counts ? "true" : "false");
  m.set("data.seed", std::to_string(s.seed));
  return m;
}

}  // namespace vrexmix
