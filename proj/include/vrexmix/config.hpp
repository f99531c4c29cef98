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

// Flat `key = value` configuration files with dotted section keys.

#ifndef VREXMIX_CONFIG_HPP_
#define VREXMIX_CONFIG_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace vrexmix {

struct TrainConfig;
struct SpuriousSpec;

/// Ordered key/value store. Lines are `key = value`; `#` starts a comment.
class ConfigMap {
 public:
  static ConfigMap parse(const std::string& text);
  static ConfigMap load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& at(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Entries whose key starts with `prefix` followed by '.'.
  ConfigMap section(const std::string& prefix) const;

  /// Later values win.
  void merge(const ConfigMap& other);

  std::string to_text() const;

  bool operator==(const ConfigMap&) const = default;

 private:
  std::map<std::string, std::string> entries_;
};

/// Overwrites the fields of `config` named by `map`. Unknown keys and
/// unparsable values raise ValidationError naming the key.
void apply(const ConfigMap& map, TrainConfig& config);
void apply(const ConfigMap& map, SpuriousSpec& spec);

/// Every field, fully resolved.
ConfigMap echo(const TrainConfig& config);
ConfigMap echo(const SpuriousSpec& spec);

// Value codecs shared with the CLI.
double parse_double(const std::string& key, const std::string& text);
long long parse_int(const std::string& key, const std::string& text);
unsigned long long parse_u64(const std::string& key, const std::string& text);
bool parse_bool(const std::string& key, const std::string& text);
std::vector<double> parse_double_list(const std::string& key, const std::string& text);
std::vector<int> parse_int_list(const std::string& key, const std::string& text);
std::string format_double(double v);

}  // namespace vrexmix

#endif  // VREXMIX_CONFIG_HPP_
