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

#ifndef VREXMIX_CHECKPOINT_HPP_
#define VREXMIX_CHECKPOINT_HPP_

#include "vrexmix/config.hpp"
#include "vrexmix/model.hpp"
#include "vrexmix/optimizer.hpp"
#include "vrexmix/trainer.hpp"

#include <filesystem>
#include <string>

namespace vrexmix {

inline constexpr int kCheckpointVersion = 1;

/// Training state after `epoch` completed epochs of `stage`.
struct Checkpoint {
  int version = kCheckpointVersion;
  ConfigMap config;
  Stage stage = Stage::stage1;
  int epoch = 0;
  ModelParams params;
  OptimizerState optimizer;

  bool operator==(const Checkpoint&) const = default;
};

/// JSON document; doubles are written in shortest round-trip form so that
/// load(save(c)) == c bit for bit.
std::string checkpoint_to_text(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_text(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vrexmix

#endif  // VREXMIX_CHECKPOINT_HPP_
