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

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace vrexmix {

namespace {

using Json = nlohmann::ordered_json;

Json tensor_to_json(const Tensor& t) {
  if (!t.allFinite()) throw NumericalError("checkpoint: refusing to save non-finite values");
  Json j;
  j["shape"] = {t.rows(), t.cols()};
  j["values"] = std::vector<double>(t.data(), t.data() + t.size());
  return j;
}

Tensor tensor_from_json(const Json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0 ||
      static_cast<std::size_t>(shape[0] * shape[1]) != values.size())
    throw ParseError("checkpoint: tensor shape does not match its value count", 0);
  Tensor t(shape[0], shape[1]);
  std::copy(values.begin(), values.end(), t.data());
  return t;
}

Json params_to_json(const ModelParams& params) {
  Json layers = Json::array();
  for (const auto& l : params.layers)
    layers.push_back({{"weight", tensor_to_json(l.weight)}, {"bias", tensor_to_json(l.bias)}});
  return layers;
}

ModelParams params_from_json(const Json& j) {
  ModelParams params;
  for (const auto& l : j) params.layers.push_back({tensor_from_json(l.at("weight")), tensor_from_json(l.at("bias"))});
  return params;
}

}  // namespace

std::string checkpoint_to_text(const Checkpoint& checkpoint) {
  Json j;
  j["version"] = checkpoint.version;
  Json config = Json::object();
  for (const auto& [k, v] : checkpoint.config.entries()) config[k] = v;
  j["config"] = std::move(config);
  j["stage"] = to_string(checkpoint.stage);
  j["epoch"] = checkpoint.epoch;
  j["params"] = params_to_json(checkpoint.params);
  j["optimizer"] = {{"step", checkpoint.optimizer.step},
                    {"first_moment", params_to_json(checkpoint.optimizer.first_moment)},
                    {"second_moment", params_to_json(checkpoint.optimizer.second_moment)}};
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_text(const std::string& text) {
  try {
    const Json j = Json::parse(text);
    Checkpoint c;
    c.version = j.at("version").get<int>();
    if (c.version != kCheckpointVersion)
      throw ParseError("checkpoint: unsupported version " + std::to_string(c.version), 0);
    for (const auto& [k, v] : j.at("config").items()) c.config.set(k, v.get<std::string>());
    c.stage = parse_stage(j.at("stage").get<std::string>());
    c.epoch = j.at("epoch").get<int>();
    c.params = params_from_json(j.at("params"));
    const auto& opt = j.at("optimizer");
    c.optimizer.step = opt.at("step").get<std::int64_t>();
    c.optimizer.first_moment = params_from_json(opt.at("first_moment"));
    c.optimizer.second_moment = params_from_json(opt.at("second_moment"));
    c.params.validate();
    return c;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("checkpoint: ") + ex.what(), 0);
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string text = checkpoint_to_text(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << text;
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_text(ss.str());
}

}  // namespace vrexmix
