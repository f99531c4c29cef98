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

#include "vrexmix/metrics.hpp"

#include "vrexmix/error.hpp"

#include <json.hpp>

#include <charconv>

namespace vrexmix {

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted,
                          int num_classes) {
  if (truth.size() != predicted.size())
    throw ValidationError("confusion: " + std::to_string(truth.size()) + " labels but " +
                          std::to_string(predicted.size()) + " predictions");
  if (num_classes < 1) throw ValidationError("confusion: num_classes must be positive");
  ConfusionMatrix cm;
  cm.counts.setZero(num_classes, num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes)
      throw ValidationError("confusion: true label " + std::to_string(truth[i]) +
                            " out of range at index " + std::to_string(i));
    if (predicted[i] < 0 || predicted[i] >= num_classes)
      throw ValidationError("confusion: predicted label " + std::to_string(predicted[i]) +
                            " out of range at index " + std::to_string(i));
    ++cm.counts(truth[i], predicted[i]);
  }
  return cm;
}

std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
  const int classes = cm.num_classes();
  std::vector<double> out(static_cast<std::size_t>(classes), 0.0);
  for (int c = 0; c < classes; ++c) {
    const double tp = static_cast<double>(cm.counts(c, c));
    const double predicted = static_cast<double>(cm.counts.col(c).sum());
    const double actual = static_cast<double>(cm.counts.row(c).sum());
    const double precision = predicted > 0 ? tp / predicted : 0.0;
    const double recall = actual > 0 ? tp / actual : 0.0;
    const double denom = precision + recall;
    out[static_cast<std::size_t>(c)] = denom > 0 ? 2.0 * precision * recall / denom : 0.0;
  }
  return out;
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.counts.size() == 0 || cm.total() == 0)
    throw ValidationError("macro_f1: confusion matrix is empty");
  const auto f1 = per_class_f1(cm);
  double sum = 0.0;
  for (double v : f1) sum += v;
  return sum / static_cast<double>(f1.size());
}

EvalReport summarize(std::span<const Environment> envs,
                     const std::vector<std::vector<int>>& predictions, int num_classes) {
  if (envs.empty()) throw ValidationError("evaluate: no environments");
  if (predictions.size() != envs.size())
    throw ValidationError("evaluate: prediction lists do not match environments");
  EvalReport report;
  ConfusionMatrix pooled;
  pooled.counts.setZero(num_classes, num_classes);
  double sum = 0.0;
  double weighted = 0.0;
  std::int64_t total = 0;
  for (std::size_t e = 0; e < envs.size(); ++e) {
    DomainEval d;
    d.domain_id = envs[e].domain_id;
    const auto truth = envs[e].labels();
    d.confusion = confusion(truth, predictions[e], num_classes);
    d.f1 = per_class_f1(d.confusion);
    d.macro_f1 = macro_f1(d.confusion);
    d.n = static_cast<std::int64_t>(truth.size());
    pooled.counts += d.confusion.counts;
    sum += d.macro_f1;
    weighted += d.macro_f1 * static_cast<double>(d.n);
    total += d.n;
    report.per_domain.push_back(std::move(d));
  }
  report.average_macro_f1 = sum / static_cast<double>(envs.size());
  report.weighted_macro_f1 = weighted / static_cast<double>(total);
  report.pooled_macro_f1 = macro_f1(pooled);
  return report;
}

EvalReport evaluate(const ModelParams& params, std::span<const Environment> envs) {
  std::vector<std::vector<int>> predictions;
  predictions.reserve(envs.size());
  for (const auto& env : envs) predictions.push_back(predict(params, env.features()));
  return summarize(envs, predictions, params.num_classes());
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["average_macro_f1"] = report.average_macro_f1;
  j["weighted_macro_f1"] = report.weighted_macro_f1;
  j["pooled_macro_f1"] = report.pooled_macro_f1;
  auto& domains = j["per_domain"] = nlohmann::ordered_json::array();
  for (const auto& d : report.per_domain) {
    nlohmann::ordered_json e;
    e["domain_id"] = d.domain_id;
    e["n"] = d.n;
    e["macro_f1"] = d.macro_f1;
    e["f1"] = d.f1;
    auto& rows = e["confusion"] = nlohmann::ordered_json::array();
    for (Eigen::Index t = 0; t < d.confusion.counts.rows(); ++t) {
      std::vector<std::int64_t> row;
      for (Eigen::Index p = 0; p < d.confusion.counts.cols(); ++p) row.push_back(d.confusion.counts(t, p));
      rows.push_back(row);
    }
    domains.push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    EvalReport report;
    report.average_macro_f1 = j.at("average_macro_f1").get<double>();
    report.weighted_macro_f1 = j.at("weighted_macro_f1").get<double>();
    report.pooled_macro_f1 = j.at("pooled_macro_f1").get<double>();
    for (const auto& e : j.at("per_domain")) {
      DomainEval d;
      d.domain_id = e.at("domain_id").get<int>();
      d.n = e.at("n").get<std::int64_t>();
      d.macro_f1 = e.at("macro_f1").get<double>();
      d.f1 = e.at("f1").get<std::vector<double>>();
      const auto rows = e.at("confusion").get<std::vector<std::vector<std::int64_t>>>();
      d.confusion.counts.setZero(static_cast<Eigen::Index>(rows.size()),
                                 static_cast<Eigen::Index>(rows.size()));
      for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t].size() != rows.size()) throw ParseError("report: confusion matrix is not square", 0);
        for (std::size_t p = 0; p < rows.size(); ++p)
          d.confusion.counts(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(p)) = rows[t][p];
      }
      report.per_domain.push_back(std::move(d));
    }
    return report;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("report: ") + ex.what(), 0);
  }
}

std::string report_to_csv(const EvalReport& report) {
  auto num = [](double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
  };
  std::size_t classes = 0;
  for (const auto& d : report.per_domain) classes = std::max(classes, d.f1.size());
  std::string out = "domain_id,macro_f1";
  for (std::size_t c = 0; c < classes; ++c) out += ",f1_class" + std::to_string(c);
  out += ",n\n";
  for (const auto& d : report.per_domain) {
    out += std::to_string(d.domain_id) + "," + num(d.macro_f1);
    for (std::size_t c = 0; c < classes; ++c) out += "," + num(c < d.f1.size() ? d.f1[c] : 0.0);
    out += "," + std::to_string(d.n) + "\n";
  }
  return out;
}

}  // namespace vrexmix
