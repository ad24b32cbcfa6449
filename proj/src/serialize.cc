// Copyright 2026 The Pessim Authors.
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

#include "pessim/serialize.h"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pessim {
namespace {

template <typename T>
T Field(const Json& doc, const char* key) {
  if (!doc.contains(key)) {
    throw std::invalid_argument(std::string("missing field: ") + key);
  }
  return doc.at(key).get<T>();
}

}  // namespace

std::string FormatReal(double value) {
  char buf[64];
  auto [end, ec] =
      std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  if (ec != std::errc()) throw std::runtime_error("FormatReal failed");
  return std::string(buf, end);
}

Json WorldToJson(const World& world) {
  Json doc;
  doc["num_prompts"] = world.num_prompts;
  doc["completions_per_prompt"] = world.completions_per_prompt;
  doc["feature_dim"] = world.feature_dim;
  doc["seed"] = world.seed;
  doc["features"] = world.features;
  doc["true_weights"] = world.true_weights;
  return doc;
}

World WorldFromJson(const Json& doc) {
  World world;
  world.num_prompts = Field<int>(doc, "num_prompts");
  world.completions_per_prompt = Field<int>(doc, "completions_per_prompt");
  world.feature_dim = Field<int>(doc, "feature_dim");
  world.seed = Field<uint64_t>(doc, "seed");
  world.features = Field<std::vector<double>>(doc, "features");
  world.true_weights = Field<std::vector<double>>(doc, "true_weights");
  const size_t expected = static_cast<size_t>(world.num_prompts) *
                          world.completions_per_prompt * world.feature_dim;
  if (world.num_prompts < 1 || world.completions_per_prompt < 1 ||
      world.feature_dim < 1 || world.features.size() != expected ||
      world.true_weights.size() != static_cast<size_t>(world.feature_dim)) {
    throw std::invalid_argument("world document has inconsistent dimensions");
  }
  return world;
}

std::string DatasetToJsonl(const PreferenceDataset& dataset) {
  std::string out;
  for (const PreferencePair& pair : dataset.pairs) {
    Json rec;
    rec["prompt_id"] = pair.prompt_id;
    rec["chosen_id"] = pair.chosen_id;
    rec["rejected_id"] = pair.rejected_id;
    rec["score_chosen"] = pair.score_chosen;
    rec["score_rejected"] = pair.score_rejected;
    rec["u_chosen"] = pair.u_chosen;
    rec["u_rejected"] = pair.u_rejected;
    rec["corrupted"] = pair.corrupted;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

PreferenceDataset DatasetFromJsonl(std::string_view text) {
  PreferenceDataset dataset;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const Json rec = Json::parse(line);
      PreferencePair pair;
      pair.prompt_id = Field<int>(rec, "prompt_id");
      pair.chosen_id = Field<int>(rec, "chosen_id");
      pair.rejected_id = Field<int>(rec, "rejected_id");
      pair.score_chosen = Field<double>(rec, "score_chosen");
      pair.score_rejected = Field<double>(rec, "score_rejected");
      pair.u_chosen = Field<double>(rec, "u_chosen");
      pair.u_rejected = Field<double>(rec, "u_rejected");
      pair.corrupted = Field<bool>(rec, "corrupted");
      if (pair.chosen_id == pair.rejected_id || pair.u_chosen < 0.0 ||
          pair.u_rejected < 0.0) {
        throw std::invalid_argument("pair invariant violated");
      }
      dataset.pairs.push_back(pair);
    } catch (const std::exception& e) {
      throw std::invalid_argument("dataset line " + std::to_string(line_no) +
                                  ": " + e.what());
    }
  }
  return dataset;
}

Json PolicyToJson(const SoftmaxPolicy& policy) {
  Json doc;
  doc["num_prompts"] = policy.num_prompts();
  doc["completions_per_prompt"] = policy.completions_per_prompt();
  doc["logits"] = policy.logits().values;
  return doc;
}

SoftmaxPolicy PolicyFromJson(const Json& doc) {
  CompletionTable logits;
  logits.num_prompts = Field<int>(doc, "num_prompts");
  logits.completions_per_prompt = Field<int>(doc, "completions_per_prompt");
  logits.values = Field<std::vector<double>>(doc, "logits");
  return SoftmaxPolicy(std::move(logits));
}

Json EnsembleToJson(const RewardEnsemble& ensemble) {
  Json doc;
  doc["members"] = ensemble.members.size();
  doc["bootstrap_fraction"] = ensemble.bootstrap_fraction;
  doc["seed"] = ensemble.seed;
  Json weights = Json::array();
  for (const auto& m : ensemble.members) weights.push_back(m.weights);
  doc["weights"] = std::move(weights);
  return doc;
}

RewardEnsemble EnsembleFromJson(const Json& doc) {
  RewardEnsemble ensemble;
  ensemble.bootstrap_fraction = Field<double>(doc, "bootstrap_fraction");
  ensemble.seed = Field<uint64_t>(doc, "seed");
  const auto weights = Field<std::vector<std::vector<double>>>(doc, "weights");
  if (weights.size() != Field<size_t>(doc, "members") || weights.empty()) {
    throw std::invalid_argument("ensemble member count mismatch");
  }
  for (const auto& w : weights) ensemble.members.push_back({w});
  return ensemble;
}

std::string DumpJson(const Json& doc) { return doc.dump(1) + "\n"; }

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace pessim
