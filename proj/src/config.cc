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

#include "pessim/config.h"

#include <set>
#include <string>

namespace pessim {
namespace {

// Rejects keys outside `allowed`, naming the offending key and section.
void CheckKeys(const Json& doc, const std::set<std::string>& allowed,
               const std::string& section) {
  if (!doc.is_object()) {
    throw ConfigError("config section '" + section + "' must be an object");
  }
  for (const auto& item : doc.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("unknown config key '" + section + "." + item.key() +
                        "'");
    }
  }
}

template <typename T>
void Read(const Json& doc, const char* key, T& out, const std::string& section) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError("bad value for '" + section + "." + key + "': " +
                      e.what());
  }
}

}  // namespace

LossConfig LossConfigFromJson(const Json& doc) {
  const std::string s = "loss";
  CheckKeys(doc,
            {"kind", "scheme", "beta", "z", "lambda_ema", "entropy_samples",
             "entropy_baseline"},
            s);
  LossConfig c;
  try {
    if (doc.contains("kind")) c.kind = ParseLossKind(doc.at("kind").get<std::string>());
    if (doc.contains("scheme")) {
      c.scheme = ParsePenaltyScheme(doc.at("scheme").get<std::string>());
    }
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  Read(doc, "beta", c.beta, s);
  Read(doc, "z", c.z, s);
  Read(doc, "lambda_ema", c.lambda_ema, s);
  Read(doc, "entropy_samples", c.entropy_samples, s);
  if (doc.contains("entropy_baseline") && !doc.at("entropy_baseline").is_null()) {
    double b = 0.0;
    Read(doc, "entropy_baseline", b, s);
    c.entropy_baseline = b;
  }
  return c;
}

Json LossConfigToJson(const LossConfig& c) {
  Json doc;
  doc["kind"] = ToString(c.kind);
  doc["scheme"] = ToString(c.scheme);
  doc["beta"] = c.beta;
  doc["z"] = c.z;
  doc["lambda_ema"] = c.lambda_ema;
  doc["entropy_samples"] = c.entropy_samples;
  doc["entropy_baseline"] =
      c.entropy_baseline ? Json(*c.entropy_baseline) : Json(nullptr);
  return doc;
}

TrainConfig TrainConfigFromJson(const Json& doc) {
  const std::string s = "train";
  CheckKeys(doc,
            {"lr", "epochs", "batch_size", "warmup_fraction", "schedule",
             "shuffle_seed", "eval_every"},
            s);
  TrainConfig c;
  Read(doc, "lr", c.lr, s);
  Read(doc, "epochs", c.epochs, s);
  Read(doc, "batch_size", c.batch_size, s);
  Read(doc, "warmup_fraction", c.warmup_fraction, s);
  if (doc.contains("schedule")) {
    try {
      c.schedule = ParseLrSchedule(doc.at("schedule").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  Read(doc, "shuffle_seed", c.shuffle_seed, s);
  Read(doc, "eval_every", c.eval_every, s);
  return c;
}

Json TrainConfigToJson(const TrainConfig& c) {
  Json doc;
  doc["lr"] = c.lr;
  doc["epochs"] = c.epochs;
  doc["batch_size"] = c.batch_size;
  doc["warmup_fraction"] = c.warmup_fraction;
  doc["schedule"] = ToString(c.schedule);
  doc["shuffle_seed"] = c.shuffle_seed;
  doc["eval_every"] = c.eval_every;
  return doc;
}

// Tuned once on the vanilla DPO arm and shared by every arm.
constexpr double kDefaultArmBeta = 0.02;
constexpr double kDefaultArmLr = 1000.0;

std::vector<ArmConfig> DefaultArms() {
  std::vector<ArmConfig> arms;
  auto add = [&](const std::string& name, PenaltyScheme scheme, double z) {
    ArmConfig arm;
    arm.name = name;
    arm.loss.scheme = scheme;
    arm.loss.z = z;
    arm.loss.beta = kDefaultArmBeta;
    arm.train.lr = kDefaultArmLr;
    arms.push_back(arm);
  };
  add("dpo", PenaltyScheme::kNone, 0.0);
  add("addition", PenaltyScheme::kAddition, 0.3);
  add("multiplication", PenaltyScheme::kMultiplication, 0.3);
  add("absolute", PenaltyScheme::kAbsolute, 0.3);
  add("probability", PenaltyScheme::kProbability, 0.3);
  add("predictive_entropy", PenaltyScheme::kPredictiveEntropy, 0.3);
  return arms;
}

ScenarioConfig ScenarioFromJson(const Json& doc) {
  CheckKeys(doc,
            {"seed", "world", "data", "ensemble", "reference", "arms",
             "num_seeds", "ambiguous_k", "temperature_grid",
             "overopt_multiplier"},
            "scenario");
  ScenarioConfig c;
  const std::string s = "scenario";
  Read(doc, "seed", c.seed, s);
  if (doc.contains("world")) {
    const Json& w = doc.at("world");
    CheckKeys(w, {"num_prompts", "completions_per_prompt", "feature_dim"},
              "world");
    Read(w, "num_prompts", c.world.num_prompts, "world");
    Read(w, "completions_per_prompt", c.world.completions_per_prompt, "world");
    Read(w, "feature_dim", c.world.feature_dim, "world");
  }
  if (doc.contains("data")) {
    const Json& d = doc.at("data");
    CheckKeys(d, {"train_pairs", "test_pairs", "corruption_rate"}, "data");
    Read(d, "train_pairs", c.data.train_pairs, "data");
    Read(d, "test_pairs", c.data.test_pairs, "data");
    Read(d, "corruption_rate", c.data.corruption_rate, "data");
  }
  if (doc.contains("ensemble")) {
    const Json& e = doc.at("ensemble");
    CheckKeys(e, {"members", "bootstrap_fraction", "lr", "epochs"},
              "ensemble");
    Read(e, "members", c.ensemble.members, "ensemble");
    Read(e, "bootstrap_fraction", c.ensemble.bootstrap_fraction, "ensemble");
    Read(e, "lr", c.ensemble.lr, "ensemble");
    Read(e, "epochs", c.ensemble.epochs, "ensemble");
  }
  if (doc.contains("reference")) {
    const Json& r = doc.at("reference");
    CheckKeys(r, {"lr", "epochs"}, "reference");
    Read(r, "lr", c.reference.lr, "reference");
    Read(r, "epochs", c.reference.epochs, "reference");
  }
  if (doc.contains("arms")) {
    const Json& arms = doc.at("arms");
    if (!arms.is_array()) throw ConfigError("'arms' must be an array");
    for (const Json& a : arms) {
      CheckKeys(a, {"name", "loss", "train"}, "arms[]");
      ArmConfig arm;
      Read(a, "name", arm.name, "arms[]");
      if (a.contains("loss")) arm.loss = LossConfigFromJson(a.at("loss"));
      if (a.contains("train")) arm.train = TrainConfigFromJson(a.at("train"));
      c.arms.push_back(std::move(arm));
    }
  } else {
    c.arms = DefaultArms();
  }
  Read(doc, "num_seeds", c.num_seeds, s);
  Read(doc, "ambiguous_k", c.ambiguous_k, s);
  Read(doc, "temperature_grid", c.temperature_grid, s);
  Read(doc, "overopt_multiplier", c.overopt_multiplier, s);
  return c;
}

Json ScenarioToJson(const ScenarioConfig& c) {
  Json doc;
  doc["seed"] = c.seed;
  doc["world"] = {{"num_prompts", c.world.num_prompts},
                  {"completions_per_prompt", c.world.completions_per_prompt},
                  {"feature_dim", c.world.feature_dim}};
  doc["data"] = {{"train_pairs", c.data.train_pairs},
                 {"test_pairs", c.data.test_pairs},
                 {"corruption_rate", c.data.corruption_rate}};
  doc["ensemble"] = {{"members", c.ensemble.members},
                     {"bootstrap_fraction", c.ensemble.bootstrap_fraction},
                     {"lr", c.ensemble.lr},
                     {"epochs", c.ensemble.epochs}};
  doc["reference"] = {{"lr", c.reference.lr}, {"epochs", c.reference.epochs}};
  Json arms = Json::array();
  for (const ArmConfig& arm : c.arms) {
    Json a;
    a["name"] = arm.name;
    a["loss"] = LossConfigToJson(arm.loss);
    a["train"] = TrainConfigToJson(arm.train);
    arms.push_back(std::move(a));
  }
  doc["arms"] = std::move(arms);
  doc["num_seeds"] = c.num_seeds;
  doc["ambiguous_k"] = c.ambiguous_k;
  doc["temperature_grid"] = c.temperature_grid;
  doc["overopt_multiplier"] = c.overopt_multiplier;
  return doc;
}

}  // namespace pessim
