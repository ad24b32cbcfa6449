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

#ifndef PESSIM_HARNESS_H_
#define PESSIM_HARNESS_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pessim/env.h"
#include "pessim/losses.h"
#include "pessim/policy.h"
#include "pessim/reward_ensemble.h"
#include "pessim/trainer.h"

namespace pessim {

struct WorldParams {
  int num_prompts = 20;
  int completions_per_prompt = 8;
  int feature_dim = 16;
  friend bool operator==(const WorldParams&, const WorldParams&) = default;
};

struct DataParams {
  int train_pairs = 4000;
  int test_pairs = 2000;
  double corruption_rate = 0.3;
  friend bool operator==(const DataParams&, const DataParams&) = default;
};

struct ReferenceParams {
  double lr = 0.5;
  int epochs = 200;
  friend bool operator==(const ReferenceParams&,
                         const ReferenceParams&) = default;
};

struct ArmConfig {
  std::string name;
  LossConfig loss;
  TrainConfig train;
  friend bool operator==(const ArmConfig&, const ArmConfig&) = default;
};

struct ScenarioConfig {
  uint64_t seed = 0;
  WorldParams world;
  DataParams data;
  EnsembleOptions ensemble;
  ReferenceParams reference;
  std::vector<ArmConfig> arms;
  int num_seeds = 10;
  int ambiguous_k = 2;
  std::vector<double> temperature_grid = {0.25, 0.5, 1.0, 2.0, 4.0};
  // The overoptimization run trains for this many times the arm's epochs.
  int overopt_multiplier = 5;

  void Validate() const;
};

// Seeds of the per-seed pipeline stages. `base` is DeriveSeed(scenario
// seed, seed index); the stand-alone CLI stages take `base` via --seed.
struct StageSeeds {
  uint64_t base = 0;
  uint64_t world = 0;
  uint64_t train_pairs = 0;
  uint64_t test_pairs = 0;
  uint64_t corrupt = 0;
  uint64_t ensemble = 0;
  uint64_t train = 0;

  static StageSeeds FromBase(uint64_t base);
};
StageSeeds SeedsForIndex(uint64_t scenario_seed, int seed_index);

// Everything an arm needs that does not depend on the arm.
struct SeedArtifacts {
  StageSeeds seeds;
  World world;
  PreferenceDataset train_clean;
  PreferenceDataset train;  // corrupted, with uncertainties
  PreferenceDataset test;   // clean, with uncertainties
  RewardEnsemble ensemble;
  SoftmaxPolicy reference;
  std::vector<int> ambiguous_prompts;
};

struct ArmResult {
  std::string arm;
  int arm_index = 0;
  int seed_index = 0;
  double final_reward = 0.0;
  double ambiguous_reward = 0.0;
  double peak_reward = 0.0;
  double peak_drop = 0.0;
  double kl = 0.0;
  std::vector<double> temperature_rewards;

  friend bool operator==(const ArmResult&, const ArmResult&) = default;
};

struct ScenarioResult {
  // Ordered by (arm index, seed index).
  std::vector<ArmResult> arms;
  // The untrained reference of each seed, in the same record shape.
  std::vector<ArmResult> references;
  std::vector<SeedArtifacts> seeds;
};

SeedArtifacts PrepareSeed(const ScenarioConfig& config, int seed_index,
                          int threads = 1);

// Train config of an arm with its shuffle seed bound to this seed's stream.
TrainConfig BoundTrainConfig(const TrainConfig& train, const StageSeeds& seeds);

ArmResult RunArm(const ScenarioConfig& config, const SeedArtifacts& artifacts,
                 int arm_index, int seed_index);

// Runs every (arm, seed); `threads` <= 0 means hardware concurrency.
ScenarioResult RunScenario(const ScenarioConfig& config, int threads = 0);

// Prompts ranked by their largest u_chosen + u_rejected over pairs, top k,
// ties broken by ascending prompt id. Throws if k exceeds the number of
// distinct prompts.
std::vector<int> SelectAmbiguous(const PreferenceDataset& dataset, int k);

// Exact E_x E_{y ~ softmax(logits / T)} [r*(x, y)] for each temperature.
std::vector<double> TemperatureSweep(const SoftmaxPolicy& policy,
                                     const World& world,
                                     std::span<const double> temperatures);

// arm,seed,final_reward,ambiguous_reward,peak_drop,kl
std::string ArmsCsv(const ScenarioResult& result);
// arm,seed,temperature,reward
std::string TempsCsv(const ScenarioResult& result,
                     std::span<const double> temperatures);

// Threads from PESSIM_THREADS, else hardware concurrency.
int DefaultThreads();

}  // namespace pessim

#endif  // PESSIM_HARNESS_H_
