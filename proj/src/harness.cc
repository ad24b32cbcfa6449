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

#include "pessim/harness.h"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>

#include "pessim/rng.h"
#include "pessim/serialize.h"

namespace pessim {
namespace {

// Runs task(i) for i in [0, count) on up to `threads` workers and rethrows
// the lowest-index failure.
void ParallelFor(int count, int threads,
                 const std::function<void(int)>& task) {
  threads = std::clamp(threads, 1, std::max(count, 1));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> workers;
  for (int t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void ScenarioConfig::Validate() const {
  if (arms.empty()) throw std::invalid_argument("scenario: need at least one arm");
  if (num_seeds < 1) throw std::invalid_argument("scenario: num_seeds >= 1");
  if (world.num_prompts < 2 || world.completions_per_prompt < 2 ||
      world.feature_dim < 1) {
    throw std::invalid_argument("scenario: invalid world dimensions");
  }
  if (data.train_pairs < 1 || data.test_pairs < 1) {
    throw std::invalid_argument("scenario: pair counts must be >= 1");
  }
  if (!(data.corruption_rate >= 0.0 && data.corruption_rate <= 1.0)) {
    throw std::invalid_argument("scenario: corruption_rate in [0, 1]");
  }
  if (ensemble.members < 1 || !(ensemble.bootstrap_fraction > 0.0) ||
      ensemble.bootstrap_fraction > 1.0 || !(ensemble.lr > 0.0) ||
      ensemble.epochs < 1) {
    throw std::invalid_argument("scenario: invalid ensemble parameters");
  }
  if (!(reference.lr > 0.0) || reference.epochs < 1) {
    throw std::invalid_argument("scenario: invalid reference parameters");
  }
  if (ambiguous_k < 1 || ambiguous_k > world.num_prompts) {
    throw std::invalid_argument("scenario: ambiguous_k in [1, num_prompts]");
  }
  for (double t : temperature_grid) {
    if (!(t > 0.0)) throw std::invalid_argument("scenario: temperatures > 0");
  }
  if (overopt_multiplier < 1) {
    throw std::invalid_argument("scenario: overopt_multiplier >= 1");
  }
  for (const ArmConfig& arm : arms) {
    if (arm.name.empty()) throw std::invalid_argument("scenario: unnamed arm");
    arm.loss.Validate();
    arm.train.Validate(static_cast<size_t>(data.train_pairs));
  }
}

StageSeeds StageSeeds::FromBase(uint64_t base) {
  StageSeeds s;
  s.base = base;
  s.world = DeriveSeed(base, "world");
  s.train_pairs = DeriveSeed(base, "train_pairs");
  s.test_pairs = DeriveSeed(base, "test_pairs");
  s.corrupt = DeriveSeed(base, "corrupt");
  s.ensemble = DeriveSeed(base, "ensemble");
  s.train = DeriveSeed(base, "train");
  return s;
}

StageSeeds SeedsForIndex(uint64_t scenario_seed, int seed_index) {
  return StageSeeds::FromBase(
      DeriveSeed(scenario_seed, static_cast<uint64_t>(seed_index)));
}

SeedArtifacts PrepareSeed(const ScenarioConfig& config, int seed_index,
                          int threads) {
  SeedArtifacts a;
  a.seeds = SeedsForIndex(config.seed, seed_index);
  a.world = BuildWorld(a.seeds.world, config.world.num_prompts,
                       config.world.completions_per_prompt,
                       config.world.feature_dim);
  a.train_clean =
      SamplePreferences(a.world, config.data.train_pairs, a.seeds.train_pairs);
  const PreferenceDataset corrupted =
      CorruptLabels(a.train_clean, config.data.corruption_rate, a.seeds.corrupt);
  EnsembleOptions ensemble_options = config.ensemble;
  ensemble_options.threads = threads;
  a.ensemble =
      TrainEnsemble(a.world, corrupted, ensemble_options, a.seeds.ensemble);
  a.train = AttachUncertainties(corrupted, a.ensemble, a.world);
  a.test = AttachUncertainties(
      SamplePreferences(a.world, config.data.test_pairs, a.seeds.test_pairs),
      a.ensemble, a.world);
  a.reference = FitReferenceMle(a.world, a.train, config.reference.lr,
                                config.reference.epochs);
  a.ambiguous_prompts = SelectAmbiguous(a.test, config.ambiguous_k);
  return a;
}

TrainConfig BoundTrainConfig(const TrainConfig& train, const StageSeeds& seeds) {
  TrainConfig bound = train;
  bound.shuffle_seed = DeriveSeed(seeds.train, train.shuffle_seed);
  return bound;
}

ArmResult RunArm(const ScenarioConfig& config, const SeedArtifacts& artifacts,
                 int arm_index, int seed_index) {
  const ArmConfig& arm = config.arms.at(arm_index);
  const CompletionTable rewards = TrueRewardTable(artifacts.world);
  const TrainConfig train = BoundTrainConfig(arm.train, artifacts.seeds);

  const TrainResult nominal =
      Train(artifacts.reference, artifacts.reference, artifacts.world,
            artifacts.train, arm.loss, train);

  TrainConfig long_train = train;
  long_train.epochs = train.epochs * config.overopt_multiplier;
  const TrainResult extended =
      Train(artifacts.reference, artifacts.reference, artifacts.world,
            artifacts.train, arm.loss, long_train);

  ArmResult result;
  result.arm = arm.name;
  result.arm_index = arm_index;
  result.seed_index = seed_index;
  result.final_reward = ExpectedValue(nominal.policy, rewards);
  result.ambiguous_reward =
      ExpectedValue(nominal.policy, rewards, artifacts.ambiguous_prompts);
  result.kl = MeanKlTo(nominal.policy, artifacts.reference);
  double peak = ExpectedValue(artifacts.reference, rewards);
  for (const TrainRecord& r : extended.log.records) {
    peak = std::max(peak, r.true_reward);
  }
  result.peak_reward = peak;
  result.peak_drop = peak - ExpectedValue(extended.policy, rewards);
  result.temperature_rewards = TemperatureSweep(
      nominal.policy, artifacts.world, config.temperature_grid);
  return result;
}

ScenarioResult RunScenario(const ScenarioConfig& config, int threads) {
  config.Validate();
  if (threads <= 0) threads = DefaultThreads();
  ScenarioResult result;
  result.seeds.resize(config.num_seeds);
  ParallelFor(config.num_seeds, threads, [&](int s) {
    result.seeds[s] = PrepareSeed(config, s);
  });

  const int num_arms = static_cast<int>(config.arms.size());
  result.arms.resize(static_cast<size_t>(num_arms) * config.num_seeds);
  ParallelFor(num_arms * config.num_seeds, threads, [&](int task) {
    const int arm = task / config.num_seeds;
    const int seed = task % config.num_seeds;
    result.arms[task] = RunArm(config, result.seeds[seed], arm, seed);
  });

  for (int s = 0; s < config.num_seeds; ++s) {
    const SeedArtifacts& a = result.seeds[s];
    const CompletionTable rewards = TrueRewardTable(a.world);
    ArmResult ref;
    ref.arm = "reference";
    ref.arm_index = -1;
    ref.seed_index = s;
    ref.final_reward = ExpectedValue(a.reference, rewards);
    ref.ambiguous_reward =
        ExpectedValue(a.reference, rewards, a.ambiguous_prompts);
    ref.peak_reward = ref.final_reward;
    ref.temperature_rewards =
        TemperatureSweep(a.reference, a.world, config.temperature_grid);
    result.references.push_back(ref);
  }
  return result;
}

std::vector<int> SelectAmbiguous(const PreferenceDataset& dataset, int k) {
  std::map<int, double> best;
  for (const PreferencePair& pair : dataset.pairs) {
    const double sum = pair.u_chosen + pair.u_rejected;
    auto [it, inserted] = best.emplace(pair.prompt_id, sum);
    if (!inserted) it->second = std::max(it->second, sum);
  }
  if (k < 0 || static_cast<size_t>(k) > best.size()) {
    throw std::invalid_argument("SelectAmbiguous: k exceeds distinct prompts");
  }
  std::vector<std::pair<int, double>> ranked(best.begin(), best.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  std::vector<int> out;
  for (int i = 0; i < k; ++i) out.push_back(ranked[i].first);
  return out;
}

std::vector<double> TemperatureSweep(const SoftmaxPolicy& policy,
                                     const World& world,
                                     std::span<const double> temperatures) {
  const CompletionTable rewards = TrueRewardTable(world);
  std::vector<double> out;
  out.reserve(temperatures.size());
  for (double t : temperatures) {
    if (!(t > 0.0)) {
      throw std::invalid_argument("TemperatureSweep: temperature must be > 0");
    }
    double total = 0.0;
    for (int p = 0; p < policy.num_prompts(); ++p) {
      const std::vector<double> probs = TemperedDistribution(policy, p, t);
      for (size_t c = 0; c < probs.size(); ++c) {
        total += probs[c] * rewards.at(p, static_cast<int>(c));
      }
    }
    out.push_back(total / policy.num_prompts());
  }
  return out;
}

std::string ArmsCsv(const ScenarioResult& result) {
  std::string out = "arm,seed,final_reward,ambiguous_reward,peak_drop,kl\n";
  auto row = [&](const ArmResult& r) {
    out += r.arm + "," + std::to_string(r.seed_index) + "," +
           FormatReal(r.final_reward) + "," + FormatReal(r.ambiguous_reward) +
           "," + FormatReal(r.peak_drop) + "," + FormatReal(r.kl) + "\n";
  };
  for (const ArmResult& r : result.references) row(r);
  for (const ArmResult& r : result.arms) row(r);
  return out;
}

std::string TempsCsv(const ScenarioResult& result,
                     std::span<const double> temperatures) {
  std::string out = "arm,seed,temperature,reward\n";
  auto rows = [&](const ArmResult& r) {
    for (size_t i = 0; i < temperatures.size(); ++i) {
      out += r.arm + "," + std::to_string(r.seed_index) + "," +
             FormatReal(temperatures[i]) + "," +
             FormatReal(r.temperature_rewards.at(i)) + "\n";
    }
  };
  for (const ArmResult& r : result.references) rows(r);
  for (const ArmResult& r : result.arms) rows(r);
  return out;
}

int DefaultThreads() {
  if (const char* env = std::getenv("PESSIM_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace pessim
