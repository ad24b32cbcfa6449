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

#include "pessim/env.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "pessim/reward_ensemble.h"
#include "pessim/rng.h"

namespace pessim {
namespace {

void NormalizeInPlace(std::span<double> v) {
  double norm_sq = 0.0;
  for (double x : v) norm_sq += x * x;
  const double norm = std::sqrt(norm_sq);
  for (double& x : v) x /= norm;
}

}  // namespace

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double LogSigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

std::span<const double> World::Feature(int prompt, int completion) const {
  CheckIds(prompt, completion);
  const size_t offset =
      (static_cast<size_t>(prompt) * completions_per_prompt + completion) *
      feature_dim;
  return std::span<const double>(features).subspan(offset, feature_dim);
}

void World::CheckIds(int prompt, int completion) const {
  if (prompt < 0 || prompt >= num_prompts || completion < 0 ||
      completion >= completions_per_prompt) {
    throw std::out_of_range("world id out of range: (" +
                            std::to_string(prompt) + ", " +
                            std::to_string(completion) + ")");
  }
}

World BuildWorld(uint64_t seed, int num_prompts, int completions_per_prompt,
                 int feature_dim) {
  if (num_prompts < 2 || completions_per_prompt < 2 || feature_dim < 1) {
    throw std::invalid_argument(
        "BuildWorld: need num_prompts >= 2, completions_per_prompt >= 2, "
        "feature_dim >= 1");
  }
  World world;
  world.num_prompts = num_prompts;
  world.completions_per_prompt = completions_per_prompt;
  world.feature_dim = feature_dim;
  world.seed = seed;

  Rng rng(seed);
  const size_t rows = static_cast<size_t>(num_prompts) * completions_per_prompt;
  world.features.resize(rows * feature_dim);
  for (size_t r = 0; r < rows; ++r) {
    std::span<double> row(world.features.data() + r * feature_dim,
                          feature_dim);
    // A zero draw has probability zero but would not normalize.
    do {
      for (double& x : row) x = rng.Normal();
    } while (std::all_of(row.begin(), row.end(),
                         [](double x) { return x == 0.0; }));
    NormalizeInPlace(row);
  }
  world.true_weights.resize(feature_dim);
  for (double& x : world.true_weights) x = rng.Normal();
  NormalizeInPlace(world.true_weights);
  return world;
}

double TrueReward(const World& world, int prompt_id, int completion_id) {
  const auto phi = world.Feature(prompt_id, completion_id);
  double r = 0.0;
  for (int k = 0; k < world.feature_dim; ++k) r += world.true_weights[k] * phi[k];
  return r;
}

CompletionTable TrueRewardTable(const World& world) {
  CompletionTable table(world.num_prompts, world.completions_per_prompt);
  for (int p = 0; p < world.num_prompts; ++p) {
    for (int c = 0; c < world.completions_per_prompt; ++c) {
      table.at(p, c) = TrueReward(world, p, c);
    }
  }
  return table;
}

PreferenceDataset SamplePreferences(const World& world, int num_pairs,
                                    uint64_t seed) {
  if (num_pairs < 1) {
    throw std::invalid_argument("SamplePreferences: num_pairs must be >= 1");
  }
  PreferenceDataset dataset;
  dataset.world_seed = world.seed;
  dataset.pairs.reserve(num_pairs);
  Rng rng(seed);
  const auto completions = static_cast<uint64_t>(world.completions_per_prompt);
  for (int i = 0; i < num_pairs; ++i) {
    const int prompt = static_cast<int>(rng.UniformInt(world.num_prompts));
    const int first = static_cast<int>(rng.UniformInt(completions));
    int second = static_cast<int>(rng.UniformInt(completions - 1));
    if (second >= first) ++second;
    const double p_first = Sigmoid(TrueReward(world, prompt, first) -
                                   TrueReward(world, prompt, second));
    PreferencePair pair;
    pair.prompt_id = prompt;
    if (rng.Bernoulli(p_first)) {
      pair.chosen_id = first;
      pair.rejected_id = second;
    } else {
      pair.chosen_id = second;
      pair.rejected_id = first;
    }
    dataset.pairs.push_back(pair);
  }
  return dataset;
}

PreferenceDataset CorruptLabels(const PreferenceDataset& dataset,
                                double flip_prob, uint64_t seed) {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
    throw std::invalid_argument("CorruptLabels: flip_prob must be in [0, 1]");
  }
  PreferenceDataset out = dataset;
  out.corruption_rate = flip_prob;
  Rng rng(seed);
  for (PreferencePair& pair : out.pairs) {
    if (!rng.Bernoulli(flip_prob)) continue;
    std::swap(pair.chosen_id, pair.rejected_id);
    std::swap(pair.u_chosen, pair.u_rejected);
    std::swap(pair.score_chosen, pair.score_rejected);
    pair.corrupted = true;
  }
  return out;
}

void ValidateDataset(const PreferenceDataset& dataset, const World& world) {
  for (size_t i = 0; i < dataset.pairs.size(); ++i) {
    const PreferencePair& pair = dataset.pairs[i];
    const bool ids_ok =
        pair.prompt_id >= 0 && pair.prompt_id < world.num_prompts &&
        pair.chosen_id >= 0 && pair.chosen_id < world.completions_per_prompt &&
        pair.rejected_id >= 0 &&
        pair.rejected_id < world.completions_per_prompt;
    if (!ids_ok || pair.chosen_id == pair.rejected_id ||
        !(pair.u_chosen >= 0.0) || !(pair.u_rejected >= 0.0)) {
      throw std::invalid_argument("invalid preference pair at index " +
                                  std::to_string(i));
    }
  }
}

PreferenceDataset AttachUncertainties(const PreferenceDataset& dataset,
                                      const RewardEnsemble& ensemble,
                                      const World& world) {
  if (ensemble.members.empty()) {
    throw std::invalid_argument("AttachUncertainties: ensemble is untrained");
  }
  PreferenceDataset out = dataset;
  for (PreferencePair& pair : out.pairs) {
    const ScoreStats chosen =
        ScoreAndUncertainty(ensemble, world, pair.prompt_id, pair.chosen_id);
    const ScoreStats rejected =
        ScoreAndUncertainty(ensemble, world, pair.prompt_id, pair.rejected_id);
    pair.score_chosen = chosen.mean;
    pair.u_chosen = chosen.std;
    pair.score_rejected = rejected.mean;
    pair.u_rejected = rejected.std;
  }
  return out;
}

}  // namespace pessim
