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

#ifndef PESSIM_ENV_H_
#define PESSIM_ENV_H_

#include <cstdint>
#include <span>
#include <vector>

namespace pessim {

class RewardEnsemble;

// A dense (prompt, completion) -> value table, prompt-major.
struct CompletionTable {
  int num_prompts = 0;
  int completions_per_prompt = 0;
  std::vector<double> values;

  CompletionTable() = default;
  CompletionTable(int prompts, int completions, double fill = 0.0)
      : num_prompts(prompts),
        completions_per_prompt(completions),
        values(static_cast<size_t>(prompts) * completions, fill) {}

  double& at(int prompt, int completion) {
    return values[static_cast<size_t>(prompt) * completions_per_prompt +
                  completion];
  }
  double at(int prompt, int completion) const {
    return values[static_cast<size_t>(prompt) * completions_per_prompt +
                  completion];
  }
  std::span<const double> row(int prompt) const {
    return std::span<const double>(values).subspan(
        static_cast<size_t>(prompt) * completions_per_prompt,
        completions_per_prompt);
  }

  friend bool operator==(const CompletionTable&,
                         const CompletionTable&) = default;
};

// Synthetic contextual-bandit world. Every completion of every prompt has a
// unit-norm feature vector; the ground-truth reward is linear in features.
struct World {
  int num_prompts = 0;
  int completions_per_prompt = 0;
  int feature_dim = 0;
  // Row-major, prompt-major: entry ((p * C + c) * D + k).
  std::vector<double> features;
  std::vector<double> true_weights;
  uint64_t seed = 0;

  std::span<const double> Feature(int prompt, int completion) const;
  void CheckIds(int prompt, int completion) const;

  friend bool operator==(const World&, const World&) = default;
};

struct PreferencePair {
  int prompt_id = 0;
  int chosen_id = 0;
  int rejected_id = 0;
  double u_chosen = 0.0;
  double u_rejected = 0.0;
  double score_chosen = 0.0;
  double score_rejected = 0.0;
  // Evaluation bookkeeping only. Training code never reads this.
  bool corrupted = false;

  friend bool operator==(const PreferencePair&,
                         const PreferencePair&) = default;
};

struct PreferenceDataset {
  std::vector<PreferencePair> pairs;
  uint64_t world_seed = 0;
  double corruption_rate = 0.0;

  friend bool operator==(const PreferenceDataset&,
                         const PreferenceDataset&) = default;
};

// Features are spherical Gaussian draws normalized to unit length, as are
// the true weights. Requires num_prompts, completions_per_prompt >= 2 and
// feature_dim >= 1; throws std::invalid_argument otherwise.
World BuildWorld(uint64_t seed, int num_prompts, int completions_per_prompt,
                 int feature_dim);

// dot(true_weights, features[(prompt, completion)]). Throws std::out_of_range.
double TrueReward(const World& world, int prompt_id, int completion_id);

// Ground-truth rewards for every (prompt, completion).
CompletionTable TrueRewardTable(const World& world);

// Samples prompts and distinct completion pairs uniformly and labels the
// winner with Bradley-Terry probability sigmoid(r1 - r2).
PreferenceDataset SamplePreferences(const World& world, int num_pairs,
                                    uint64_t seed);

// Swaps chosen/rejected of each pair independently with probability
// flip_prob and marks swapped pairs as corrupted.
PreferenceDataset CorruptLabels(const PreferenceDataset& dataset,
                                double flip_prob, uint64_t seed);

// Fills scores with ensemble means and uncertainties with ensemble
// population standard deviations.
PreferenceDataset AttachUncertainties(const PreferenceDataset& dataset,
                                      const RewardEnsemble& ensemble,
                                      const World& world);

// Checks every pair against the world's id ranges and the pair invariants
// (distinct completions, nonnegative uncertainties). Throws
// std::invalid_argument on the first violation.
void ValidateDataset(const PreferenceDataset& dataset, const World& world);

double Sigmoid(double x);
// log(sigmoid(x)) without overflow.
double LogSigmoid(double x);

}  // namespace pessim

#endif  // PESSIM_ENV_H_
