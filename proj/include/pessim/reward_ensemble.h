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

#ifndef PESSIM_REWARD_ENSEMBLE_H_
#define PESSIM_REWARD_ENSEMBLE_H_

#include <cstdint>
#include <span>
#include <vector>

#include "pessim/env.h"

namespace pessim {

struct LinearRewardModel {
  std::vector<double> weights;

  double Score(const World& world, int prompt_id, int completion_id) const;

  friend bool operator==(const LinearRewardModel&,
                         const LinearRewardModel&) = default;
};

struct RewardEnsemble {
  std::vector<LinearRewardModel> members;
  double bootstrap_fraction = 1.0;
  uint64_t seed = 0;

  friend bool operator==(const RewardEnsemble&,
                         const RewardEnsemble&) = default;
};

struct NllAndGrad {
  double nll = 0.0;
  std::vector<double> grad;
};

// Mean Bradley-Terry negative log-likelihood -log sigmoid(r_w - r_l) over
// the batch, and its gradient in the weights.
NllAndGrad BtNllAndGrad(const LinearRewardModel& model,
                        std::span<const PreferencePair> batch,
                        const World& world);

// Full-batch gradient descent from zero weights. Throws std::runtime_error
// if the weights stop being finite.
LinearRewardModel TrainRewardModel(const World& world,
                                   std::span<const PreferencePair> pairs,
                                   double lr, int epochs);

struct EnsembleOptions {
  int members = 5;
  double bootstrap_fraction = 0.9;
  double lr = 2.0;
  int epochs = 300;
  // Worker threads for member training; 0 means hardware concurrency.
  int threads = 1;
};

// Each member trains on its own shuffled subset of round(fraction * n)
// pairs, drawn with sub-seed DeriveSeed(seed, member index). The subset is
// kept in dataset order so fraction 1 reproduces TrainRewardModel exactly.
// The result depends only on the member index, never on thread timing.
RewardEnsemble TrainEnsemble(const World& world,
                             const PreferenceDataset& dataset,
                             const EnsembleOptions& options, uint64_t seed);

struct ScoreStats {
  double mean = 0.0;
  double std = 0.0;
};

// Mean and population standard deviation of the member scores.
ScoreStats ScoreAndUncertainty(const RewardEnsemble& ensemble,
                               const World& world, int prompt_id,
                               int completion_id);

// Fraction of pairs whose chosen completion has the higher ensemble mean;
// ties count one half.
double EnsembleAccuracy(const RewardEnsemble& ensemble, const World& world,
                        const PreferenceDataset& test_pairs);

// Expected accuracy of predicting the better completion by sign of the true
// reward gap, under Bradley-Terry labels and uniform pair sampling.
double BayesOptimalAccuracy(const World& world);

double CosineSimilarity(std::span<const double> a, std::span<const double> b);

}  // namespace pessim

#endif  // PESSIM_REWARD_ENSEMBLE_H_
