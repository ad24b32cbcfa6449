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

#ifndef PESSIM_TRAINER_H_
#define PESSIM_TRAINER_H_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pessim/env.h"
#include "pessim/losses.h"
#include "pessim/policy.h"

namespace pessim {

enum class LrSchedule { kConstant, kLinearDecay };

std::string_view ToString(LrSchedule schedule);
LrSchedule ParseLrSchedule(std::string_view text);

struct TrainConfig {
  double lr = 1.0;
  int epochs = 10;
  int batch_size = 32;
  double warmup_fraction = 0.1;
  LrSchedule schedule = LrSchedule::kLinearDecay;
  uint64_t shuffle_seed = 0;
  int eval_every = 25;

  // lr may be zero (a no-op run); everything else must be in range.
  void Validate(size_t dataset_size) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainRecord {
  int step = 0;
  double loss = 0.0;
  double mean_rho = 0.0;
  double mean_margin = 0.0;
  double true_reward = 0.0;
  double kl = 0.0;
};

// Record `step` holds the batch loss statistics of update `step` (1-based)
// and the exact evaluation of the policy after that update.
struct TrainLog {
  std::vector<TrainRecord> records;
};

struct TrainResult {
  SoftmaxPolicy policy;
  TrainLog log;
  // Resolved predictive-entropy baseline, when the scheme uses one.
  std::optional<double> entropy_baseline;
};

// Learning rate at 0-based step t of total_steps: linear warmup over
// ceil(warmup_fraction * total_steps) steps, then constant or linear decay
// to zero.
double LearningRateAt(const TrainConfig& config, int step, int total_steps);

// Plain mini-batch gradient descent on the preference loss. Batches come
// from a per-epoch shuffle seeded by DeriveSeed(shuffle_seed, epoch); a
// trailing partial batch is dropped. Throws std::runtime_error on a
// non-finite loss or gradient.
TrainResult Train(const SoftmaxPolicy& policy, const SoftmaxPolicy& reference,
                  const World& world, const PreferenceDataset& dataset,
                  const LossConfig& loss_config,
                  const TrainConfig& train_config);

// Comma-separated log with header step,loss,mean_rho,mean_margin,true_reward,kl.
std::string TrainLogCsv(const TrainLog& log);

}  // namespace pessim

#endif  // PESSIM_TRAINER_H_
