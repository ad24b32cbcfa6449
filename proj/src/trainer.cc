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

#include "pessim/trainer.h"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "pessim/rng.h"
#include "pessim/serialize.h"

namespace pessim {

std::string_view ToString(LrSchedule schedule) {
  return schedule == LrSchedule::kConstant ? "constant" : "linear_decay";
}

LrSchedule ParseLrSchedule(std::string_view text) {
  if (text == "constant") return LrSchedule::kConstant;
  if (text == "linear_decay") return LrSchedule::kLinearDecay;
  throw std::invalid_argument("unknown schedule: " + std::string(text));
}

void TrainConfig::Validate(size_t dataset_size) const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("train: lr must be finite and >= 0");
  }
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1 || static_cast<size_t>(batch_size) > dataset_size) {
    throw std::invalid_argument(
        "train: batch_size must be in [1, dataset size]");
  }
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw std::invalid_argument("train: warmup_fraction must be in [0, 1)");
  }
  if (eval_every < 1) throw std::invalid_argument("train: eval_every >= 1");
}

double LearningRateAt(const TrainConfig& config, int step, int total_steps) {
  const int warmup = static_cast<int>(
      std::ceil(config.warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) {
    return config.lr * static_cast<double>(step + 1) / warmup;
  }
  if (config.schedule == LrSchedule::kConstant) return config.lr;
  const int remaining = total_steps - warmup;
  return config.lr * static_cast<double>(total_steps - step) / remaining;
}

TrainResult Train(const SoftmaxPolicy& policy, const SoftmaxPolicy& reference,
                  const World& world, const PreferenceDataset& dataset,
                  const LossConfig& loss_config,
                  const TrainConfig& train_config) {
  if (dataset.pairs.empty()) throw std::invalid_argument("Train: empty dataset");
  loss_config.Validate();
  train_config.Validate(dataset.pairs.size());
  if (!policy.SameShape(reference) ||
      policy.num_prompts() != world.num_prompts ||
      policy.completions_per_prompt() != world.completions_per_prompt) {
    throw std::invalid_argument("Train: policy/reference/world shape mismatch");
  }

  const CompletionTable true_rewards = TrueRewardTable(world);
  const uint64_t seed = train_config.shuffle_seed;
  const size_t n = dataset.pairs.size();
  const int batches_per_epoch =
      static_cast<int>(n / static_cast<size_t>(train_config.batch_size));
  const int total_steps = batches_per_epoch * train_config.epochs;

  TrainResult result;
  result.policy = policy;
  LossConfig config = loss_config;
  if (config.scheme == PenaltyScheme::kPredictiveEntropy &&
      !config.entropy_baseline) {
    config.entropy_baseline =
        EntropyBaseline(policy, dataset, config.entropy_samples,
                        DeriveSeed(seed, "entropy_baseline"));
  }
  result.entropy_baseline = config.entropy_baseline;

  ScalingState scaling;
  if (config.scheme != PenaltyScheme::kNone) {
    scaling = InitialScaling(policy, reference, dataset, config,
                             DeriveSeed(seed, "initial_scaling"));
  }

  std::vector<size_t> order(n);
  std::vector<PreferencePair> batch(train_config.batch_size);
  int step = 0;
  for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(DeriveSeed(seed, static_cast<uint64_t>(epoch)));
    for (size_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[rng.UniformInt(i + 1)]);
    }
    for (int b = 0; b < batches_per_epoch; ++b, ++step) {
      for (int k = 0; k < train_config.batch_size; ++k) {
        batch[k] = dataset.pairs[order[static_cast<size_t>(b) *
                                           train_config.batch_size + k]];
      }
      const LossStep loss_step =
          LossAndGrad(result.policy, reference, batch, config, scaling,
                      DeriveSeed(DeriveSeed(seed, "margins"),
                                 static_cast<uint64_t>(step)));
      const LossReport& report = loss_step.report;
      if (!std::isfinite(report.loss) || !report.gradient.AllFinite()) {
        throw std::runtime_error("non-finite loss at step " +
                                 std::to_string(step + 1) + " (scheme " +
                                 std::string(ToString(config.scheme)) +
                                 ", loss " + FormatReal(report.loss) + ")");
      }
      scaling = loss_step.scaling;
      const double lr = LearningRateAt(train_config, step, total_steps);
      if (lr != 0.0) report.gradient.ApplyTo(result.policy, lr);

      const int done = step + 1;
      if (done % train_config.eval_every == 0 || done == total_steps) {
        TrainRecord record;
        record.step = done;
        record.loss = report.loss;
        record.mean_rho = report.mean_rho;
        record.mean_margin = report.mean_margin;
        record.true_reward = ExpectedValue(result.policy, true_rewards);
        record.kl = MeanKlTo(result.policy, reference);
        result.log.records.push_back(record);
      }
    }
  }
  return result;
}

std::string TrainLogCsv(const TrainLog& log) {
  std::string out = "step,loss,mean_rho,mean_margin,true_reward,kl\n";
  for (const TrainRecord& r : log.records) {
    out += std::to_string(r.step) + "," + FormatReal(r.loss) + "," +
           FormatReal(r.mean_rho) + "," + FormatReal(r.mean_margin) + "," +
           FormatReal(r.true_reward) + "," + FormatReal(r.kl) + "\n";
  }
  return out;
}

}  // namespace pessim
