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

#include "pessim/reward_ensemble.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <exception>
#include <string>
#include <thread>

#include "pessim/rng.h"

namespace pessim {

double LinearRewardModel::Score(const World& world, int prompt_id,
                                int completion_id) const {
  const auto phi = world.Feature(prompt_id, completion_id);
  double s = 0.0;
  for (size_t k = 0; k < phi.size(); ++k) s += weights[k] * phi[k];
  return s;
}

NllAndGrad BtNllAndGrad(const LinearRewardModel& model,
                        std::span<const PreferencePair> batch,
                        const World& world) {
  if (batch.empty()) {
    throw std::invalid_argument("BtNllAndGrad: empty batch");
  }
  NllAndGrad out;
  out.grad.assign(world.feature_dim, 0.0);
  for (const PreferencePair& pair : batch) {
    const auto phi_w = world.Feature(pair.prompt_id, pair.chosen_id);
    const auto phi_l = world.Feature(pair.prompt_id, pair.rejected_id);
    double delta = 0.0;
    for (int k = 0; k < world.feature_dim; ++k) {
      delta += model.weights[k] * (phi_w[k] - phi_l[k]);
    }
    out.nll -= LogSigmoid(delta);
    const double coeff = -Sigmoid(-delta);
    for (int k = 0; k < world.feature_dim; ++k) {
      out.grad[k] += coeff * (phi_w[k] - phi_l[k]);
    }
  }
  const double n = static_cast<double>(batch.size());
  out.nll /= n;
  for (double& g : out.grad) g /= n;
  return out;
}

LinearRewardModel TrainRewardModel(const World& world,
                                   std::span<const PreferencePair> pairs,
                                   double lr, int epochs) {
  if (pairs.empty()) {
    throw std::invalid_argument("TrainRewardModel: empty dataset");
  }
  if (!(lr > 0.0) || !std::isfinite(lr) || epochs < 1) {
    throw std::invalid_argument(
        "TrainRewardModel: need finite lr > 0, epochs >= 1");
  }
  LinearRewardModel model;
  model.weights.assign(world.feature_dim, 0.0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const NllAndGrad step = BtNllAndGrad(model, pairs, world);
    for (int k = 0; k < world.feature_dim; ++k) {
      model.weights[k] -= lr * step.grad[k];
    }
    if (!std::all_of(model.weights.begin(), model.weights.end(),
                     [](double w) { return std::isfinite(w); })) {
      throw std::runtime_error("reward model training diverged at epoch " +
                               std::to_string(epoch));
    }
  }
  return model;
}

RewardEnsemble TrainEnsemble(const World& world,
                             const PreferenceDataset& dataset,
                             const EnsembleOptions& options, uint64_t seed) {
  if (dataset.pairs.empty()) {
    throw std::invalid_argument("TrainEnsemble: empty dataset");
  }
  if (options.members < 1 || !(options.bootstrap_fraction > 0.0) ||
      options.bootstrap_fraction > 1.0 || !(options.lr > 0.0)) {
    throw std::invalid_argument(
        "TrainEnsemble: need members >= 1, fraction in (0, 1], lr > 0");
  }
  const size_t n = dataset.pairs.size();
  const size_t subset_size = std::max<size_t>(
      1, static_cast<size_t>(std::llround(options.bootstrap_fraction *
                                          static_cast<double>(n))));

  RewardEnsemble ensemble;
  ensemble.bootstrap_fraction = options.bootstrap_fraction;
  ensemble.seed = seed;
  ensemble.members.resize(options.members);

  auto train_member = [&](int m) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(DeriveSeed(seed, static_cast<uint64_t>(m)));
    for (size_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[rng.UniformInt(i + 1)]);
    }
    order.resize(subset_size);
    std::sort(order.begin(), order.end());
    std::vector<PreferencePair> subset;
    subset.reserve(subset_size);
    for (size_t idx : order) subset.push_back(dataset.pairs[idx]);
    ensemble.members[m] =
        TrainRewardModel(world, subset, options.lr, options.epochs);
  };

  int threads = options.threads > 0
                    ? options.threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, options.members);
  if (threads == 1) {
    for (int m = 0; m < options.members; ++m) train_member(m);
    return ensemble;
  }
  // Members are written into their own slot, so finish order is irrelevant.
  std::vector<std::exception_ptr> errors(options.members);
  std::vector<std::thread> workers;
  for (int t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      for (int m = t; m < options.members; m += threads) {
        try {
          train_member(m);
        } catch (...) {
          errors[m] = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return ensemble;
}

ScoreStats ScoreAndUncertainty(const RewardEnsemble& ensemble,
                               const World& world, int prompt_id,
                               int completion_id) {
  world.CheckIds(prompt_id, completion_id);
  if (ensemble.members.empty()) {
    throw std::invalid_argument("ScoreAndUncertainty: empty ensemble");
  }
  const double m = static_cast<double>(ensemble.members.size());
  std::vector<double> scores;
  scores.reserve(ensemble.members.size());
  for (const auto& member : ensemble.members) {
    scores.push_back(member.Score(world, prompt_id, completion_id));
  }
  ScoreStats stats;
  stats.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / m;
  double var = 0.0;
  for (double s : scores) var += (s - stats.mean) * (s - stats.mean);
  stats.std = std::sqrt(var / m);
  return stats;
}

double EnsembleAccuracy(const RewardEnsemble& ensemble, const World& world,
                        const PreferenceDataset& test_pairs) {
  if (test_pairs.pairs.empty()) {
    throw std::invalid_argument("EnsembleAccuracy: empty test set");
  }
  double correct = 0.0;
  for (const PreferencePair& pair : test_pairs.pairs) {
    const double chosen =
        ScoreAndUncertainty(ensemble, world, pair.prompt_id, pair.chosen_id)
            .mean;
    const double rejected =
        ScoreAndUncertainty(ensemble, world, pair.prompt_id, pair.rejected_id)
            .mean;
    if (chosen > rejected) {
      correct += 1.0;
    } else if (chosen == rejected) {
      correct += 0.5;
    }
  }
  return correct / static_cast<double>(test_pairs.pairs.size());
}

double BayesOptimalAccuracy(const World& world) {
  const CompletionTable rewards = TrueRewardTable(world);
  double total = 0.0;
  int count = 0;
  for (int p = 0; p < world.num_prompts; ++p) {
    for (int a = 0; a < world.completions_per_prompt; ++a) {
      for (int b = a + 1; b < world.completions_per_prompt; ++b) {
        total += Sigmoid(std::abs(rewards.at(p, a) - rewards.at(p, b)));
        ++count;
      }
    }
  }
  return total / count;
}

double CosineSimilarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace pessim
