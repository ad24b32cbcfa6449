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

#include "pessim/policy.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace pessim {

SoftmaxPolicy::SoftmaxPolicy(int num_prompts, int completions_per_prompt)
    : logits_(num_prompts, completions_per_prompt, 0.0) {
  if (num_prompts < 1 || completions_per_prompt < 1) {
    throw std::invalid_argument("SoftmaxPolicy: dimensions must be positive");
  }
}

SoftmaxPolicy::SoftmaxPolicy(CompletionTable logits)
    : logits_(std::move(logits)) {
  if (logits_.values.size() != static_cast<size_t>(logits_.num_prompts) *
                                   logits_.completions_per_prompt) {
    throw std::invalid_argument("SoftmaxPolicy: logit table size mismatch");
  }
  for (double x : logits_.values) {
    if (!std::isfinite(x)) {
      throw std::invalid_argument("SoftmaxPolicy: non-finite logit");
    }
  }
}

void SoftmaxPolicy::CheckIds(int prompt_id, int completion_id) const {
  if (prompt_id < 0 || prompt_id >= num_prompts() || completion_id < 0 ||
      completion_id >= completions_per_prompt()) {
    throw std::out_of_range("policy id out of range: (" +
                            std::to_string(prompt_id) + ", " +
                            std::to_string(completion_id) + ")");
  }
}

bool SoftmaxPolicy::SameShape(const SoftmaxPolicy& other) const {
  return num_prompts() == other.num_prompts() &&
         completions_per_prompt() == other.completions_per_prompt();
}

std::vector<double> LogSoftmax(std::span<const double> logits) {
  const double max = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double x : logits) sum += std::exp(x - max);
  const double log_norm = max + std::log(sum);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
  return out;
}

std::vector<double> Softmax(std::span<const double> logits) {
  std::vector<double> out = LogSoftmax(logits);
  for (double& x : out) x = std::exp(x);
  return out;
}

double SoftmaxPolicy::LogProb(int prompt_id, int completion_id) const {
  CheckIds(prompt_id, completion_id);
  return LogSoftmax(logits_.row(prompt_id))[completion_id];
}

std::vector<double> SoftmaxPolicy::LogProbs(int prompt_id) const {
  CheckIds(prompt_id, 0);
  return LogSoftmax(logits_.row(prompt_id));
}

std::vector<double> SoftmaxPolicy::Probs(int prompt_id) const {
  CheckIds(prompt_id, 0);
  return Softmax(logits_.row(prompt_id));
}

void PolicyGradient::Add(int prompt_id, double scale,
                         std::span<const double> values) {
  auto& row = rows_[prompt_id];
  if (row.empty()) row.assign(values.size(), 0.0);
  for (size_t i = 0; i < values.size(); ++i) row[i] += scale * values[i];
}

void PolicyGradient::AddInto(int prompt_id, int completion_id, double value,
                             int width) {
  auto& row = rows_[prompt_id];
  if (row.empty()) row.assign(width, 0.0);
  row[completion_id] += value;
}

void PolicyGradient::Scale(double factor) {
  for (auto& [prompt, row] : rows_) {
    for (double& x : row) x *= factor;
  }
}

void PolicyGradient::ApplyTo(SoftmaxPolicy& policy, double step) const {
  CompletionTable& logits = policy.mutable_logits();
  for (const auto& [prompt, row] : rows_) {
    for (size_t c = 0; c < row.size(); ++c) {
      logits.at(prompt, static_cast<int>(c)) -= step * row[c];
    }
  }
}

double PolicyGradient::Get(int prompt_id, int completion_id) const {
  auto it = rows_.find(prompt_id);
  if (it == rows_.end()) return 0.0;
  return it->second[completion_id];
}

double PolicyGradient::SquaredNorm() const {
  double total = 0.0;
  for (const auto& [prompt, row] : rows_) {
    for (double x : row) total += x * x;
  }
  return total;
}

bool PolicyGradient::AllFinite() const {
  for (const auto& [prompt, row] : rows_) {
    for (double x : row) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

PolicyGradient GradLogProb(const SoftmaxPolicy& policy, int prompt_id,
                           int completion_id) {
  policy.CheckIds(prompt_id, completion_id);
  std::vector<double> row = policy.Probs(prompt_id);
  for (double& p : row) p = -p;
  row[completion_id] += 1.0;
  PolicyGradient grad;
  grad.Add(prompt_id, 1.0, row);
  return grad;
}

double KlTo(const SoftmaxPolicy& policy, const SoftmaxPolicy& reference,
            int prompt_id) {
  if (!policy.SameShape(reference)) {
    throw std::invalid_argument("KlTo: dimension mismatch");
  }
  const std::vector<double> log_p = policy.LogProbs(prompt_id);
  const std::vector<double> log_q = reference.LogProbs(prompt_id);
  double kl = 0.0;
  for (size_t i = 0; i < log_p.size(); ++i) {
    kl += std::exp(log_p[i]) * (log_p[i] - log_q[i]);
  }
  // Rounding can leave a tiny negative value for identical rows.
  return std::max(kl, 0.0);
}

double MeanKlTo(const SoftmaxPolicy& policy, const SoftmaxPolicy& reference) {
  double total = 0.0;
  for (int p = 0; p < policy.num_prompts(); ++p) {
    total += KlTo(policy, reference, p);
  }
  return total / policy.num_prompts();
}

namespace {

void CheckRewardShape(const SoftmaxPolicy& reference,
                      const CompletionTable& reward, double beta) {
  if (!(beta > 0.0)) {
    throw std::invalid_argument("ExactOptimalPolicy: beta must be positive");
  }
  if (reward.num_prompts != reference.num_prompts() ||
      reward.completions_per_prompt != reference.completions_per_prompt()) {
    throw std::invalid_argument("ExactOptimalPolicy: reward shape mismatch");
  }
}

}  // namespace

SoftmaxPolicy ExactOptimalPolicy(const SoftmaxPolicy& reference,
                                 const CompletionTable& reward, double beta) {
  CheckRewardShape(reference, reward, beta);
  CompletionTable logits(reference.num_prompts(),
                         reference.completions_per_prompt());
  for (int p = 0; p < reference.num_prompts(); ++p) {
    const std::vector<double> log_ref = reference.LogProbs(p);
    // Stored as normalized log-probabilities, i.e. log pi_ref + r / beta
    // minus log Z.
    std::vector<double> unnormalized(log_ref.size());
    for (size_t c = 0; c < log_ref.size(); ++c) {
      unnormalized[c] = log_ref[c] + reward.at(p, static_cast<int>(c)) / beta;
    }
    const std::vector<double> normalized = LogSoftmax(unnormalized);
    for (size_t c = 0; c < normalized.size(); ++c) {
      logits.at(p, static_cast<int>(c)) = normalized[c];
    }
  }
  return SoftmaxPolicy(std::move(logits));
}

double LogPartition(const SoftmaxPolicy& reference,
                    const CompletionTable& reward, double beta,
                    int prompt_id) {
  CheckRewardShape(reference, reward, beta);
  const std::vector<double> log_ref = reference.LogProbs(prompt_id);
  double max = -INFINITY;
  std::vector<double> terms(log_ref.size());
  for (size_t c = 0; c < log_ref.size(); ++c) {
    terms[c] = log_ref[c] + reward.at(prompt_id, static_cast<int>(c)) / beta;
    max = std::max(max, terms[c]);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - max);
  return max + std::log(sum);
}

double RegularizedObjective(const SoftmaxPolicy& policy,
                            const SoftmaxPolicy& reference,
                            const CompletionTable& reward, double beta) {
  return ExpectedValue(policy, reward) - beta * MeanKlTo(policy, reference);
}

std::vector<double> TemperedDistribution(const SoftmaxPolicy& policy,
                                         int prompt_id, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("TemperedDistribution: temperature must be > 0");
  }
  policy.CheckIds(prompt_id, 0);
  std::vector<double> scaled(policy.logits().row(prompt_id).begin(),
                             policy.logits().row(prompt_id).end());
  for (double& x : scaled) x /= temperature;
  return Softmax(scaled);
}

double ExpectedValue(const SoftmaxPolicy& policy,
                     const CompletionTable& table) {
  double total = 0.0;
  for (int p = 0; p < policy.num_prompts(); ++p) {
    const std::vector<double> probs = policy.Probs(p);
    for (size_t c = 0; c < probs.size(); ++c) {
      total += probs[c] * table.at(p, static_cast<int>(c));
    }
  }
  return total / policy.num_prompts();
}

double ExpectedValue(const SoftmaxPolicy& policy, const CompletionTable& table,
                     std::span<const int> prompts) {
  if (prompts.empty()) {
    throw std::invalid_argument("ExpectedValue: empty prompt subset");
  }
  double total = 0.0;
  for (int p : prompts) {
    const std::vector<double> probs = policy.Probs(p);
    for (size_t c = 0; c < probs.size(); ++c) {
      total += probs[c] * table.at(p, static_cast<int>(c));
    }
  }
  return total / static_cast<double>(prompts.size());
}

SoftmaxPolicy FitReferenceMle(const World& world,
                              const PreferenceDataset& dataset, double lr,
                              int epochs) {
  if (dataset.pairs.empty()) {
    throw std::invalid_argument("FitReferenceMle: empty dataset");
  }
  if (!(lr > 0.0) || epochs < 1) {
    throw std::invalid_argument("FitReferenceMle: need lr > 0, epochs >= 1");
  }
  CompletionTable freq(world.num_prompts, world.completions_per_prompt);
  std::vector<int> counts(world.num_prompts, 0);
  for (const PreferencePair& pair : dataset.pairs) {
    world.CheckIds(pair.prompt_id, pair.chosen_id);
    freq.at(pair.prompt_id, pair.chosen_id) += 1.0;
    ++counts[pair.prompt_id];
  }
  SoftmaxPolicy policy(world.num_prompts, world.completions_per_prompt);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int p = 0; p < world.num_prompts; ++p) {
      if (counts[p] == 0) continue;
      // d/dlogits of the mean log-likelihood: empirical freq - pi.
      const std::vector<double> probs = policy.Probs(p);
      for (int c = 0; c < world.completions_per_prompt; ++c) {
        policy.mutable_logits().at(p, c) +=
            lr * (freq.at(p, c) / counts[p] - probs[c]);
      }
    }
  }
  return policy;
}

}  // namespace pessim
