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

#ifndef PESSIM_POLICY_H_
#define PESSIM_POLICY_H_

#include <map>
#include <span>
#include <vector>

#include "pessim/env.h"

namespace pessim {

// Tabular softmax policy: one row of logits per prompt.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy() = default;
  // Zero logits, i.e. uniform over completions.
  SoftmaxPolicy(int num_prompts, int completions_per_prompt);
  explicit SoftmaxPolicy(CompletionTable logits);

  int num_prompts() const { return logits_.num_prompts; }
  int completions_per_prompt() const { return logits_.completions_per_prompt; }

  const CompletionTable& logits() const { return logits_; }
  CompletionTable& mutable_logits() { return logits_; }

  double LogProb(int prompt_id, int completion_id) const;
  std::vector<double> LogProbs(int prompt_id) const;
  std::vector<double> Probs(int prompt_id) const;

  void CheckIds(int prompt_id, int completion_id) const;
  bool SameShape(const SoftmaxPolicy& other) const;

  friend bool operator==(const SoftmaxPolicy&, const SoftmaxPolicy&) = default;

 private:
  CompletionTable logits_;
};

// Gradient over policy logits, stored only for the prompts it touches.
class PolicyGradient {
 public:
  // Adds scale * values into the prompt's row.
  void Add(int prompt_id, double scale, std::span<const double> values);
  void AddInto(int prompt_id, int completion_id, double value, int width);
  void Scale(double factor);
  // policy.logits -= step * gradient.
  void ApplyTo(SoftmaxPolicy& policy, double step) const;

  const std::map<int, std::vector<double>>& rows() const { return rows_; }
  double Get(int prompt_id, int completion_id) const;
  double SquaredNorm() const;
  bool AllFinite() const;

 private:
  std::map<int, std::vector<double>> rows_;
};

// Numerically stable log-softmax of a logit row.
std::vector<double> LogSoftmax(std::span<const double> logits);
std::vector<double> Softmax(std::span<const double> logits);

// Score function: e_{completion} - pi(.|prompt) on the prompt's row.
PolicyGradient GradLogProb(const SoftmaxPolicy& policy, int prompt_id,
                           int completion_id);

// Exact KL(policy || reference) over the prompt's completions.
double KlTo(const SoftmaxPolicy& policy, const SoftmaxPolicy& reference,
            int prompt_id);
double MeanKlTo(const SoftmaxPolicy& policy, const SoftmaxPolicy& reference);

// pi*(y|x) = pi_ref(y|x) exp(r(x,y) / beta) / Z(x), normalized exactly over
// the finite completion set. A pessimistic optimum is obtained by passing
// r - u or r * exp(-u / tau) as the reward table.
SoftmaxPolicy ExactOptimalPolicy(const SoftmaxPolicy& reference,
                                 const CompletionTable& reward, double beta);

// log Z(x) of the optimum above for one prompt.
double LogPartition(const SoftmaxPolicy& reference,
                    const CompletionTable& reward, double beta, int prompt_id);

// E_{pi}[r] - beta * KL(pi || ref), averaged over prompts.
double RegularizedObjective(const SoftmaxPolicy& policy,
                            const SoftmaxPolicy& reference,
                            const CompletionTable& reward, double beta);

// softmax(logits / temperature).
std::vector<double> TemperedDistribution(const SoftmaxPolicy& policy,
                                         int prompt_id, double temperature);

// E_x E_{y ~ pi(.|x)} [table(x, y)] with prompts weighted uniformly.
double ExpectedValue(const SoftmaxPolicy& policy, const CompletionTable& table);
double ExpectedValue(const SoftmaxPolicy& policy, const CompletionTable& table,
                     std::span<const int> prompts);

// Supervised fit of the reference policy on chosen completions: gradient
// ascent on the per-prompt mean log-likelihood of chosen ids, starting from
// zero logits. Prompts without pairs stay uniform.
SoftmaxPolicy FitReferenceMle(const World& world,
                              const PreferenceDataset& dataset, double lr,
                              int epochs);

}  // namespace pessim

#endif  // PESSIM_POLICY_H_
