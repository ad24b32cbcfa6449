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

#ifndef PESSIM_LOSSES_H_
#define PESSIM_LOSSES_H_

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pessim/env.h"
#include "pessim/policy.h"

namespace pessim {

enum class LossKind { kDpo, kIpo };

enum class PenaltyScheme {
  kNone,
  kAddition,
  kMultiplication,
  kAbsolute,
  kProbability,
  kPredictiveEntropy,
};

std::string_view ToString(LossKind kind);
std::string_view ToString(PenaltyScheme scheme);
// Throw std::invalid_argument on unknown spellings.
LossKind ParseLossKind(std::string_view text);
PenaltyScheme ParsePenaltyScheme(std::string_view text);

// True for the schemes that add alpha * margin inside the loss argument.
bool IsAdditiveScheme(PenaltyScheme scheme);

struct LossConfig {
  LossKind kind = LossKind::kDpo;
  PenaltyScheme scheme = PenaltyScheme::kNone;
  double beta = 0.1;
  // Penalization strength, e.g. 0.3 for a 30% penalty.
  double z = 0.3;
  double lambda_ema = 0.9;
  // Predictive-entropy margin: samples per prompt and baseline B. An empty
  // baseline is resolved by the trainer from the starting policy.
  int entropy_samples = 16;
  std::optional<double> entropy_baseline;

  void Validate() const;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

// Exponential moving averages behind the penalty scale.
struct ScalingState {
  double r_bar = 0.0;      // mean |implicit reward|
  double u_bar = 0.0;      // mean uncertainty
  double delta_bar = 0.0;  // mean |raw margin|
  bool initialized = false;

  friend bool operator==(const ScalingState&, const ScalingState&) = default;
};

struct BatchStats {
  double mean_abs_reward = 0.0;
  double mean_uncertainty = 0.0;
  double mean_abs_margin = 0.0;
};

struct LossReport {
  double loss = 0.0;
  PolicyGradient gradient;
  // Mean of the argument inside sigmoid (DPO) or inside the square (IPO).
  double mean_rho = 0.0;
  // Mean shift of that argument relative to the unpenalized rho.
  double mean_margin = 0.0;
  BatchStats stats;
};

// Scalar multiplier for additive margins and temperature for energy
// factors. An infinite tau means no penalty.
struct PenaltyScale {
  double alpha = 0.0;
  double tau = std::numeric_limits<double>::infinity();
};

// A computed scale plus whether it fell back to its degenerate value.
struct ScaledValue {
  double value = 0.0;
  bool degenerate = false;
};

// beta * (log pi(y|x) - log pi_ref(y|x)); the partition term is dropped.
double ImplicitReward(const SoftmaxPolicy& policy,
                      const SoftmaxPolicy& reference, int prompt_id,
                      int completion_id, double beta);

// u_w - u_l. Throws std::invalid_argument on negative uncertainty.
double MarginAddition(double u_w, double u_l);
// |u_w + u_l|. Throws std::invalid_argument on negative uncertainty.
double MarginAbsolute(double u_w, double u_l);

double NormalCdf(double x);

// P(r_l > r_w) under independent Gaussian scores. With both uncertainties
// zero the result is the step function of the mean gap (0.5 on ties) and
// `degenerate` is set.
ScaledValue MarginProbability(double mean_w, double mean_l, double u_w,
                              double u_l);

// exp(u / tau). Throws on tau <= 0; tau = +inf gives 1.
double EnergyFactor(double u, double tau);

// (1 - z) * r_bar / delta_bar, or 0 (degenerate) when delta_bar is 0.
ScaledValue ComputeAlpha(double z, const ScalingState& scaling);
// u_bar / log(1 + z), or +inf (degenerate, no penalty) when z or u_bar is 0.
ScaledValue ComputeTau(double z, const ScalingState& scaling);

// ema <- lambda * ema + (1 - lambda) * batch; the first call copies the
// batch statistics.
ScalingState EmaUpdate(const ScalingState& scaling, double batch_mean_r,
                       double batch_mean_u, double batch_mean_delta,
                       double lambda);

// Mean log-probability of n completions sampled from pi(.|prompt).
double MeanSampledLogProb(const SoftmaxPolicy& policy, int prompt_id, int n,
                          uint64_t seed);
// sigmoid(MeanSampledLogProb - baseline).
double PredictiveEntropyMargin(const SoftmaxPolicy& policy, int prompt_id,
                               int n, double baseline, uint64_t seed);
// Mean of MeanSampledLogProb over the dataset's pairs.
double EntropyBaseline(const SoftmaxPolicy& policy,
                       const PreferenceDataset& dataset, int n, uint64_t seed);

// Unscaled margin of every pair for the configured scheme; zero for None
// and Multiplication. Degenerate probability margins contribute zero.
std::vector<double> RawMargins(const SoftmaxPolicy& policy,
                               std::span<const PreferencePair> batch,
                               const LossConfig& config, uint64_t seed);

PenaltyScale ScaleFromState(const LossConfig& config,
                            const ScalingState& scaling);

// Batch-mean loss and exact gradient with margins and scale held fixed.
LossReport EvaluateLoss(const SoftmaxPolicy& policy,
                        const SoftmaxPolicy& reference,
                        std::span<const PreferencePair> batch,
                        const LossConfig& config, const PenaltyScale& scale,
                        std::span<const double> margins);

struct LossStep {
  LossReport report;
  ScalingState scaling;
};

// Scale from the incoming state, loss and gradient on the batch, then one
// EMA update with the batch statistics.
LossStep LossAndGrad(const SoftmaxPolicy& policy,
                     const SoftmaxPolicy& reference,
                     std::span<const PreferencePair> batch,
                     const LossConfig& config, const ScalingState& scaling,
                     uint64_t seed);

// First EMA state, from statistics of the whole dataset at `policy`.
ScalingState InitialScaling(const SoftmaxPolicy& policy,
                            const SoftmaxPolicy& reference,
                            const PreferenceDataset& dataset,
                            const LossConfig& config, uint64_t seed);

}  // namespace pessim

#endif  // PESSIM_LOSSES_H_
