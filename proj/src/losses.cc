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

#include "pessim/losses.h"

#include <cmath>
#include <stdexcept>

#include "pessim/rng.h"

namespace pessim {
namespace {

void CheckUncertainties(double u_w, double u_l) {
  if (!(u_w >= 0.0) || !(u_l >= 0.0)) {
    throw std::invalid_argument("uncertainties must be nonnegative");
  }
}

}  // namespace

std::string_view ToString(LossKind kind) {
  switch (kind) {
    case LossKind::kDpo:
      return "dpo";
    case LossKind::kIpo:
      return "ipo";
  }
  return "?";
}

std::string_view ToString(PenaltyScheme scheme) {
  switch (scheme) {
    case PenaltyScheme::kNone:
      return "none";
    case PenaltyScheme::kAddition:
      return "addition";
    case PenaltyScheme::kMultiplication:
      return "multiplication";
    case PenaltyScheme::kAbsolute:
      return "absolute";
    case PenaltyScheme::kProbability:
      return "probability";
    case PenaltyScheme::kPredictiveEntropy:
      return "predictive_entropy";
  }
  return "?";
}

LossKind ParseLossKind(std::string_view text) {
  if (text == "dpo") return LossKind::kDpo;
  if (text == "ipo") return LossKind::kIpo;
  throw std::invalid_argument("unknown loss kind: " + std::string(text));
}

PenaltyScheme ParsePenaltyScheme(std::string_view text) {
  for (PenaltyScheme s :
       {PenaltyScheme::kNone, PenaltyScheme::kAddition,
        PenaltyScheme::kMultiplication, PenaltyScheme::kAbsolute,
        PenaltyScheme::kProbability, PenaltyScheme::kPredictiveEntropy}) {
    if (ToString(s) == text) return s;
  }
  throw std::invalid_argument("unknown penalty scheme: " + std::string(text));
}

bool IsAdditiveScheme(PenaltyScheme scheme) {
  return scheme == PenaltyScheme::kAddition ||
         scheme == PenaltyScheme::kAbsolute ||
         scheme == PenaltyScheme::kProbability ||
         scheme == PenaltyScheme::kPredictiveEntropy;
}

void LossConfig::Validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("loss: beta must be > 0");
  if (!(z >= 0.0 && z < 1.0)) {
    throw std::invalid_argument("loss: z must be in [0, 1)");
  }
  if (!(lambda_ema >= 0.0 && lambda_ema < 1.0)) {
    throw std::invalid_argument("loss: lambda_ema must be in [0, 1)");
  }
  if (entropy_samples < 1) {
    throw std::invalid_argument("loss: entropy_samples must be >= 1");
  }
}

double ImplicitReward(const SoftmaxPolicy& policy,
                      const SoftmaxPolicy& reference, int prompt_id,
                      int completion_id, double beta) {
  if (!policy.SameShape(reference)) {
    throw std::invalid_argument("ImplicitReward: dimension mismatch");
  }
  return beta * (policy.LogProb(prompt_id, completion_id) -
                 reference.LogProb(prompt_id, completion_id));
}

double MarginAddition(double u_w, double u_l) {
  CheckUncertainties(u_w, u_l);
  return u_w - u_l;
}

double MarginAbsolute(double u_w, double u_l) {
  CheckUncertainties(u_w, u_l);
  return std::abs(u_w + u_l);
}

double NormalCdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

ScaledValue MarginProbability(double mean_w, double mean_l, double u_w,
                              double u_l) {
  CheckUncertainties(u_w, u_l);
  const double scale = std::sqrt(u_w * u_w + u_l * u_l);
  if (scale == 0.0) {
    const double step = mean_l > mean_w ? 1.0 : (mean_l < mean_w ? 0.0 : 0.5);
    return {step, true};
  }
  return {NormalCdf((mean_l - mean_w) / scale), false};
}

double EnergyFactor(double u, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("EnergyFactor: tau must be > 0");
  if (!(u >= 0.0)) throw std::invalid_argument("EnergyFactor: u must be >= 0");
  return std::exp(u / tau);
}

ScaledValue ComputeAlpha(double z, const ScalingState& scaling) {
  if (!scaling.initialized) {
    throw std::logic_error("ComputeAlpha: scaling state not initialized");
  }
  if (scaling.delta_bar == 0.0) return {0.0, true};
  return {(1.0 - z) * scaling.r_bar / scaling.delta_bar, false};
}

ScaledValue ComputeTau(double z, const ScalingState& scaling) {
  if (!scaling.initialized) {
    throw std::logic_error("ComputeTau: scaling state not initialized");
  }
  if (z == 0.0 || scaling.u_bar == 0.0) {
    return {std::numeric_limits<double>::infinity(), true};
  }
  return {scaling.u_bar / std::log1p(z), false};
}

ScalingState EmaUpdate(const ScalingState& scaling, double batch_mean_r,
                       double batch_mean_u, double batch_mean_delta,
                       double lambda) {
  ScalingState next;
  next.initialized = true;
  if (!scaling.initialized) {
    next.r_bar = batch_mean_r;
    next.u_bar = batch_mean_u;
    next.delta_bar = batch_mean_delta;
    return next;
  }
  next.r_bar = lambda * scaling.r_bar + (1.0 - lambda) * batch_mean_r;
  next.u_bar = lambda * scaling.u_bar + (1.0 - lambda) * batch_mean_u;
  next.delta_bar = lambda * scaling.delta_bar + (1.0 - lambda) * batch_mean_delta;
  return next;
}

double MeanSampledLogProb(const SoftmaxPolicy& policy, int prompt_id, int n,
                          uint64_t seed) {
  if (n < 1) throw std::invalid_argument("MeanSampledLogProb: n must be >= 1");
  const std::vector<double> log_probs = policy.LogProbs(prompt_id);
  std::vector<double> cdf(log_probs.size());
  double acc = 0.0;
  for (size_t c = 0; c < log_probs.size(); ++c) {
    acc += std::exp(log_probs[c]);
    cdf[c] = acc;
  }
  Rng rng(seed);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.Uniform() * acc;
    size_t c = 0;
    while (c + 1 < cdf.size() && cdf[c] <= u) ++c;
    total += log_probs[c];
  }
  return total / n;
}

double PredictiveEntropyMargin(const SoftmaxPolicy& policy, int prompt_id,
                               int n, double baseline, uint64_t seed) {
  return Sigmoid(MeanSampledLogProb(policy, prompt_id, n, seed) - baseline);
}

double EntropyBaseline(const SoftmaxPolicy& policy,
                       const PreferenceDataset& dataset, int n,
                       uint64_t seed) {
  if (dataset.pairs.empty()) {
    throw std::invalid_argument("EntropyBaseline: empty dataset");
  }
  double total = 0.0;
  for (size_t i = 0; i < dataset.pairs.size(); ++i) {
    total += MeanSampledLogProb(policy, dataset.pairs[i].prompt_id, n,
                                DeriveSeed(seed, static_cast<uint64_t>(i)));
  }
  return total / static_cast<double>(dataset.pairs.size());
}

std::vector<double> RawMargins(const SoftmaxPolicy& policy,
                               std::span<const PreferencePair> batch,
                               const LossConfig& config, uint64_t seed) {
  std::vector<double> margins(batch.size(), 0.0);
  for (size_t i = 0; i < batch.size(); ++i) {
    const PreferencePair& pair = batch[i];
    switch (config.scheme) {
      case PenaltyScheme::kNone:
      case PenaltyScheme::kMultiplication:
        break;
      case PenaltyScheme::kAddition:
        margins[i] = MarginAddition(pair.u_chosen, pair.u_rejected);
        break;
      case PenaltyScheme::kAbsolute:
        margins[i] = MarginAbsolute(pair.u_chosen, pair.u_rejected);
        break;
      case PenaltyScheme::kProbability: {
        const ScaledValue m =
            MarginProbability(pair.score_chosen, pair.score_rejected,
                              pair.u_chosen, pair.u_rejected);
        margins[i] = m.degenerate ? 0.0 : m.value;
        break;
      }
      case PenaltyScheme::kPredictiveEntropy:
        if (!config.entropy_baseline) {
          throw std::invalid_argument(
              "predictive_entropy scheme needs a resolved entropy_baseline");
        }
        margins[i] = PredictiveEntropyMargin(
            policy, pair.prompt_id, config.entropy_samples,
            *config.entropy_baseline, DeriveSeed(seed, static_cast<uint64_t>(i)));
        break;
    }
  }
  return margins;
}

PenaltyScale ScaleFromState(const LossConfig& config,
                            const ScalingState& scaling) {
  PenaltyScale scale;
  if (IsAdditiveScheme(config.scheme)) {
    scale.alpha = ComputeAlpha(config.z, scaling).value;
  } else if (config.scheme == PenaltyScheme::kMultiplication) {
    scale.tau = ComputeTau(config.z, scaling).value;
  }
  return scale;
}

LossReport EvaluateLoss(const SoftmaxPolicy& policy,
                        const SoftmaxPolicy& reference,
                        std::span<const PreferencePair> batch,
                        const LossConfig& config, const PenaltyScale& scale,
                        std::span<const double> margins) {
  if (batch.empty()) throw std::invalid_argument("EvaluateLoss: empty batch");
  if (margins.size() != batch.size()) {
    throw std::invalid_argument("EvaluateLoss: one margin per pair required");
  }
  if (!policy.SameShape(reference)) {
    throw std::invalid_argument("EvaluateLoss: dimension mismatch");
  }
  const double beta = config.beta;
  const double n = static_cast<double>(batch.size());
  const bool multiplicative = config.scheme == PenaltyScheme::kMultiplication;
  const int width = policy.completions_per_prompt();

  LossReport report;
  for (size_t i = 0; i < batch.size(); ++i) {
    const PreferencePair& pair = batch[i];
    const std::vector<double> log_p = policy.LogProbs(pair.prompt_id);
    const std::vector<double> log_ref = reference.LogProbs(pair.prompt_id);
    policy.CheckIds(pair.prompt_id, pair.chosen_id);
    policy.CheckIds(pair.prompt_id, pair.rejected_id);
    const double r_w = beta * (log_p[pair.chosen_id] - log_ref[pair.chosen_id]);
    const double r_l =
        beta * (log_p[pair.rejected_id] - log_ref[pair.rejected_id]);
    const double rho = r_w - r_l;

    double f_w = 1.0, f_l = 1.0;
    double arg;
    if (multiplicative) {
      f_w = EnergyFactor(pair.u_chosen, scale.tau);
      f_l = EnergyFactor(pair.u_rejected, scale.tau);
      arg = f_w * r_w - f_l * r_l;
    } else {
      arg = rho + scale.alpha * margins[i];
    }

    double loss, dloss_darg;
    if (config.kind == LossKind::kDpo) {
      loss = -LogSigmoid(arg);
      dloss_darg = -Sigmoid(-arg);
    } else {
      loss = (arg - 0.5) * (arg - 0.5);
      dloss_darg = 2.0 * (arg - 0.5);
    }

    report.loss += loss / n;
    report.mean_rho += arg / n;
    report.mean_margin += (arg - rho) / n;
    report.stats.mean_abs_reward += 0.5 * (std::abs(r_w) + std::abs(r_l)) / n;
    report.stats.mean_uncertainty +=
        0.5 * (pair.u_chosen + pair.u_rejected) / n;
    report.stats.mean_abs_margin += std::abs(margins[i]) / n;

    // d arg / d logits = beta * (f_w (e_w - pi) - f_l (e_l - pi)).
    const double coeff = dloss_darg * beta / n;
    std::vector<double> row(width);
    for (int c = 0; c < width; ++c) {
      row[c] = -(f_w - f_l) * std::exp(log_p[c]);
    }
    row[pair.chosen_id] += f_w;
    row[pair.rejected_id] -= f_l;
    report.gradient.Add(pair.prompt_id, coeff, row);
  }
  return report;
}

LossStep LossAndGrad(const SoftmaxPolicy& policy,
                     const SoftmaxPolicy& reference,
                     std::span<const PreferencePair> batch,
                     const LossConfig& config, const ScalingState& scaling,
                     uint64_t seed) {
  config.Validate();
  if (batch.empty()) throw std::invalid_argument("LossAndGrad: empty batch");
  if (config.scheme != PenaltyScheme::kNone && !scaling.initialized) {
    throw std::invalid_argument(
        "LossAndGrad: scaling state must be initialized for penalized schemes");
  }
  const std::vector<double> margins = RawMargins(policy, batch, config, seed);
  const PenaltyScale scale = config.scheme == PenaltyScheme::kNone
                                 ? PenaltyScale{}
                                 : ScaleFromState(config, scaling);
  LossStep step;
  step.report = EvaluateLoss(policy, reference, batch, config, scale, margins);
  const BatchStats& stats = step.report.stats;
  step.scaling = EmaUpdate(scaling, stats.mean_abs_reward,
                           stats.mean_uncertainty, stats.mean_abs_margin,
                           config.lambda_ema);
  return step;
}

ScalingState InitialScaling(const SoftmaxPolicy& policy,
                            const SoftmaxPolicy& reference,
                            const PreferenceDataset& dataset,
                            const LossConfig& config, uint64_t seed) {
  if (dataset.pairs.empty()) {
    throw std::invalid_argument("InitialScaling: empty dataset");
  }
  const std::vector<double> margins =
      RawMargins(policy, dataset.pairs, config, seed);
  const LossReport report = EvaluateLoss(policy, reference, dataset.pairs,
                                         config, PenaltyScale{}, margins);
  return EmaUpdate(ScalingState{}, report.stats.mean_abs_reward,
                   report.stats.mean_uncertainty, report.stats.mean_abs_margin,
                   config.lambda_ema);
}

}  // namespace pessim
