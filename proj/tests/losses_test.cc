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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "pessim/env.h"
#include "pessim/rng.h"
#include "test_util.h"

namespace pessim {
namespace {

using testing::RandomPairs;
using testing::RandomPolicy;

constexpr PenaltyScheme kAllSchemes[] = {
    PenaltyScheme::kNone,        PenaltyScheme::kAddition,
    PenaltyScheme::kMultiplication, PenaltyScheme::kAbsolute,
    PenaltyScheme::kProbability, PenaltyScheme::kPredictiveEntropy};

LossConfig Config(LossKind kind, PenaltyScheme scheme, double beta = 1.0) {
  LossConfig c;
  c.kind = kind;
  c.scheme = scheme;
  c.beta = beta;
  c.entropy_baseline = -1.0;
  return c;
}

PenaltyScale Scale(double alpha, double tau) {
  PenaltyScale s;
  s.alpha = alpha;
  s.tau = tau;
  return s;
}

SoftmaxPolicy FromRow(std::vector<double> row) {
  CompletionTable t(1, static_cast<int>(row.size()));
  t.values = std::move(row);
  return SoftmaxPolicy(t);
}

TEST(NamesTest, RoundTrip) {
  for (PenaltyScheme s : kAllSchemes) EXPECT_EQ(ParsePenaltyScheme(ToString(s)), s);
  EXPECT_EQ(ParseLossKind("dpo"), LossKind::kDpo);
  EXPECT_EQ(ParseLossKind("ipo"), LossKind::kIpo);
  EXPECT_EQ(ToString(PenaltyScheme::kPredictiveEntropy), "predictive_entropy");
  EXPECT_THROW(ParseLossKind("kto"), std::invalid_argument);
  EXPECT_THROW(ParsePenaltyScheme("Addition"), std::invalid_argument);
  EXPECT_TRUE(IsAdditiveScheme(PenaltyScheme::kProbability));
  EXPECT_FALSE(IsAdditiveScheme(PenaltyScheme::kMultiplication));
  EXPECT_FALSE(IsAdditiveScheme(PenaltyScheme::kNone));
}

TEST(LossConfigTest, Validation) {
  LossConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.beta = 0.0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = LossConfig{};
  c.z = 1.0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = LossConfig{};
  c.lambda_ema = 1.0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
  c = LossConfig{};
  c.entropy_samples = 0;
  EXPECT_THROW(c.Validate(), std::invalid_argument);
}

TEST(ImplicitRewardTest, Values) {
  Rng rng(1);
  const SoftmaxPolicy p = RandomPolicy(rng, 2, 3);
  EXPECT_EQ(ImplicitReward(p, p, 1, 2, 0.7), 0.0);
  const SoftmaxPolicy q = FromRow({1.0, 0.0});
  const double pi = 1.0 / (1.0 + std::exp(-1.0));
  EXPECT_NEAR(ImplicitReward(q, SoftmaxPolicy(1, 2), 0, 0, 1.0),
              std::log(pi / 0.5), 1e-15);
  EXPECT_NEAR(std::log(pi / 0.5), 0.379885, 1e-6);
  EXPECT_THROW(ImplicitReward(q, SoftmaxPolicy(1, 3), 0, 0, 1.0),
               std::invalid_argument);
}

TEST(MarginTest, AdditionAndAbsolute) {
  EXPECT_EQ(MarginAddition(0.3, 0.3), 0.0);
  EXPECT_EQ(MarginAddition(0.5, 0.0), 0.5);
  EXPECT_EQ(MarginAddition(0.0, 0.5), -0.5);
  EXPECT_DOUBLE_EQ(MarginAbsolute(0.3, 0.3), 0.6);
  EXPECT_EQ(MarginAbsolute(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(MarginAbsolute(0.2, 0.5), 0.7);
  EXPECT_THROW(MarginAddition(-0.1, 0.0), std::invalid_argument);
  EXPECT_THROW(MarginAbsolute(0.0, -0.1), std::invalid_argument);
}

// Independent Phi: midpoint rule on the density from -12.
double PhiOracle(double x) {
  const int n = 400000;
  const double lo = -12.0;
  const double h = (x - lo) / n;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = lo + (i + 0.5) * h;
    s += std::exp(-0.5 * t * t);
  }
  return s * h / std::sqrt(2.0 * M_PI);
}

TEST(MarginTest, Probability) {
  EXPECT_DOUBLE_EQ(MarginProbability(0.4, 0.4, 0.1, 0.2).value, 0.5);
  const ScaledValue one = MarginProbability(0.0, 1.0, std::sqrt(0.5), std::sqrt(0.5));
  EXPECT_FALSE(one.degenerate);
  EXPECT_NEAR(one.value, PhiOracle(1.0), 1e-10);
  EXPECT_NEAR(one.value, 0.841345, 1e-6);
  const ScaledValue three = MarginProbability(3.0, 0.0, 0.6, 0.8);
  EXPECT_NEAR(three.value, PhiOracle(-3.0), 1e-10);
  EXPECT_NEAR(three.value, 0.001350, 1e-6);
  EXPECT_NEAR(NormalCdf(-8.0), 6.22096057427178e-16, 1e-27);
}

TEST(MarginTest, ProbabilityDegenerateStep) {
  EXPECT_EQ(MarginProbability(0.0, 1.0, 0.0, 0.0).value, 1.0);
  EXPECT_EQ(MarginProbability(1.0, 0.0, 0.0, 0.0).value, 0.0);
  const ScaledValue tie = MarginProbability(1.0, 1.0, 0.0, 0.0);
  EXPECT_EQ(tie.value, 0.5);
  EXPECT_TRUE(tie.degenerate);
  EXPECT_THROW(MarginProbability(0.0, 0.0, -1.0, 0.0), std::invalid_argument);
}

ScalingState State(double r, double u, double d) {
  ScalingState s;
  s.r_bar = r;
  s.u_bar = u;
  s.delta_bar = d;
  s.initialized = true;
  return s;
}

TEST(EnergyFactorTest, Values) {
  EXPECT_EQ(EnergyFactor(0.0, 0.5), 1.0);
  EXPECT_NEAR(EnergyFactor(0.3, 1e9), 1.0 + 3e-10, 1e-15);
  EXPECT_EQ(EnergyFactor(0.3, std::numeric_limits<double>::infinity()), 1.0);
  const double tau = ComputeTau(0.3, State(0, 0.37, 0)).value;
  EXPECT_NEAR(EnergyFactor(0.37, tau), 1.3, 1e-15);
  EXPECT_THROW(EnergyFactor(0.1, 0.0), std::invalid_argument);
  EXPECT_THROW(EnergyFactor(0.1, -1.0), std::invalid_argument);
  EXPECT_THROW(EnergyFactor(-0.1, 1.0), std::invalid_argument);
}

TEST(ComputeAlphaTest, Values) {
  EXPECT_NEAR(ComputeAlpha(0.3, State(2.0, 0, 0.5)).value, 2.8, 1e-15);
  EXPECT_NEAR(ComputeAlpha(1.0 - 1e-12, State(5.0, 0, 0.1)).value, 0.0, 1e-9);
  const ScaledValue zero = ComputeAlpha(0.3, State(2.0, 0, 0.0));
  EXPECT_EQ(zero.value, 0.0);
  EXPECT_TRUE(zero.degenerate);
  EXPECT_THROW(ComputeAlpha(0.3, ScalingState{}), std::logic_error);
}

TEST(ComputeTauTest, Values) {
  EXPECT_NEAR(ComputeTau(0.3, State(0, 0.3, 0)).value, 0.3 / std::log(1.3), 1e-15);
  EXPECT_NEAR(ComputeTau(0.3, State(0, 0.3, 0)).value, 1.143448, 1e-6);
  EXPECT_NEAR(std::log(1.3), 0.262364, 1e-6);
  const ScaledValue off = ComputeTau(0.0, State(0, 0.3, 0));
  EXPECT_TRUE(std::isinf(off.value));
  EXPECT_TRUE(off.degenerate);
  EXPECT_TRUE(std::isinf(ComputeTau(0.3, State(0, 0.0, 0)).value));
  EXPECT_NEAR(ComputeTau(std::exp(0.3) - 1.0, State(0, 0.3, 0)).value, 1.0, 1e-14);
  EXPECT_THROW(ComputeTau(0.3, ScalingState{}), std::logic_error);
}

TEST(EmaUpdateTest, Recurrence) {
  const ScalingState first = EmaUpdate(ScalingState{}, 2.0, 3.0, 4.0, 0.9);
  EXPECT_EQ(first, State(2.0, 3.0, 4.0));
  EXPECT_EQ(EmaUpdate(State(1, 1, 1), 2.0, 5.0, 7.0, 0.0), State(2, 5, 7));
  EXPECT_NEAR(EmaUpdate(State(1, 1, 1), 2.0, 1.0, 1.0, 0.9).r_bar, 1.1, 1e-15);
  ScalingState s = State(0.0, 10.0, -3.0);
  for (int i = 0; i < 2000; ++i) s = EmaUpdate(s, 0.7, 0.7, 0.7, 0.9);
  EXPECT_NEAR(s.r_bar, 0.7, 1e-12);
  EXPECT_NEAR(s.u_bar, 0.7, 1e-12);
  EXPECT_NEAR(s.delta_bar, 0.7, 1e-12);
}

TEST(PredictiveEntropyMarginTest, Values) {
  const SoftmaxPolicy uniform(1, 4);
  // Every sample of a uniform policy has log prob -log 4.
  EXPECT_NEAR(PredictiveEntropyMargin(uniform, 0, 5, -std::log(4.0), 1), 0.5,
              1e-15);
  const SoftmaxPolicy sharp = FromRow({60.0, 0.0, 0.0});
  EXPECT_NEAR(PredictiveEntropyMargin(sharp, 0, 50, 1.2, 3), Sigmoid(-1.2), 1e-12);
  EXPECT_THROW(PredictiveEntropyMargin(uniform, 0, 0, 0.0, 1),
               std::invalid_argument);
  EXPECT_EQ(MeanSampledLogProb(FromRow({0.3, -1, 2}), 0, 20, 9),
            MeanSampledLogProb(FromRow({0.3, -1, 2}), 0, 20, 9));
}

TEST(PredictiveEntropyMarginTest, SampleMeanConvergesToNegativeEntropy) {
  const SoftmaxPolicy p = FromRow({0.5, -0.2, 1.1, 0.0});
  const auto probs = p.Probs(0);
  double neg_entropy = 0.0, second = 0.0;
  for (double q : probs) {
    neg_entropy += q * std::log(q);
    second += q * std::log(q) * std::log(q);
  }
  const int n = 200000;
  const double se = std::sqrt((second - neg_entropy * neg_entropy) / n);
  EXPECT_NEAR(MeanSampledLogProb(p, 0, n, 5), neg_entropy, 4 * se);
}

// Loss of one pair, recomputed from scratch.
double PairLossOracle(const SoftmaxPolicy& pol, const SoftmaxPolicy& ref,
                      const PreferencePair& p, const LossConfig& c,
                      const PenaltyScale& s, double margin) {
  const double rw = c.beta * (pol.LogProb(p.prompt_id, p.chosen_id) -
                              ref.LogProb(p.prompt_id, p.chosen_id));
  const double rl = c.beta * (pol.LogProb(p.prompt_id, p.rejected_id) -
                              ref.LogProb(p.prompt_id, p.rejected_id));
  double arg;
  if (c.scheme == PenaltyScheme::kMultiplication) {
    arg = std::exp(p.u_chosen / s.tau) * rw - std::exp(p.u_rejected / s.tau) * rl;
  } else {
    arg = rw - rl + s.alpha * margin;
  }
  if (c.kind == LossKind::kDpo) return std::log1p(std::exp(-arg));
  return (arg - 0.5) * (arg - 0.5);
}

TEST(EvaluateLossTest, MatchesPerPairOracle) {
  Rng rng(5);
  for (LossKind kind : {LossKind::kDpo, LossKind::kIpo}) {
    for (PenaltyScheme scheme : kAllSchemes) {
      const LossConfig c = Config(kind, scheme, 0.3);
      const SoftmaxPolicy ref = RandomPolicy(rng, 3, 4);
      const SoftmaxPolicy pol = RandomPolicy(rng, 3, 4);
      const auto batch = RandomPairs(rng, 6, 3, 4, 0.5);
      const auto margins = RawMargins(pol, batch, c, 1);
      const PenaltyScale s = Scale(0.8, 0.4);
      double expected = 0.0;
      for (size_t i = 0; i < batch.size(); ++i) {
        expected += PairLossOracle(pol, ref, batch[i], c, s, margins[i]) / 6;
      }
      EXPECT_NEAR(EvaluateLoss(pol, ref, batch, c, s, margins).loss, expected,
                  1e-12);
    }
  }
}

TEST(EvaluateLossTest, GradientMatchesFiniteDifferences) {
  Rng rng(2718);
  for (LossKind kind : {LossKind::kDpo, LossKind::kIpo}) {
    for (PenaltyScheme scheme : kAllSchemes) {
      double worst = 0.0;
      for (int trial = 0; trial < 200; ++trial) {
        const LossConfig c = Config(kind, scheme, 0.05 + rng.Uniform());
        const int prompts = 1 + static_cast<int>(rng.UniformInt(3));
        const int completions = 2 + static_cast<int>(rng.UniformInt(4));
        const SoftmaxPolicy ref = RandomPolicy(rng, prompts, completions);
        const SoftmaxPolicy pol = RandomPolicy(rng, prompts, completions);
        const auto batch = RandomPairs(rng, 1 + static_cast<int>(rng.UniformInt(8)),
                                       prompts, completions, 0.6);
        const auto margins = RawMargins(pol, batch, c, rng.NextU64());
        const PenaltyScale s = Scale(2.0 * rng.Uniform(), 0.1 + rng.Uniform());
        const auto report = EvaluateLoss(pol, ref, batch, c, s, margins);
        const auto fd = testing::NumericGradient(pol, [&](const SoftmaxPolicy& q) {
          return EvaluateLoss(q, ref, batch, c, s, margins).loss;
        });
        worst = std::max(worst, testing::RelativeError(
                                    testing::Dense(report.gradient, prompts,
                                                   completions),
                                    fd.values));
      }
      EXPECT_LT(worst, 1e-6) << ToString(kind) << "/" << ToString(scheme);
    }
  }
}

TEST(EvaluateLossTest, UniformStartingPoint) {
  const SoftmaxPolicy p(1, 2);
  PreferencePair pair;
  pair.chosen_id = 0;
  pair.rejected_id = 1;
  const std::vector<PreferencePair> batch = {pair};
  const std::vector<double> zero = {0.0};
  const auto r = EvaluateLoss(p, p, batch, Config(LossKind::kDpo, PenaltyScheme::kNone),
                              PenaltyScale{}, zero);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
  // -sigma(0) * beta * (1 - pi_w + pi_l) = -0.5.
  EXPECT_NEAR(r.gradient.Get(0, 0), -0.5, 1e-15);
  EXPECT_NEAR(r.gradient.Get(0, 1), 0.5, 1e-15);
  EXPECT_EQ(r.mean_rho, 0.0);
}

TEST(EvaluateLossTest, IpoTargetsOneHalf) {
  // rho = beta * log(pi_w / pi_l) with beta = 1 and logits (a, 0).
  const LossConfig c = Config(LossKind::kIpo, PenaltyScheme::kNone);
  PreferencePair pair;
  pair.chosen_id = 0;
  pair.rejected_id = 1;
  const std::vector<PreferencePair> batch = {pair};
  const std::vector<double> zero = {0.0};
  const SoftmaxPolicy ref(1, 2);
  const auto at_half = EvaluateLoss(FromRow({0.5, 0.0}), ref, batch, c,
                                    PenaltyScale{}, zero);
  EXPECT_NEAR(at_half.mean_rho, 0.5, 1e-15);
  EXPECT_NEAR(at_half.loss, 0.0, 1e-30);
  EXPECT_NEAR(std::sqrt(at_half.gradient.SquaredNorm()), 0.0, 1e-15);
  const auto at_zero = EvaluateLoss(ref, ref, batch, c, PenaltyScale{}, zero);
  EXPECT_DOUBLE_EQ(at_zero.loss, 0.25);
}

TEST(EvaluateLossTest, DpoLossAndGradientDecreaseInRho) {
  const LossConfig c = Config(LossKind::kDpo, PenaltyScheme::kNone);
  PreferencePair pair;
  pair.chosen_id = 0;
  pair.rejected_id = 1;
  const std::vector<PreferencePair> batch = {pair};
  const std::vector<double> zero = {0.0};
  const SoftmaxPolicy ref(1, 2);
  double prev_loss = INFINITY, prev_grad = INFINITY, prev_rho = -INFINITY;
  for (double a = -6.0; a <= 6.0; a += 0.25) {
    const auto r = EvaluateLoss(FromRow({a, 0.0}), ref, batch, c, PenaltyScale{}, zero);
    EXPECT_GT(r.mean_rho, prev_rho);
    EXPECT_LT(r.loss, prev_loss);
    // |dL/drho| = sigma(-rho).
    const double g = Sigmoid(-r.mean_rho);
    EXPECT_LT(g, prev_grad);
    prev_loss = r.loss;
    prev_grad = g;
    prev_rho = r.mean_rho;
  }
}

TEST(EvaluateLossTest, ZeroUncertaintyReducesToBaseLoss) {
  Rng rng(77);
  for (LossKind kind : {LossKind::kDpo, LossKind::kIpo}) {
    for (PenaltyScheme scheme : kAllSchemes) {
      const LossConfig c = Config(kind, scheme, 0.4);
      const SoftmaxPolicy ref = RandomPolicy(rng, 2, 5);
      const SoftmaxPolicy pol = RandomPolicy(rng, 2, 5);
      auto batch = RandomPairs(rng, 10, 2, 5, 0.0);
      std::vector<double> margins = RawMargins(pol, batch, c, 3);
      if (scheme == PenaltyScheme::kPredictiveEntropy) {
        margins.assign(batch.size(), 0.0);
      }
      const double base = EvaluateLoss(pol, ref, batch, Config(kind, PenaltyScheme::kNone, 0.4),
                                       PenaltyScale{}, std::vector<double>(10, 0.0)).loss;
      const double penalized =
          EvaluateLoss(pol, ref, batch, c, Scale(1.7, 0.3), margins).loss;
      EXPECT_NEAR(penalized, base, 1e-12) << ToString(scheme);
    }
  }
}

TEST(EvaluateLossTest, EqualUncertaintiesCancelOnlyForAddition) {
  Rng rng(78);
  for (int trial = 0; trial < 50; ++trial) {
    const SoftmaxPolicy ref = RandomPolicy(rng, 1, 4);
    const SoftmaxPolicy pol = RandomPolicy(rng, 1, 4);
    auto batch = RandomPairs(rng, 1, 1, 4, 0.0);
    batch[0].u_chosen = batch[0].u_rejected = 0.05 + rng.Uniform();
    const std::vector<double> zero = {0.0};
    const double vanilla =
        EvaluateLoss(pol, ref, batch, Config(LossKind::kDpo, PenaltyScheme::kNone),
                     PenaltyScale{}, zero).loss;
    const LossConfig add = Config(LossKind::kDpo, PenaltyScheme::kAddition);
    EXPECT_EQ(EvaluateLoss(pol, ref, batch, add, Scale(3.0, 1.0),
                           RawMargins(pol, batch, add, 0)).loss,
              vanilla);
    const double rw = ImplicitReward(pol, ref, 0, batch[0].chosen_id, 1.0);
    const double rl = ImplicitReward(pol, ref, 0, batch[0].rejected_id, 1.0);
    ASSERT_NE(rw, rl);
    const double mult =
        EvaluateLoss(pol, ref, batch, Config(LossKind::kDpo, PenaltyScheme::kMultiplication),
                     Scale(0.0, 0.5), zero).loss;
    EXPECT_NE(mult, vanilla);
  }
}

TEST(EvaluateLossTest, AdditionAttenuatesUncertainChosen) {
  Rng rng(79);
  const LossConfig c = Config(LossKind::kDpo, PenaltyScheme::kAddition, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    const SoftmaxPolicy ref = RandomPolicy(rng, 1, 5);
    const SoftmaxPolicy pol = RandomPolicy(rng, 1, 5);
    auto batch = RandomPairs(rng, 1, 1, 5, 0.0);
    const PenaltyScale s = Scale(0.5 + rng.Uniform(), 1.0);
    auto norm = [&](double uw, double ul) {
      batch[0].u_chosen = uw;
      batch[0].u_rejected = ul;
      return EvaluateLoss(pol, ref, batch, c, s, RawMargins(pol, batch, c, 0))
          .gradient.SquaredNorm();
    };
    double prev_w = INFINITY, prev_l = -INFINITY;
    for (int k = 0; k < 20; ++k) {
      const double u = 0.1 * k;
      const double gw = norm(u, 0.3);
      const double gl = norm(0.3, u);
      EXPECT_LT(gw, prev_w);
      EXPECT_GT(gl, prev_l);
      prev_w = gw;
      prev_l = gl;
    }
  }
}

TEST(EvaluateLossTest, ReportsArgumentAndMargin) {
  Rng rng(80);
  const SoftmaxPolicy ref = RandomPolicy(rng, 1, 4);
  const SoftmaxPolicy pol = RandomPolicy(rng, 1, 4);
  const auto batch = RandomPairs(rng, 1, 1, 4, 0.5);
  const auto& p = batch[0];
  const double rw = ImplicitReward(pol, ref, 0, p.chosen_id, 0.2);
  const double rl = ImplicitReward(pol, ref, 0, p.rejected_id, 0.2);
  const LossConfig mc = Config(LossKind::kDpo, PenaltyScheme::kMultiplication, 0.2);
  const auto m = EvaluateLoss(pol, ref, batch, mc, Scale(0, 0.7), std::vector<double>{0.0});
  const double arg = std::exp(p.u_chosen / 0.7) * rw - std::exp(p.u_rejected / 0.7) * rl;
  EXPECT_NEAR(m.mean_rho, arg, 1e-14);
  EXPECT_NEAR(m.mean_margin, arg - (rw - rl), 1e-14);
  EXPECT_NEAR(m.stats.mean_uncertainty, 0.5 * (p.u_chosen + p.u_rejected), 1e-15);
  EXPECT_NEAR(m.stats.mean_abs_reward, 0.5 * (std::abs(rw) + std::abs(rl)), 1e-15);
}

TEST(EvaluateLossTest, RejectsBadInput) {
  const SoftmaxPolicy p(1, 3);
  const LossConfig c = Config(LossKind::kDpo, PenaltyScheme::kNone);
  EXPECT_THROW(EvaluateLoss(p, p, {}, c, PenaltyScale{}, {}), std::invalid_argument);
  PreferencePair pair;
  pair.rejected_id = 1;
  const std::vector<PreferencePair> batch = {pair};
  EXPECT_THROW(EvaluateLoss(p, p, batch, c, PenaltyScale{}, {}), std::invalid_argument);
  EXPECT_THROW(EvaluateLoss(p, SoftmaxPolicy(1, 4), batch, c, PenaltyScale{},
                            std::vector<double>{0.0}),
               std::invalid_argument);
}

TEST(RawMarginsTest, PerScheme) {
  Rng rng(81);
  const SoftmaxPolicy p = RandomPolicy(rng, 2, 3);
  auto batch = RandomPairs(rng, 4, 2, 3, 0.5);
  batch[3].u_chosen = batch[3].u_rejected = 0.0;
  const auto none = RawMargins(p, batch, Config(LossKind::kDpo, PenaltyScheme::kNone), 0);
  const auto mult =
      RawMargins(p, batch, Config(LossKind::kDpo, PenaltyScheme::kMultiplication), 0);
  const auto add = RawMargins(p, batch, Config(LossKind::kDpo, PenaltyScheme::kAddition), 0);
  const auto abs = RawMargins(p, batch, Config(LossKind::kDpo, PenaltyScheme::kAbsolute), 0);
  const auto prob =
      RawMargins(p, batch, Config(LossKind::kDpo, PenaltyScheme::kProbability), 0);
  for (size_t i = 0; i < batch.size(); ++i) {
    const auto& q = batch[i];
    EXPECT_EQ(none[i], 0.0);
    EXPECT_EQ(mult[i], 0.0);
    EXPECT_EQ(add[i], q.u_chosen - q.u_rejected);
    EXPECT_EQ(abs[i], q.u_chosen + q.u_rejected);
  }
  EXPECT_EQ(prob[0], MarginProbability(batch[0].score_chosen, batch[0].score_rejected,
                                       batch[0].u_chosen, batch[0].u_rejected)
                         .value);
  EXPECT_EQ(prob[3], 0.0);
  LossConfig pe = Config(LossKind::kDpo, PenaltyScheme::kPredictiveEntropy);
  const auto a = RawMargins(p, batch, pe, 5);
  EXPECT_EQ(a, RawMargins(p, batch, pe, 5));
  for (double m : a) {
    EXPECT_GT(m, 0.0);
    EXPECT_LT(m, 1.0);
  }
  pe.entropy_baseline.reset();
  EXPECT_THROW(RawMargins(p, batch, pe, 5), std::invalid_argument);
}

TEST(LossAndGradTest, UsesIncomingScaleThenUpdatesOnce) {
  Rng rng(82);
  const SoftmaxPolicy ref = RandomPolicy(rng, 2, 4);
  const SoftmaxPolicy pol = RandomPolicy(rng, 2, 4);
  const auto batch = RandomPairs(rng, 8, 2, 4, 0.5);
  LossConfig c = Config(LossKind::kDpo, PenaltyScheme::kAbsolute, 0.3);
  c.lambda_ema = 0.8;
  const ScalingState in = State(0.4, 0.2, 0.3);
  const LossStep step = LossAndGrad(pol, ref, batch, c, in, 0);
  const auto margins = RawMargins(pol, batch, c, 0);
  const auto direct = EvaluateLoss(pol, ref, batch, c,
                                   Scale(ComputeAlpha(c.z, in).value, INFINITY), margins);
  EXPECT_EQ(step.report.loss, direct.loss);
  const auto& st = direct.stats;
  EXPECT_EQ(step.scaling, EmaUpdate(in, st.mean_abs_reward, st.mean_uncertainty,
                                    st.mean_abs_margin, 0.8));
}

TEST(LossAndGradTest, Errors) {
  const SoftmaxPolicy p(1, 3);
  PreferencePair pair;
  pair.rejected_id = 1;
  const std::vector<PreferencePair> batch = {pair};
  EXPECT_THROW(LossAndGrad(p, p, {}, Config(LossKind::kDpo, PenaltyScheme::kNone),
                           ScalingState{}, 0),
               std::invalid_argument);
  EXPECT_THROW(LossAndGrad(p, p, batch, Config(LossKind::kDpo, PenaltyScheme::kAddition),
                           ScalingState{}, 0),
               std::invalid_argument);
  EXPECT_NO_THROW(LossAndGrad(p, p, batch, Config(LossKind::kDpo, PenaltyScheme::kNone),
                              ScalingState{}, 0));
  LossConfig bad = Config(LossKind::kDpo, PenaltyScheme::kNone);
  bad.beta = -1.0;
  EXPECT_THROW(LossAndGrad(p, p, batch, bad, ScalingState{}, 0), std::invalid_argument);
}

TEST(InitialScalingTest, FullDatasetStatistics) {
  Rng rng(83);
  const SoftmaxPolicy ref = RandomPolicy(rng, 2, 4);
  PreferenceDataset d;
  d.pairs = RandomPairs(rng, 30, 2, 4, 0.5);
  const LossConfig c = Config(LossKind::kDpo, PenaltyScheme::kAddition, 0.3);
  const ScalingState s = InitialScaling(ref, ref, d, c, 0);
  EXPECT_TRUE(s.initialized);
  EXPECT_EQ(s.r_bar, 0.0);
  double u = 0.0, m = 0.0;
  for (const auto& p : d.pairs) {
    u += 0.5 * (p.u_chosen + p.u_rejected) / 30;
    m += std::abs(p.u_chosen - p.u_rejected) / 30;
  }
  EXPECT_NEAR(s.u_bar, u, 1e-14);
  EXPECT_NEAR(s.delta_bar, m, 1e-14);
  EXPECT_THROW(InitialScaling(ref, ref, PreferenceDataset{}, c, 0),
               std::invalid_argument);
}

}  // namespace
}  // namespace pessim
