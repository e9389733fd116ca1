// Copyright 2026 The PLEDI Authors
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


#ifndef PLEDI_BASELINES_H_
#define PLEDI_BASELINES_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pledi/common.h"
#include "pledi/denoiser.h"
#include "pledi/envdata.h"
#include "pledi/lora.h"
#include "pledi/schedule.h"

namespace pledi {

// ---------------------------------------------------------------------------
// Bradley-Terry reward model: flattened H x (S+A) segment -> two SiLU layers
// -> scalar. Operates on normalized segments.

struct RewardModelParams {
  int horizon = 0;
  int channels = 0;
  int hidden = 64;
  ParamLayout layout;  // l1.w, l1.b, l2.w, l2.b, out.w, out.b
  DVector flat;
};

RewardModelParams init_reward_model(int horizon, int channels, int hidden,
                                    std::uint64_t seed);

double reward(const RewardModelParams& rm, const Mat& segment);

// Rewards of many segments and, optionally, d reward / d segment for each.
DVector reward_batch(const RewardModelParams& rm,
                                 const std::vector<Mat>& segments,
                                 std::vector<Mat>* input_grads = nullptr);

// -log sigmoid(r(winner) - r(loser)); `grad` receives d loss / d params.
double bt_loss(const RewardModelParams& rm, const Mat& winner, const Mat& loser,
               DVector* grad = nullptr);

struct RewardModelConfig {
  int hidden = 64;
  int n_updates = 2000;
  int batch_size = 32;  // clipped to the number of training pairs
  double learning_rate = 1e-3;
  double holdout_fraction = 0.2;  // no holdout below 5 labels
  std::uint64_t seed = 0;
};

struct RewardTrainResult {
  RewardModelParams model;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;  // NaN without a holdout split
  DVector loss_history;
};

// Fraction of pairs with r(winner) > r(loser).
double pairwise_accuracy(const RewardModelParams& rm,
                         std::span<const LabeledPair> pairs);

RewardTrainResult train_reward_model(std::span<const LabeledPair> labels,
                                     const RewardModelConfig& config);

// Null-context noise prediction shifted along the reward gradient at every
// step (the reward is evaluated on the noisy sample).
BatchNoisePredictor reward_guided_predictor(const DenoiserParams& params,
                                            const RewardModelParams& rm,
                                            const NoiseSchedule& schedule,
                                            double v);

// Normalized-unit samples; sample i uses stream i of `seed`.
std::vector<Trajectory> guided_sample(const DenoiserParams& frozen,
                                      const RewardModelParams& rm,
                                      const NoiseSchedule& schedule, double v,
                                      int n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Preference finetuning of the denoiser itself.
//
// Per pair, with (k, epsilon) shared by winner and loser and the null context
// as conditioning, l(x) is the denoising error of x. The loss is
//   softplus(beta * [(l_theta(w) - l_ref(w)) - (l_theta(l) - l_ref(l))])
// averaged over the batch, where ref is the frozen starting model.

struct FinetuneConfig {
  int n_adapt = 5000;
  int batch_size = 0;  // 0 selects min(16, number of labels)
  double learning_rate = 1e-4;
  double beta = 5000.0;
  std::uint64_t seed = 0;
  int lora_rank = 8;
  std::vector<std::string> lora_targets = {"blk*.film.w"};
};

// Called after every update with the current effective parameters; returning
// false stops the loop.
using FinetuneObserver =
    std::function<bool(int step, double loss, const DenoiserParams& current)>;

struct PreferenceLossTerm {
  const Mat* winner;
  const Mat* loser;
  int k;
  Mat epsilon;
};

struct PreferenceLoss {
  double loss = 0.0;
  DVector grad;  // d loss / d params of `model`
};

PreferenceLoss preference_loss(const DenoiserParams& model,
                               const DenoiserParams& reference,
                               const NoiseSchedule& schedule,
                               std::span<const PreferenceLossTerm> terms,
                               double beta);

struct FinetuneResult {
  DenoiserParams params;  // effective parameters (merged for LoRA)
  LoraAdapters adapters;  // empty for full finetuning
  DVector loss_history;
  int updates = 0;
};

// Every parameter trainable. Empty labels perform zero updates.
FinetuneResult finetune_full(const DenoiserParams& base,
                             const NoiseSchedule& schedule,
                             std::span<const LabeledPair> labels,
                             const FinetuneConfig& config,
                             const FinetuneObserver& observer = {});

// Only the low-rank factors of the selected weights are trainable.
FinetuneResult finetune_lora(const DenoiserParams& base,
                             const NoiseSchedule& schedule,
                             std::span<const LabeledPair> labels,
                             const FinetuneConfig& config,
                             const FinetuneObserver& observer = {});

}  // namespace pledi

#endif  // PLEDI_BASELINES_H_
