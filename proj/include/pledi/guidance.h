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

#ifndef PLEDI_GUIDANCE_H_
#define PLEDI_GUIDANCE_H_

#include <functional>
#include <vector>

#include "pledi/common.h"
#include "pledi/denoiser.h"
#include "pledi/schedule.h"

namespace pledi {

struct GuidanceWeights {
  double v = 1.2;   // guidance strength
  double u = 0.02;  // loser influence
};

// The combinations are written as base + weight * (base - other), which is
// algebraically (1 + w) base - w other and makes every reduction (w = 0, or
// identical terms) bit-exact.

// (1 + v) cond - v null.
Mat cfg_combine(const Mat& cond, const Mat& null, double v);

// eps_dot = (1 + u) winner - u loser; result = (1 + v) eps_dot - v null.
Mat dual_cfg_combine(const Mat& winner, const Mat& loser, const Mat& null,
                     const GuidanceWeights& weights);

// eps - sqrt(1 - alpha_bar_k) * v * grad.
Mat classifier_guided_combine(const Mat& eps, const Mat& grad,
                              double alpha_bar_k, double v);

Mat cfg_predict(const DenoiserParams& params, const Mat& x_k, int k,
                const Vec& z, double v);

Mat dual_cfg_predict(const DenoiserParams& params, const Mat& x_k, int k,
                     const Vec& z_w, const Vec& z_l,
                     const GuidanceWeights& weights);

using RewardGradient = std::function<Mat(const Mat& x_k)>;

// Unconditional (null-context) prediction shifted along the reward gradient.
Mat classifier_guided_predict(const DenoiserParams& params, const Mat& x_k,
                              int k, const RewardGradient& reward_grad,
                              double v, const NoiseSchedule& schedule);

// Batched predictors for ancestral_sample_batch. Each network evaluation is a
// single DenoiserPass over the whole batch.
BatchNoisePredictor conditional_predictor(const DenoiserParams& params,
                                          const Context& ctx);
BatchNoisePredictor cfg_predictor(const DenoiserParams& params, const Vec& z,
                                  double v);
BatchNoisePredictor dual_cfg_predictor(const DenoiserParams& params,
                                       const Vec& z_w, const Vec& z_l,
                                       const GuidanceWeights& weights);

}  // namespace pledi

#endif  // PLEDI_GUIDANCE_H_
