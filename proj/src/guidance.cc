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

#include "pledi/guidance.h"

#include <cmath>
#include <stdexcept>

namespace pledi {
namespace {

std::vector<Mat> run_batch(const DenoiserParams& params,
                           const std::vector<Mat>& xs, int k, const Vec* ctx) {
  std::vector<DenoiseItem> items;
  items.reserve(xs.size());
  for (const Mat& x : xs) items.push_back({&x, k, ctx});
  DenoiserPass pass(params, items);
  std::vector<Mat> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    out[i] = pass.output(static_cast<int>(i));
  return out;
}

}  // namespace

Mat cfg_combine(const Mat& cond, const Mat& null, double v) {
  return cond + v * (cond - null);
}

Mat dual_cfg_combine(const Mat& winner, const Mat& loser, const Mat& null,
                     const GuidanceWeights& weights) {
  const Mat eps_dot = winner + weights.u * (winner - loser);
  return cfg_combine(eps_dot, null, weights.v);
}

Mat classifier_guided_combine(const Mat& eps, const Mat& grad,
                              double alpha_bar_k, double v) {
  return eps - (std::sqrt(1.0 - alpha_bar_k) * v) * grad;
}

Mat cfg_predict(const DenoiserParams& params, const Mat& x_k, int k,
                const Vec& z, double v) {
  return cfg_combine(denoise(params, x_k, k, z),
                     denoise(params, x_k, k, std::nullopt), v);
}

Mat dual_cfg_predict(const DenoiserParams& params, const Mat& x_k, int k,
                     const Vec& z_w, const Vec& z_l,
                     const GuidanceWeights& weights) {
  return dual_cfg_combine(denoise(params, x_k, k, z_w),
                          denoise(params, x_k, k, z_l),
                          denoise(params, x_k, k, std::nullopt), weights);
}

Mat classifier_guided_predict(const DenoiserParams& params, const Mat& x_k,
                              int k, const RewardGradient& reward_grad,
                              double v, const NoiseSchedule& schedule) {
  const Mat eps = denoise(params, x_k, k, std::nullopt);
  const Mat grad = reward_grad(x_k);
  if (grad.rows() != x_k.rows() || grad.cols() != x_k.cols())
    throw std::invalid_argument("classifier_guided_predict: gradient shape");
  if (!grad.allFinite())
    throw DivergenceError("classifier_guided_predict: non-finite gradient", k);
  return classifier_guided_combine(eps, grad, schedule.alpha_bar.at(k), v);
}

BatchNoisePredictor conditional_predictor(const DenoiserParams& params,
                                          const Context& ctx) {
  return [&params, ctx](const std::vector<Mat>& xs, int k) {
    return run_batch(params, xs, k, ctx ? &*ctx : nullptr);
  };
}

BatchNoisePredictor cfg_predictor(const DenoiserParams& params, const Vec& z,
                                  double v) {
  return [&params, z, v](const std::vector<Mat>& xs, int k) {
    std::vector<Mat> cond = run_batch(params, xs, k, &z);
    if (v == 0.0) return cond;
    const std::vector<Mat> null = run_batch(params, xs, k, nullptr);
    for (std::size_t i = 0; i < xs.size(); ++i)
      cond[i] = cfg_combine(cond[i], null[i], v);
    return cond;
  };
}

BatchNoisePredictor dual_cfg_predictor(const DenoiserParams& params,
                                       const Vec& z_w, const Vec& z_l,
                                       const GuidanceWeights& weights) {
  return [&params, z_w, z_l, weights](const std::vector<Mat>& xs, int k) {
    const std::vector<Mat> w = run_batch(params, xs, k, &z_w);
    const std::vector<Mat> l = run_batch(params, xs, k, &z_l);
    const std::vector<Mat> null = run_batch(params, xs, k, nullptr);
    std::vector<Mat> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
      out[i] = dual_cfg_combine(w[i], l[i], null[i], weights);
    return out;
  };
}

}  // namespace pledi
