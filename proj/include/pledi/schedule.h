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

#ifndef PLEDI_SCHEDULE_H_
#define PLEDI_SCHEDULE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "pledi/common.h"

namespace pledi {

// Discrete diffusion schedule. alpha_bar[k] is the exact running product of
// alpha[0..k].
struct NoiseSchedule {
  int K = 0;
  DVector alpha;
  DVector alpha_bar;
};

// Cosine alpha-bar schedule with offset s = 0.008. Per-step alphas are the
// ratios of consecutive alpha-bar values clamped to [0.001, 0.9999]; the stored
// alpha_bar is recomputed from the clamped alphas.
NoiseSchedule make_cosine_schedule(int K);

// tau_k = sqrt(alpha_bar_k) tau_0 + sqrt(1 - alpha_bar_k) epsilon.
Trajectory forward_noise(const Trajectory& tau_0, int k, const Mat& epsilon,
                         const NoiseSchedule& schedule);

// One Markov step q(x_k | x_{k-1}) = N(sqrt(alpha_k) x_{k-1}, (1 - alpha_k) I).
Trajectory forward_step(const Trajectory& x_prev, int k, const Mat& noise,
                        const NoiseSchedule& schedule);

// Posterior variance used by the ancestral sampler at step k (> 0).
double posterior_variance(const NoiseSchedule& schedule, int k);

// Entry pinned to a fixed value after every denoising step.
struct PinnedEntry {
  int row = 0;
  int col = 0;
  double value = 0.0;
};
using Constraints = std::vector<PinnedEntry>;

// Pins every column of row `row` to `values` (e.g. the current observation).
Constraints pin_row(int row, const Vec& values, int first_col = 0);

using NoisePredictor = std::function<Mat(const Mat& x_k, int k)>;
using BatchNoisePredictor =
    std::function<std::vector<Mat>(const std::vector<Mat>& x_k, int k)>;

// Reverse-chain sampling from standard normal noise. Sample i of a batch uses
// the generator stream derive_seed(seed, i), so the single-sample overload is
// identical to sample 0 of a batch with the same seed.
Trajectory ancestral_sample(const NoisePredictor& predict,
                            const NoiseSchedule& schedule, int rows, int cols,
                            std::uint64_t seed,
                            const Constraints& constraints = {});

std::vector<Trajectory> ancestral_sample_batch(
    const BatchNoisePredictor& predict, const NoiseSchedule& schedule,
    int rows, int cols, int n, std::uint64_t seed,
    const Constraints& constraints = {});

}  // namespace pledi

#endif  // PLEDI_SCHEDULE_H_
