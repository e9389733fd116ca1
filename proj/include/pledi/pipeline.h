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


#ifndef PLEDI_PIPELINE_H_
#define PLEDI_PIPELINE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pledi/common.h"
#include "pledi/denoiser.h"
#include "pledi/envdata.h"
#include "pledi/guidance.h"
#include "pledi/ple.h"
#include "pledi/schedule.h"

namespace pledi {

struct PretrainOptions {
  int n_updates = 50000;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double context_dropout_p = 0.25;
  double grad_clip_norm = 1.0;
  // Starting point instead of init_params(config); must match its layout.
  std::optional<DenoiserParams> warm_start;
};

struct PretrainResult {
  DenoiserParams params;
  std::vector<std::uint8_t> mask;
  DVector loss_history;
  // Largest |d loss / d w| over every mapper weight and every update.
  double max_mapper_grad = 0.0;
};

using TrainProgress = std::function<void(int step, double loss)>;

// Joint training of the denoiser and the trajectory mapper. Each batch item
// is an episode drawn uniformly with a sub-trajectory drawn from inside the
// masked window; its context is the mapper output for the whole (masked)
// episode, replaced by the null context with probability context_dropout_p.
PretrainResult pretrain(const DenoiserConfig& config,
                        const NoiseSchedule& schedule,
                        const std::vector<FullTrajectory>& corpus,
                        const Normalizer& normalizer,
                        const PretrainOptions& options, std::uint64_t seed,
                        const TrainProgress& progress = {});

// Runs the batched sampler in chunks and maps the results back to
// environment units.
std::vector<Mat> sample_segments(const BatchNoisePredictor& predict,
                                 const NoiseSchedule& schedule,
                                 const Normalizer& normalizer, int horizon,
                                 int n, std::uint64_t seed,
                                 const Constraints& constraints = {});

// Null-context samples of the unadapted model.
std::vector<Mat> sample_base(const DenoiserParams& params,
                             const NoiseSchedule& schedule,
                             const Normalizer& normalizer, int n,
                             std::uint64_t seed);

// Dual-guided samples from adapted winner/loser embeddings.
std::vector<Mat> sample_adapted(const DenoiserParams& params,
                                const NoiseSchedule& schedule,
                                const Normalizer& normalizer, const Vec& z_w,
                                const Vec& z_l, const GuidanceWeights& weights,
                                int n, std::uint64_t seed);

// Order-sensitive hash of a label set (pair ids and winners).
std::uint64_t label_set_hash(const std::vector<PreferenceLabel>& labels);

}  // namespace pledi

#endif  // PLEDI_PIPELINE_H_
