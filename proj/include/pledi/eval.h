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


#ifndef PLEDI_EVAL_H_
#define PLEDI_EVAL_H_

#include <cstdint>
#include <string>
#include <vector>

#include "pledi/common.h"
#include "pledi/envdata.h"
#include "pledi/ple.h"

namespace pledi {

// 100 (score - random) / (expert - random).
double normalized_score(double score, double random_score, double expert_score);

// Pairs a[i] with b[pi(i)] where pi is a seeded random involution, and
// returns the fraction of pairs whose a-side has the higher oracle reward
// (ties, |diff| < 1e-9, count one half). Because pi is an involution,
// win_rate(a, b, s) + win_rate(b, a, s) = 1. Inputs are in environment units
// and must have equal, nonzero counts.
double win_rate(const std::vector<Mat>& a, const std::vector<Mat>& b,
                const OracleSpec& oracle, std::uint64_t seed);

double mean_reward(const std::vector<Mat>& segments, const OracleSpec& oracle);

struct LatentProbeResult {
  double probe_accuracy = 0.0;  // held-out accuracy of the mode classifier
  Mat embeddings;               // n x d_e
  Mat pca;                      // n x 2
  std::vector<int> mode_ids;
  DVector rewards;  // oracle reward of each episode
};

// Embeds every episode with the mapper, fits a multinomial logistic probe for
// mode_id on standardized embeddings with a seeded 80/20 split, and projects
// the embeddings on their top two principal axes (each axis signed so that
// its largest-magnitude loading is positive). Rejects modes with fewer than
// 10 episodes.
LatentProbeResult latent_probe(const MapperParams& mapper,
                               const std::vector<FullTrajectory>& corpus,
                               const Normalizer& normalizer,
                               const OracleSpec& oracle, std::uint64_t seed);

// Multinomial logistic regression; returns held-out accuracy.
double fit_linear_probe(const Mat& features, const std::vector<int>& labels,
                        const std::vector<int>& train_idx,
                        const std::vector<int>& test_idx);

// Rows of `x` projected on the top-2 principal axes.
Mat pca_2d(const Mat& x);

}  // namespace pledi

#endif  // PLEDI_EVAL_H_
