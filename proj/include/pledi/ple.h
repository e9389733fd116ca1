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

#ifndef PLEDI_PLE_H_
#define PLEDI_PLE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pledi/common.h"
#include "pledi/denoiser.h"
#include "pledi/envdata.h"
#include "pledi/schedule.h"

namespace pledi {

enum class PleKind { kPlaceholder, kWinner, kLoser, kNull };

// Preference latent embedding; every entry lies in (0, 1).
struct Ple {
  Vec z;
  PleKind kind = PleKind::kPlaceholder;
};

inline constexpr double kPleMargin = 1e-4;

// Clamps every entry into [1e-4, 1 - 1e-4].
Vec project_to_bounds(const Vec& z);

// ---------------------------------------------------------------------------
// Trajectory mapper f: mask -> per-timestep feed-forward -> mean -> sigmoid.

struct MapperParams {
  Mat hidden_w;  // C x M, empty for a purely affine mapper
  Vec hidden_b;  // M
  Mat proj_w;    // (M or C) x d_e
  Vec proj_b;    // d_e
  std::vector<std::uint8_t> mask;  // length L, 1 = visible

  bool has_hidden() const { return hidden_w.size() > 0; }
  int ple_dim() const { return static_cast<int>(proj_b.size()); }
  int visible_count() const;
  // Rejects a mask without visible timesteps and inconsistent shapes.
  void validate() const;
};

// Hides a contiguous window of ceil(L/2) central timesteps; training
// sub-trajectories are drawn from inside that window.
std::vector<std::uint8_t> central_mask(int L);
// [begin, end) of the hidden window of central_mask(L).
std::pair<int, int> hidden_window(int L);

MapperParams extract_mapper(const DenoiserParams& params,
                            std::vector<std::uint8_t> mask);

Ple map_trajectory(const MapperParams& mapper, const Mat& tau_full);

struct MapperGrads {
  Mat hidden_w;
  Vec hidden_b;
  Mat proj_w;
  Vec proj_b;
  Mat tau_full;
};

// Reverse-mode derivative of map_trajectory given d loss / d z.
MapperGrads map_trajectory_vjp(const MapperParams& mapper, const Mat& tau_full,
                               const Vec& dz);

// Accumulates mapper gradients into a denoiser-layout gradient vector.
void accumulate_mapper_grads(const MapperGrads& g, const ParamLayout& layout,
                             DVector& flat_grad);

// ---------------------------------------------------------------------------
// Priors and preference inversion.

enum class PriorKind { kUniform01, kGaussianHalf, kFixedHalf };

struct PriorSpec {
  PriorKind kind = PriorKind::kUniform01;

  std::string name() const;
  static PriorSpec parse(const std::string& text);
};

// Uniform[0,1], N(0.5, 0.5/3) or the constant 0.5, clamped to the margin.
Ple sample_prior(const PriorSpec& prior, int d_e, std::uint64_t seed);

struct InversionConfig {
  int n_adapt = 5000;
  int batch_size = 0;  // 0 selects min(16, number of labels)
  double learning_rate = 0.01;
  PriorSpec prior;
  std::uint64_t seed = 0;
  // Optional explicit starting points; otherwise drawn from the prior.
  std::optional<Vec> init_winner;
  std::optional<Vec> init_loser;
  // Update counts after which (z_w, z_l) is recorded, for n_adapt sweeps.
  std::vector<int> snapshot_steps;
};

struct PleSnapshot {
  int step = 0;
  Vec z_w;
  Vec z_l;
};

struct InversionResult {
  Ple z_w;
  Ple z_l;
  Vec z_w_init;
  Vec z_l_init;
  DVector loss_history;
  std::vector<PleSnapshot> snapshots;  // in increasing step order
};

// Called after every update; returning false stops the loop early.
using InversionProgress = std::function<bool(int step, double loss)>;

// Optimizes the winner/loser embeddings against the frozen denoiser. Each
// update draws batch_size labelled pairs with replacement, one (k, epsilon)
// per pair shared by its winner and loser, and takes an Adam step on both
// embeddings followed by projection into the bounds.
InversionResult invert_preferences(const DenoiserParams& frozen,
                                   const NoiseSchedule& schedule,
                                   std::span<const LabeledPair> labels,
                                   const InversionConfig& config,
                                   const InversionProgress& progress = {});

// Joint inversion loss at fixed (k, epsilon) draws and its gradients; exposed
// for tests of the separability of the two terms.
struct InversionTerm {
  const Mat* winner;
  const Mat* loser;
  int k;
  Mat epsilon;
};
struct InversionLoss {
  double loss = 0.0;
  Vec grad_w;
  Vec grad_l;
};
InversionLoss inversion_loss(const DenoiserParams& frozen,
                             const NoiseSchedule& schedule,
                             std::span<const InversionTerm> terms,
                             const Vec& z_w, const Vec& z_l);

}  // namespace pledi

#endif  // PLEDI_PLE_H_
