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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "pledi/adam.h"
#include "pledi/ple.h"

namespace pledi {

InversionLoss inversion_loss(const DenoiserParams& frozen,
                             const NoiseSchedule& schedule,
                             std::span<const InversionTerm> terms,
                             const Vec& z_w, const Vec& z_l) {
  const int B = static_cast<int>(terms.size());
  if (B == 0) throw std::invalid_argument("inversion_loss: empty batch");
  const int H = frozen.config.horizon, C = frozen.config.channels();
  std::vector<Mat> noisy(2 * B);
  std::vector<DenoiseItem> items(2 * B);
  for (int j = 0; j < B; ++j) {
    const InversionTerm& t = terms[j];
    noisy[j] = forward_noise(*t.winner, t.k, t.epsilon, schedule);
    noisy[B + j] = forward_noise(*t.loser, t.k, t.epsilon, schedule);
    items[j] = {&noisy[j], t.k, &z_w};
    items[B + j] = {&noisy[B + j], t.k, &z_l};
  }
  DenoiserPass pass(frozen, items);
  InversionLoss out;
  Mat d_out(2 * B * H, C);
  for (int i = 0; i < 2 * B; ++i) {
    Mat g;
    out.loss += denoising_mse(terms[i % B].epsilon, pass.output(i), &g);
    d_out.block(i * H, 0, H, C) = g / B;
  }
  out.loss /= B;
  const auto grads = pass.backward(d_out, /*want_param_grads=*/false);
  out.grad_w = Vec::Zero(z_w.size());
  out.grad_l = Vec::Zero(z_l.size());
  for (int j = 0; j < B; ++j) {
    out.grad_w += grads.ctx[j];
    out.grad_l += grads.ctx[B + j];
  }
  return out;
}

InversionResult invert_preferences(const DenoiserParams& frozen,
                                   const NoiseSchedule& schedule,
                                   std::span<const LabeledPair> labels,
                                   const InversionConfig& config,
                                   const InversionProgress& progress) {
  if (config.n_adapt <= 0)
    throw std::invalid_argument("invert_preferences: n_adapt must be positive");
  if (labels.empty())
    throw std::invalid_argument("invert_preferences: no labels");
  if (config.learning_rate <= 0)
    throw std::invalid_argument("invert_preferences: learning_rate must be positive");
  const int H = frozen.config.horizon, C = frozen.config.channels();
  const int d_e = frozen.config.ple_dim;
  for (const LabeledPair& p : labels)
    if (p.winner.rows() != H || p.winner.cols() != C || p.loser.rows() != H ||
        p.loser.cols() != C)
      throw std::invalid_argument("invert_preferences: segment shape must be " +
                                  std::to_string(H) + "x" + std::to_string(C));
  const int batch = config.batch_size > 0
                        ? config.batch_size
                        : std::min<int>(16, static_cast<int>(labels.size()));

  InversionResult result;
  auto initial = [&](const std::optional<Vec>& given, std::uint64_t stream) {
    if (given) {
      if (given->size() != d_e)
        throw std::invalid_argument("invert_preferences: initial PLE dimension");
      return project_to_bounds(*given);
    }
    return sample_prior(config.prior, d_e, derive_seed(config.seed, stream)).z;
  };
  Vec z_w = initial(config.init_winner, 1);
  Vec z_l = initial(config.init_loser, 2);
  result.z_w_init = z_w;
  result.z_l_init = z_l;

  const double checksum_before =
      std::accumulate(frozen.flat.begin(), frozen.flat.end(), 0.0);

  AdamOptions opts;
  opts.learning_rate = config.learning_rate;
  Adam adam(2 * static_cast<std::size_t>(d_e), opts);
  Vec packed(2 * d_e), packed_grad(2 * d_e);

  Rng rng = make_rng(config.seed, 3);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(labels.size()) - 1);
  std::uniform_int_distribution<int> step_k(0, schedule.K - 1);
  std::vector<InversionTerm> terms(batch);
  result.loss_history.reserve(config.n_adapt);
  for (int step = 0; step < config.n_adapt; ++step) {
    for (int j = 0; j < batch; ++j) {
      const LabeledPair& p = labels[pick(rng)];
      terms[j].winner = &p.winner;
      terms[j].loser = &p.loser;
      terms[j].k = step_k(rng);
      terms[j].epsilon = randn(rng, H, C);
    }
    const InversionLoss l = inversion_loss(frozen, schedule, terms, z_w, z_l);
    if (!std::isfinite(l.loss) || !l.grad_w.allFinite() || !l.grad_l.allFinite())
      throw DivergenceError("invert_preferences: non-finite loss", step);
    packed << z_w, z_l;
    packed_grad << l.grad_w, l.grad_l;
    adam.step(std::span<double>(packed.data(), packed.size()),
              std::span<const double>(packed_grad.data(), packed_grad.size()));
    z_w = project_to_bounds(packed.head(d_e));
    z_l = project_to_bounds(packed.tail(d_e));
    result.loss_history.push_back(l.loss);
    for (int s : config.snapshot_steps)
      if (s == step + 1) result.snapshots.push_back({s, z_w, z_l});
    if (progress && !progress(step + 1, l.loss)) break;
  }

  const double checksum_after =
      std::accumulate(frozen.flat.begin(), frozen.flat.end(), 0.0);
  if (checksum_before != checksum_after)
    throw std::logic_error("invert_preferences: frozen parameters changed");

  result.z_w = {z_w, PleKind::kWinner};
  result.z_l = {z_l, PleKind::kLoser};
  return result;
}

}  // namespace pledi
