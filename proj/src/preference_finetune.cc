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
#include <stdexcept>

#include "pledi/adam.h"
#include "pledi/baselines.h"

namespace pledi {
namespace {

std::vector<Mat> predictions(const DenoiserPass& pass) {
  std::vector<Mat> out(pass.batch());
  for (int i = 0; i < pass.batch(); ++i) out[i] = pass.output(i);
  return out;
}

// Shared minibatch sampling of the two finetuning variants.
class TermSampler {
 public:
  TermSampler(std::span<const LabeledPair> labels, const NoiseSchedule& schedule,
              int horizon, int channels, int batch, std::uint64_t seed)
      : labels_(labels),
        rng_(make_rng(seed, 0xdb0)),
        pick_(0, static_cast<int>(labels.size()) - 1),
        pick_k_(0, schedule.K - 1),
        horizon_(horizon),
        channels_(channels),
        terms_(batch) {}

  std::span<const PreferenceLossTerm> next() {
    for (PreferenceLossTerm& t : terms_) {
      const LabeledPair& p = labels_[pick_(rng_)];
      t.winner = &p.winner;
      t.loser = &p.loser;
      t.k = pick_k_(rng_);
      t.epsilon = randn(rng_, horizon_, channels_);
    }
    return terms_;
  }

 private:
  std::span<const LabeledPair> labels_;
  Rng rng_;
  std::uniform_int_distribution<int> pick_, pick_k_;
  int horizon_, channels_;
  std::vector<PreferenceLossTerm> terms_;
};

void check_labels(const DenoiserParams& base, std::span<const LabeledPair> labels) {
  const int H = base.config.horizon, C = base.config.channels();
  for (const LabeledPair& p : labels)
    if (p.winner.rows() != H || p.winner.cols() != C || p.loser.rows() != H ||
        p.loser.cols() != C)
      throw std::invalid_argument("finetune: segment shape must be " +
                                  std::to_string(H) + "x" + std::to_string(C));
}

int batch_for(const FinetuneConfig& config, std::size_t n_labels) {
  return config.batch_size > 0 ? config.batch_size
                               : std::min<int>(16, static_cast<int>(n_labels));
}

}  // namespace

PreferenceLoss preference_loss(const DenoiserParams& model,
                               const DenoiserParams& reference,
                               const NoiseSchedule& schedule,
                               std::span<const PreferenceLossTerm> terms,
                               double beta) {
  const int B = static_cast<int>(terms.size());
  if (B == 0) throw std::invalid_argument("preference_loss: empty batch");
  if (!(model.layout == reference.layout))
    throw std::invalid_argument("preference_loss: model/reference layouts differ");
  const int H = model.config.horizon, C = model.config.channels();
  std::vector<Mat> noisy(2 * B);
  std::vector<DenoiseItem> items(2 * B);
  for (int j = 0; j < B; ++j) {
    const PreferenceLossTerm& t = terms[j];
    noisy[j] = forward_noise(*t.winner, t.k, t.epsilon, schedule);
    noisy[B + j] = forward_noise(*t.loser, t.k, t.epsilon, schedule);
    items[j] = {&noisy[j], t.k, nullptr};
    items[B + j] = {&noisy[B + j], t.k, nullptr};
  }
  const DenoiserPass pass(model, items);
  const std::vector<Mat> ref = predictions(DenoiserPass(reference, items));

  PreferenceLoss out;
  Mat d_out(2 * B * H, C);
  for (int j = 0; j < B; ++j) {
    const Mat& eps = terms[j].epsilon;
    Mat gw, gl;
    const double lw = denoising_mse(eps, pass.output(j), &gw);
    const double ll = denoising_mse(eps, pass.output(B + j), &gl);
    const double rw = denoising_mse(eps, ref[j]);
    const double rl = denoising_mse(eps, ref[B + j]);
    const double delta = (lw - rw) - (ll - rl);
    out.loss += softplus(beta * delta);
    const double coef = beta * sigmoid(beta * delta) / B;
    d_out.middleRows(j * H, H) = coef * gw;
    d_out.middleRows((B + j) * H, H) = -coef * gl;
  }
  out.loss /= B;
  out.grad = pass.backward(d_out, true).params;
  return out;
}

FinetuneResult finetune_full(const DenoiserParams& base,
                             const NoiseSchedule& schedule,
                             std::span<const LabeledPair> labels,
                             const FinetuneConfig& config,
                             const FinetuneObserver& observer) {
  FinetuneResult out;
  out.params = base;
  if (labels.empty()) return out;
  if (config.n_adapt < 1)
    throw std::invalid_argument("finetune_full: n_adapt must be >= 1");
  check_labels(base, labels);
  TermSampler sampler(labels, schedule, base.config.horizon,
                      base.config.channels(), batch_for(config, labels.size()),
                      config.seed);
  AdamOptions opts;
  opts.learning_rate = config.learning_rate;
  Adam adam(base.flat.size(), opts);
  for (int step = 0; step < config.n_adapt; ++step) {
    const PreferenceLoss l =
        preference_loss(out.params, base, schedule, sampler.next(), config.beta);
    if (!std::isfinite(l.loss))
      throw DivergenceError("finetune_full: non-finite loss", step);
    adam.step(out.params.flat, l.grad);
    out.loss_history.push_back(l.loss);
    ++out.updates;
    if (observer && !observer(step + 1, l.loss, out.params)) break;
  }
  return out;
}

FinetuneResult finetune_lora(const DenoiserParams& base,
                             const NoiseSchedule& schedule,
                             std::span<const LabeledPair> labels,
                             const FinetuneConfig& config,
                             const FinetuneObserver& observer) {
  FinetuneResult out;
  out.adapters = init_lora(base, lora_targets(base.layout, config.lora_targets),
                           config.lora_rank, config.seed);
  out.params = base;
  if (labels.empty()) return out;
  if (config.n_adapt < 1)
    throw std::invalid_argument("finetune_lora: n_adapt must be >= 1");
  check_labels(base, labels);
  TermSampler sampler(labels, schedule, base.config.horizon,
                      base.config.channels(), batch_for(config, labels.size()),
                      config.seed);
  AdamOptions opts;
  opts.learning_rate = config.learning_rate;
  DVector factors = flatten_lora(out.adapters);
  Adam adam(factors.size(), opts);
  DVector factor_grads;
  for (int step = 0; step < config.n_adapt; ++step) {
    const DenoiserParams merged = merge_lora(base, out.adapters);
    const PreferenceLoss l =
        preference_loss(merged, base, schedule, sampler.next(), config.beta);
    if (!std::isfinite(l.loss))
      throw DivergenceError("finetune_lora: non-finite loss", step);
    lora_factor_grads(out.adapters, base, l.grad, factor_grads);
    adam.step(factors, factor_grads);
    unflatten_lora(factors, out.adapters);
    out.loss_history.push_back(l.loss);
    ++out.updates;
    if (observer && !observer(step + 1, l.loss, merge_lora(base, out.adapters)))
      break;
  }
  out.params = merge_lora(base, out.adapters);
  return out;
}

}  // namespace pledi
