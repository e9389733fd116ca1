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


#include "pledi/pipeline.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pledi/adam.h"

namespace pledi {

PretrainResult pretrain(const DenoiserConfig& config,
                        const NoiseSchedule& schedule,
                        const std::vector<FullTrajectory>& corpus,
                        const Normalizer& normalizer,
                        const PretrainOptions& options, std::uint64_t seed,
                        const TrainProgress& progress) {
  config.validate();
  if (corpus.empty()) throw std::invalid_argument("pretrain: empty corpus");
  if (options.n_updates < 1 || options.batch_size < 1)
    throw std::invalid_argument("pretrain: n_updates and batch_size must be >= 1");
  if (!(options.context_dropout_p >= 0 && options.context_dropout_p <= 1))
    throw std::invalid_argument("pretrain: context_dropout_p must lie in [0, 1]");
  const int L = corpus[0].length();
  const int H = config.horizon, C = config.channels();
  for (const auto& e : corpus)
    if (e.length() != L || e.matrix().cols() != C)
      throw std::invalid_argument(
          "pretrain: corpus episodes must all be " + std::to_string(L) + "x" +
          std::to_string(C) + " (episode " + std::to_string(e.episode_id) + ")");
  if (normalizer.min().size() != C)
    throw std::invalid_argument("pretrain: normalizer does not match the corpus");
  const auto [win_begin, win_end] = hidden_window(L);
  if (win_end - win_begin < H)
    throw std::invalid_argument(
        "pretrain: masked window of " + std::to_string(win_end - win_begin) +
        " timesteps is shorter than the horizon " + std::to_string(H));

  PretrainResult result;
  result.params = init_params(config);
  if (options.warm_start) {
    if (!(options.warm_start->layout == result.params.layout))
      throw std::invalid_argument("pretrain: warm start layout does not match");
    result.params.flat = options.warm_start->flat;
  }
  result.mask = central_mask(L);
  DenoiserParams& params = result.params;

  std::vector<Mat> episodes;
  episodes.reserve(corpus.size());
  for (const auto& e : corpus) episodes.push_back(normalizer.normalize(e.matrix()));

  AdamOptions opts;
  opts.learning_rate = options.learning_rate;
  opts.grad_clip_norm = options.grad_clip_norm;
  Adam adam(params.flat.size(), opts);

  std::vector<std::size_t> mapper_offsets;
  for (const TensorSpec& t : params.layout.tensors())
    if (t.name.rfind("mapper.", 0) == 0)
      for (std::size_t i = 0; i < t.size(); ++i)
        mapper_offsets.push_back(t.offset + i);

  Rng rng = make_rng(seed, 7);
  std::uniform_int_distribution<int> pick_episode(
      0, static_cast<int>(episodes.size()) - 1);
  std::uniform_int_distribution<int> pick_start(win_begin, win_end - H);
  std::uniform_int_distribution<int> pick_k(0, schedule.K - 1);
  std::bernoulli_distribution drop(options.context_dropout_p);

  const int B = options.batch_size;
  std::vector<int> ep(B);
  std::vector<Mat> eps(B), noisy(B);
  std::vector<Vec> ctx(B);
  std::vector<char> dropped(B);
  std::vector<DenoiseItem> items(B);
  result.loss_history.reserve(options.n_updates);
  for (int step = 0; step < options.n_updates; ++step) {
    const MapperParams mapper = extract_mapper(params, result.mask);
    for (int b = 0; b < B; ++b) {
      ep[b] = pick_episode(rng);
      const int start = pick_start(rng);
      const int k = pick_k(rng);
      eps[b] = randn(rng, H, C);
      dropped[b] = drop(rng);
      noisy[b] = forward_noise(episodes[ep[b]].middleRows(start, H), k, eps[b],
                               schedule);
      if (!dropped[b]) ctx[b] = map_trajectory(mapper, episodes[ep[b]]).z;
      items[b] = {&noisy[b], k, dropped[b] ? nullptr : &ctx[b]};
    }
    DenoiserPass pass(params, items);
    Mat d_out(B * H, C);
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
      Mat g;
      loss += denoising_mse(eps[b], pass.output(b), &g);
      d_out.middleRows(b * H, H) = g / B;
    }
    loss /= B;
    if (!std::isfinite(loss)) throw DivergenceError("pretrain: non-finite loss", step);
    auto grads = pass.backward(d_out, true);
    for (int b = 0; b < B; ++b) {
      if (dropped[b]) continue;
      const MapperGrads mg =
          map_trajectory_vjp(mapper, episodes[ep[b]], grads.ctx[b]);
      accumulate_mapper_grads(mg, params.layout, grads.params);
    }
    for (std::size_t off : mapper_offsets)
      result.max_mapper_grad =
          std::max(result.max_mapper_grad, std::abs(grads.params[off]));
    adam.step(params.flat, grads.params);
    result.loss_history.push_back(loss);
    if (progress) progress(step + 1, loss);
  }
  return result;
}

std::vector<Mat> sample_segments(const BatchNoisePredictor& predict,
                                 const NoiseSchedule& schedule,
                                 const Normalizer& normalizer, int horizon,
                                 int n, std::uint64_t seed,
                                 const Constraints& constraints) {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  const int C = static_cast<int>(normalizer.min().size());
  std::vector<Mat> out;
  for (const Mat& x : ancestral_sample_batch(predict, schedule, horizon, C, n,
                                             seed, constraints))
    out.push_back(normalizer.denormalize(x));
  return out;
}

std::vector<Mat> sample_base(const DenoiserParams& params,
                             const NoiseSchedule& schedule,
                             const Normalizer& normalizer, int n,
                             std::uint64_t seed) {
  return sample_segments(conditional_predictor(params, std::nullopt), schedule,
                         normalizer, params.config.horizon, n, seed);
}

std::vector<Mat> sample_adapted(const DenoiserParams& params,
                                const NoiseSchedule& schedule,
                                const Normalizer& normalizer, const Vec& z_w,
                                const Vec& z_l, const GuidanceWeights& weights,
                                int n, std::uint64_t seed) {
  return sample_segments(dual_cfg_predictor(params, z_w, z_l, weights),
                         schedule, normalizer, params.config.horizon, n, seed);
}

std::uint64_t label_set_hash(const std::vector<PreferenceLabel>& labels) {
  std::string canon;
  for (const PreferenceLabel& l : labels)
    canon += l.pair_id + ":" + to_string(l.winner) + ";";
  return fnv1a64(canon);
}

}  // namespace pledi
