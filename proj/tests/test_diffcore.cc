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


#include <numeric>

#include "doctest.h"
#include "pledi/denoiser.h"
#include "pledi/ple.h"
#include "pledi/schedule.h"
#include "test_util.h"

namespace pledi {
namespace {

using testing::central_difference;
using testing::pick_indices;
using testing::rel_err;
using testing::tiny_config;

std::vector<TrainItem> random_batch(const DenoiserConfig& cfg, int n, int K,
                                    std::uint64_t seed, bool with_ctx) {
  Rng rng(seed);
  std::uniform_int_distribution<int> k(0, K - 1);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::vector<TrainItem> batch(n);
  for (int i = 0; i < n; ++i) {
    batch[i].tau_0 = randn(rng, cfg.horizon, cfg.channels()) * 0.5;
    batch[i].k = k(rng);
    batch[i].epsilon = randn(rng, cfg.horizon, cfg.channels());
    if (with_ctx && i % 2 == 0) {
      Vec z(cfg.ple_dim);
      for (int j = 0; j < z.size(); ++j) z[j] = u(rng);
      batch[i].ctx = z;
    }
  }
  return batch;
}

TEST_CASE("layout size matches a hand count of the architecture") {
  DenoiserConfig c;
  c.hidden_width = 8;
  c.n_blocks = 1;
  c.horizon = 4;
  c.state_dim = 2;
  c.action_dim = 2;
  c.ple_dim = 4;
  c.time_embed_dim = 32;
  c.mapper_hidden = 0;
  // in: 12*8 + 8; cond: 36*8 + 8; block: (24*8 + 8) + (8*16 + 16) + (24*8 + 8);
  // out: 24*4 + 4; null context 4; affine mapper 4*4 + 4.
  const std::size_t expected = 104 + 296 + 200 + 144 + 200 + 100 + 4 + 20;
  CHECK(denoiser_layout(c).total() == expected);
  c.mapper_hidden = 5;
  // hidden mapper: 4*5 + 5 + 5*4 + 4.
  CHECK(denoiser_layout(c).total() == expected - 20 + 49);
}

TEST_CASE("initialization is deterministic with zero biases") {
  const DenoiserConfig c = tiny_config();
  const DenoiserParams a = init_params(c), b = init_params(c);
  CHECK(a.flat == b.flat);
  for (const TensorSpec& t : a.layout.tensors()) {
    const bool bias = t.name.size() > 2 && t.name.substr(t.name.size() - 2) == ".b";
    if (!bias) continue;
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(a.flat[t.offset + i] == 0.0);
  }
  CHECK((a.null_context().array() == 0.5).all());
  DenoiserConfig other = c;
  other.seed = 4;
  CHECK(init_params(other).flat != a.flat);
}

TEST_CASE("null sentinel resolves to the stored null context") {
  const DenoiserParams p = init_params(tiny_config());
  Rng rng(1);
  const Mat x = randn(rng, 4, 4);
  const Mat a = denoise(p, x, 7, std::nullopt);
  const Mat b = denoise(p, x, 7, p.null_context());
  CHECK((a.array() == b.array()).all());
  CHECK((denoise(p, x, 7, std::nullopt).array() == a.array()).all());
}

TEST_CASE("denoise rejects mismatched shapes") {
  const DenoiserParams p = init_params(tiny_config());
  CHECK_THROWS_AS(denoise(p, Mat::Zero(5, 4), 1, std::nullopt), std::invalid_argument);
  CHECK_THROWS_AS(denoise(p, Mat::Zero(4, 3), 1, std::nullopt), std::invalid_argument);
  CHECK_THROWS_AS(denoise(p, Mat::Zero(4, 4), 1, Vec::Zero(3)), std::invalid_argument);
}

TEST_CASE("exact prediction gives zero loss and zero gradient") {
  Rng rng(2);
  const Mat eps = randn(rng, 4, 4);
  Mat g;
  CHECK(denoising_mse(eps, eps, &g) == 0.0);
  CHECK(g.isZero(0.0));
}

TEST_CASE("loss and gradients are invariant to duplicating the batch") {
  const DenoiserParams p = init_params(tiny_config());
  const NoiseSchedule s = make_cosine_schedule(20);
  const auto batch = random_batch(p.config, 3, 20, 5, true);
  std::vector<TrainItem> twice = batch;
  twice.insert(twice.end(), batch.begin(), batch.end());
  const LossAndGrads a = loss_and_grads(p, s, batch);
  const LossAndGrads b = loss_and_grads(p, s, twice);
  CHECK(b.loss == doctest::Approx(a.loss).epsilon(1e-14));
  for (std::size_t i = 0; i < a.grad_params.size(); ++i)
    CHECK(b.grad_params[i] == doctest::Approx(a.grad_params[i]).epsilon(1e-12));
  CHECK_THROWS_AS(loss_and_grads(p, s, std::vector<TrainItem>{}), std::invalid_argument);
}

TEST_CASE("denoiser loss gradient matches central differences") {
  DenoiserParams p = init_params(tiny_config());
  const NoiseSchedule s = make_cosine_schedule(20);
  const auto batch = random_batch(p.config, 4, 20, 9, true);
  const LossAndGrads g = loss_and_grads(p, s, batch);
  auto f = [&] { return loss_and_grads(p, s, batch).loss; };
  // Everything except the mapper, which this loss does not touch.
  const std::size_t n_net = p.layout.at("null_context").offset + p.config.ple_dim;
  int checked = 0;
  for (std::size_t i : pick_indices(n_net, 80, 11)) {
    const double numeric = central_difference(f, p.flat[i]);
    CHECK_MESSAGE(rel_err(g.grad_params[i], numeric) < 1e-4, "coordinate " << i);
    ++checked;
  }
  CHECK(checked >= 50);
  // Context gradients of the conditioned items.
  for (int item : {0, 2}) {
    Vec z = *batch[item].ctx;
    for (int j = 0; j < z.size(); ++j) {
      auto fz = [&] {
        auto b = batch;
        b[item].ctx = z;
        return loss_and_grads(p, s, b).loss;
      };
      CHECK(rel_err(g.grad_ctx[item][j], central_difference(fz, z[j])) < 1e-4);
    }
  }
}

TEST_CASE("mapper path gradient matches central differences") {
  DenoiserParams p = init_params(tiny_config(/*mapper_hidden=*/6));
  const NoiseSchedule s = make_cosine_schedule(20);
  const int L = 12;
  const auto mask = central_mask(L);
  Rng rng(21);
  std::vector<Mat> full(3);
  for (Mat& m : full) m = randn(rng, L, p.config.channels()) * 0.7;
  auto batch = random_batch(p.config, 3, 20, 13, false);

  auto loss_at = [&](const DenoiserParams& params, const std::vector<Mat>& taus) {
    const MapperParams mapper = extract_mapper(params, mask);
    auto b = batch;
    for (std::size_t i = 0; i < b.size(); ++i) b[i].ctx = map_trajectory(mapper, taus[i]).z;
    return loss_and_grads(params, s, b);
  };

  // Analytic: context gradients pulled back through the mapper.
  const LossAndGrads g = loss_at(p, full);
  DVector grad(p.flat.size(), 0.0);
  std::vector<Mat> grad_tau(full.size());
  const MapperParams mapper = extract_mapper(p, mask);
  for (std::size_t i = 0; i < full.size(); ++i) {
    const MapperGrads mg = map_trajectory_vjp(mapper, full[i], g.grad_ctx[i]);
    accumulate_mapper_grads(mg, p.layout, grad);
    grad_tau[i] = mg.tau_full;
  }

  const std::size_t first = p.layout.at("mapper.hidden.w").offset;
  int checked = 0;
  for (std::size_t off : pick_indices(p.flat.size() - first, 60, 17)) {
    const std::size_t i = first + off;
    const double numeric = central_difference([&] { return loss_at(p, full).loss; }, p.flat[i]);
    CHECK_MESSAGE(rel_err(grad[i], numeric) < 1e-4, "mapper coordinate " << i);
    ++checked;
  }
  CHECK(checked >= 50);
  // Gradient w.r.t. visible entries of the full trajectory.
  for (int t : {0, 1, L - 1})
    for (int c = 0; c < p.config.channels(); ++c) {
      const double numeric =
          central_difference([&] { return loss_at(p, full).loss; }, full[1](t, c));
      CHECK(rel_err(grad_tau[1](t, c), numeric) < 1e-4);
    }
}

}  // namespace
}  // namespace pledi
