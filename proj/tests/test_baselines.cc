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


#include <cmath>
#include <vector>

#include "doctest.h"
#include "pledi/baselines.h"
#include "pledi/denoiser.h"
#include "pledi/guidance.h"
#include "pledi/lora.h"
#include "pledi/schedule.h"
#include "test_util.h"

namespace pledi {
namespace {

using testing::central_difference;
using testing::pick_indices;
using testing::rel_err;
using testing::tiny_config;

Eigen::Map<Mat> rm_tensor(RewardModelParams& rm, const std::string& name) {
  const auto& t = rm.layout.at(name);
  return {rm.flat.data() + t.offset, t.rows, t.cols};
}

// Segments whose preference is decided by the mean of channel 0.
std::vector<LabeledPair> synthetic_pairs(int n, int H, int C, std::uint64_t seed,
                                         bool flip = false) {
  Rng rng(seed);
  std::vector<LabeledPair> out;
  while (static_cast<int>(out.size()) < n) {
    Mat a = randn(rng, H, C) * 0.5;
    Mat b = randn(rng, H, C) * 0.5;
    if (std::abs(a.col(0).mean() - b.col(0).mean()) < 0.05) continue;
    const bool a_wins = (a.col(0).mean() > b.col(0).mean()) != flip;
    out.push_back(a_wins ? LabeledPair{a, b} : LabeledPair{b, a});
  }
  return out;
}

TEST_CASE("Bradley-Terry loss reference values") {
  auto rm = init_reward_model(4, 4, 16, 1);
  Rng rng(2);
  const Mat a = randn(rng, 4, 4);
  const Mat b = randn(rng, 4, 4);
  CHECK(bt_loss(rm, a, a) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  const double diff = reward(rm, a) - reward(rm, b);
  CHECK(bt_loss(rm, a, b) ==
        doctest::Approx(std::log1p(std::exp(-diff))).epsilon(1e-12));
  // Rescaling the output weights makes the reward gap exactly one.
  rm_tensor(rm, "out.w") /= diff;
  CHECK(reward(rm, a) - reward(rm, b) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(bt_loss(rm, a, b) - 0.3133) < 1e-4);
}

TEST_CASE("Bradley-Terry parameter gradient matches finite differences") {
  auto rm = init_reward_model(4, 4, 16, 3);
  Rng rng(4);
  const Mat a = randn(rng, 4, 4);
  const Mat b = randn(rng, 4, 4);
  DVector grad;
  bt_loss(rm, a, b, &grad);
  REQUIRE(grad.size() == rm.flat.size());
  auto f = [&] { return bt_loss(rm, a, b); };
  int checked = 0;
  for (auto i : pick_indices(rm.flat.size(), 80, 5)) {
    const double num = central_difference(f, rm.flat[i]);
    if (std::abs(grad[i]) < 1e-9 && std::abs(num) < 1e-9) continue;
    CHECK(rel_err(grad[i], num) < 1e-4);
    ++checked;
  }
  CHECK(checked >= 50);
}

TEST_CASE("reward input gradients match finite differences") {
  const auto rm = init_reward_model(4, 4, 16, 6);
  Rng rng(7);
  std::vector<Mat> segs = {randn(rng, 4, 4), randn(rng, 4, 4)};
  std::vector<Mat> grads;
  const auto r = reward_batch(rm, segs, &grads);
  CHECK(r[0] == reward(rm, segs[0]));
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 4; ++t)
      for (int c = 0; c < 4; ++c) {
        auto f = [&] { return reward(rm, segs[s]); };
        CHECK(rel_err(grads[s](t, c), central_difference(f, segs[s](t, c))) <
              1e-5);
      }
}

TEST_CASE("reward model learns a consistent preference and its mirror") {
  RewardModelConfig cfg;
  cfg.hidden = 32;
  cfg.n_updates = 1500;
  cfg.seed = 8;
  const auto train = synthetic_pairs(200, 4, 4, 9);
  const auto test = synthetic_pairs(200, 4, 4, 10);
  const auto r = train_reward_model(train, cfg);
  CHECK(r.loss_history.size() == 1500);
  CHECK(r.train_accuracy >= 0.9);
  CHECK(r.heldout_accuracy >= 0.9);
  CHECK(pairwise_accuracy(r.model, test) >= 0.9);

  const auto flipped =
      train_reward_model(synthetic_pairs(200, 4, 4, 9, true), cfg);
  CHECK(pairwise_accuracy(flipped.model, test) <= 0.1);
}

TEST_CASE("reward model skips the holdout for tiny label sets") {
  RewardModelConfig cfg;
  cfg.n_updates = 10;
  const auto r = train_reward_model(synthetic_pairs(4, 4, 4, 11), cfg);
  CHECK(std::isnan(r.heldout_accuracy));
}

TEST_CASE("guided sampling with zero weight equals unconditional sampling") {
  const auto params = init_params(tiny_config());
  const auto rm = init_reward_model(4, params.config.channels(), 8, 12);
  const auto schedule = make_cosine_schedule(10);
  const auto guided = guided_sample(params, rm, schedule, 0.0, 3, 13);
  const auto plain = ancestral_sample_batch(
      conditional_predictor(params, std::nullopt), schedule, 4,
      params.config.channels(), 3, 13);
  REQUIRE(guided.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(guided[i] == plain[i]);
  const auto pushed = guided_sample(params, rm, schedule, 5.0, 3, 13);
  CHECK((pushed[0] - plain[0]).cwiseAbs().maxCoeff() > 1e-6);
}

std::vector<PreferenceLossTerm> loss_terms(const std::vector<LabeledPair>& p,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PreferenceLossTerm> terms;
  for (std::size_t i = 0; i < p.size(); ++i)
    terms.push_back({&p[i].winner, &p[i].loser, static_cast<int>(2 * i + 1),
                     randn(rng, p[i].winner.rows(), p[i].winner.cols())});
  return terms;
}

DenoiserParams perturbed(const DenoiserParams& base, std::uint64_t seed) {
  DenoiserParams p = base;
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 0.05);
  for (double& w : p.flat) w += n(rng);
  return p;
}

TEST_CASE("preference loss identities") {
  const auto ref = init_params(tiny_config());
  const auto model = perturbed(ref, 14);
  const auto schedule = make_cosine_schedule(10);
  const auto pairs = synthetic_pairs(3, 4, 4, 15);
  const auto terms = loss_terms(pairs, 16);

  // The model equal to its reference sits at softplus(0).
  const auto at_ref = preference_loss(ref, ref, schedule, terms, 5000.0);
  CHECK(at_ref.loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  // Vanishing beta: loss -> ln 2 and gradients -> 0.
  const auto tiny_beta = preference_loss(model, ref, schedule, terms, 1e-12);
  CHECK(tiny_beta.loss == doctest::Approx(std::log(2.0)).epsilon(1e-10));
  double gmax = 0;
  for (double g : tiny_beta.grad) gmax = std::max(gmax, std::abs(g));
  CHECK(gmax < 1e-10);

  // Identical winner and loser carry no preference signal (up to rounding,
  // which beta amplifies).
  std::vector<LabeledPair> same = pairs;
  for (auto& p : same) p.loser = p.winner;
  const auto same_terms = loss_terms(same, 16);
  const auto tied = preference_loss(model, ref, schedule, same_terms, 5000.0);
  CHECK(tied.loss == doctest::Approx(std::log(2.0)).epsilon(1e-10));
  for (double g : tied.grad) CHECK(std::abs(g) < 1e-8);
}

TEST_CASE("preference loss gradient matches finite differences") {
  const auto ref = init_params(tiny_config());
  auto model = perturbed(ref, 17);
  const auto schedule = make_cosine_schedule(10);
  const auto pairs = synthetic_pairs(2, 4, 4, 18);
  const auto terms = loss_terms(pairs, 19);
  const double beta = 3.0;
  const auto g = preference_loss(model, ref, schedule, terms, beta);
  auto f = [&] { return preference_loss(model, ref, schedule, terms, beta).loss; };
  int checked = 0;
  for (auto i : pick_indices(model.flat.size(), 80, 20)) {
    const double num = central_difference(f, model.flat[i], 1e-5);
    if (std::abs(g.grad[i]) < 1e-8 && std::abs(num) < 1e-8) continue;
    CHECK(rel_err(g.grad[i], num) < 1e-4);
    ++checked;
  }
  CHECK(checked >= 50);
}

TEST_CASE("finetuning with no labels performs no updates") {
  const auto base = init_params(tiny_config());
  const auto schedule = make_cosine_schedule(10);
  std::vector<LabeledPair> none;
  FinetuneConfig cfg;
  cfg.n_adapt = 10;
  const auto full = finetune_full(base, schedule, none, cfg);
  CHECK(full.updates == 0);
  CHECK(full.params.flat == base.flat);
  cfg.lora_rank = 2;
  const auto lora = finetune_lora(base, schedule, none, cfg);
  CHECK(lora.updates == 0);
  CHECK(lora.params.flat == base.flat);
}

TEST_CASE("full finetuning moves weights and reports every update") {
  const auto base = init_params(tiny_config());
  const auto schedule = make_cosine_schedule(10);
  const auto pairs = synthetic_pairs(6, 4, 4, 21);
  FinetuneConfig cfg;
  cfg.n_adapt = 20;
  cfg.learning_rate = 1e-3;
  cfg.beta = 50.0;
  int seen = 0;
  const auto r = finetune_full(base, schedule, pairs, cfg,
                               [&](int step, double, const DenoiserParams& p) {
                                 ++seen;
                                 CHECK(step == seen);
                                 CHECK(p.flat.size() == base.flat.size());
                                 return true;
                               });
  CHECK(seen == 20);
  CHECK(r.updates == 20);
  CHECK(r.params.flat != base.flat);
  const auto again = finetune_full(base, schedule, pairs, cfg);
  CHECK(again.params.flat == r.params.flat);
}

TEST_CASE("LoRA targets only FiLM weight matrices") {
  DenoiserConfig c;  // default sized model
  const auto base = init_params(c);
  const auto targets = lora_targets(base.layout, {"blk*.film.w"});
  CHECK(static_cast<int>(targets.size()) == c.n_blocks);
  for (const auto& t : targets) CHECK(t.find("film.w") != std::string::npos);
  CHECK(lora_targets(base.layout, {"*.b"}).empty());
  CHECK(lora_targets(base.layout, {"mapper*"}).empty());

  const auto adapters = init_lora(base, targets, 8, 1);
  CHECK(adapters.trainable_count() < base.flat.size() / 10);
}

TEST_CASE("LoRA merge is exact and zero-initialized adapters are inert") {
  const auto base = init_params(tiny_config());
  const auto targets = lora_targets(base.layout, {"blk*.film.w"});
  auto adapters = init_lora(base, targets, 2, 22);
  const auto merged0 = merge_lora(base, adapters);
  CHECK(merged0.flat == base.flat);

  Rng rng(23);
  for (auto& d : adapters.deltas) d.down = randn(rng, d.down.rows(), d.down.cols());
  const auto merged = merge_lora(base, adapters);
  for (const auto& d : adapters.deltas) {
    const Mat expected = Mat(base.tensor(d.target)) + d.down * d.up;
    CHECK((Mat(merged.tensor(d.target)) - expected).cwiseAbs().maxCoeff() <
          1e-10);
  }
  for (const auto& t : base.layout.tensors()) {
    if (adapters.find(t.name) != nullptr) continue;
    CHECK(Mat(merged.tensor(t.name)) == Mat(base.tensor(t.name)));
  }

  auto flat = flatten_lora(adapters);
  CHECK(flat.size() == adapters.trainable_count());
  auto copy = adapters;
  for (auto& d : copy.deltas) d.down.setZero();
  unflatten_lora(flat, copy);
  CHECK(copy.deltas[0].down == adapters.deltas[0].down);
}

TEST_CASE("LoRA rejects invalid ranks") {
  const auto base = init_params(tiny_config());
  const auto targets = lora_targets(base.layout, {"blk*.film.w"});
  CHECK_THROWS_AS(init_lora(base, targets, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_lora(base, targets, 10000, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_lora(base, {}, 2, 1), std::invalid_argument);
}

TEST_CASE("LoRA finetuning changes only the targeted tensors") {
  const auto base = init_params(tiny_config());
  const auto schedule = make_cosine_schedule(10);
  const auto pairs = synthetic_pairs(6, 4, 4, 24);
  FinetuneConfig cfg;
  cfg.n_adapt = 15;
  cfg.learning_rate = 1e-2;
  cfg.beta = 50.0;
  cfg.lora_rank = 2;
  const auto r = finetune_lora(base, schedule, pairs, cfg);
  CHECK(r.updates == 15);
  bool any_changed = false;
  for (const auto& t : base.layout.tensors()) {
    const bool same = Mat(r.params.tensor(t.name)) == Mat(base.tensor(t.name));
    if (r.adapters.find(t.name) == nullptr)
      CHECK(same);
    else
      any_changed |= !same;
  }
  CHECK(any_changed);
}

}  // namespace
}  // namespace pledi
