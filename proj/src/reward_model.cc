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
#include <limits>
#include <numeric>
#include <stdexcept>

#include "pledi/adam.h"
#include "pledi/baselines.h"
#include "pledi/guidance.h"

namespace pledi {
namespace {

struct RewardPass {
  Mat x, p1, h1, p2, h2;
  Vec r;
};

Eigen::Map<const Mat> view(const RewardModelParams& rm, const char* name) {
  const TensorSpec& t = rm.layout.at(name);
  return Eigen::Map<const Mat>(rm.flat.data() + t.offset, t.rows, t.cols);
}

Mat act(const Mat& x) {
  return x.unaryExpr([](double v) { return silu(v); });
}

RewardPass forward(const RewardModelParams& rm, const std::vector<const Mat*>& segs) {
  const int n = static_cast<int>(segs.size());
  const int d = rm.horizon * rm.channels;
  RewardPass p;
  p.x.resize(n, d);
  for (int i = 0; i < n; ++i) {
    const Mat& s = *segs[i];
    if (s.rows() != rm.horizon || s.cols() != rm.channels)
      throw std::invalid_argument("reward model: segment must be " +
                                  std::to_string(rm.horizon) + "x" +
                                  std::to_string(rm.channels));
    p.x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(s.data(), d);
  }
  p.p1 = p.x * view(rm, "l1.w");
  p.p1.rowwise() += view(rm, "l1.b").row(0);
  p.h1 = act(p.p1);
  p.p2 = p.h1 * view(rm, "l2.w");
  p.p2.rowwise() += view(rm, "l2.b").row(0);
  p.h2 = act(p.p2);
  p.r = (p.h2 * view(rm, "out.w")).col(0);
  p.r.array() += view(rm, "out.b")(0, 0);
  return p;
}

// Pulls d loss / d r back to the parameters and/or the inputs.
void backward(const RewardModelParams& rm, const RewardPass& p, const Vec& dr,
              DVector* param_grad, Mat* input_grad) {
  auto silu_back = [](const Mat& pre, const Mat& g) {
    return Mat(g.cwiseProduct(pre.unaryExpr([](double v) { return silu_grad(v); })));
  };
  const Mat dh2 = dr * view(rm, "out.w").transpose();
  const Mat dp2 = silu_back(p.p2, dh2);
  const Mat dh1 = dp2 * view(rm, "l2.w").transpose();
  const Mat dp1 = silu_back(p.p1, dh1);
  if (param_grad != nullptr) {
    param_grad->assign(rm.flat.size(), 0.0);
    auto g = [&](const char* name) {
      const TensorSpec& t = rm.layout.at(name);
      return Eigen::Map<Mat>(param_grad->data() + t.offset, t.rows, t.cols);
    };
    g("out.w") = p.h2.transpose() * dr;
    g("out.b")(0, 0) = dr.sum();
    g("l2.w") = p.h1.transpose() * dp2;
    g("l2.b") = dp2.colwise().sum();
    g("l1.w") = p.x.transpose() * dp1;
    g("l1.b") = dp1.colwise().sum();
  }
  if (input_grad != nullptr) *input_grad = dp1 * view(rm, "l1.w").transpose();
}

}  // namespace

RewardModelParams init_reward_model(int horizon, int channels, int hidden,
                                    std::uint64_t seed) {
  if (horizon < 1 || channels < 1 || hidden < 1)
    throw std::invalid_argument("init_reward_model: dimensions must be positive");
  RewardModelParams rm;
  rm.horizon = horizon;
  rm.channels = channels;
  rm.hidden = hidden;
  const int d = horizon * channels;
  rm.layout.add("l1.w", d, hidden);
  rm.layout.add("l1.b", 1, hidden);
  rm.layout.add("l2.w", hidden, hidden);
  rm.layout.add("l2.b", 1, hidden);
  rm.layout.add("out.w", hidden, 1);
  rm.layout.add("out.b", 1, 1);
  rm.flat.assign(rm.layout.total(), 0.0);
  Rng rng = make_rng(seed, 0x12e);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const TensorSpec& t : rm.layout.tensors()) {
    if (t.rows == 1) continue;
    const double scale = 1.0 / std::sqrt(static_cast<double>(t.rows));
    for (std::size_t i = 0; i < t.size(); ++i)
      rm.flat[t.offset + i] = scale * normal(rng);
  }
  return rm;
}

double reward(const RewardModelParams& rm, const Mat& segment) {
  return forward(rm, {&segment}).r[0];
}

DVector reward_batch(const RewardModelParams& rm,
                                 const std::vector<Mat>& segments,
                                 std::vector<Mat>* input_grads) {
  if (segments.empty()) return {};
  std::vector<const Mat*> ptrs;
  for (const Mat& s : segments) ptrs.push_back(&s);
  const RewardPass p = forward(rm, ptrs);
  if (input_grads != nullptr) {
    Mat dx;
    backward(rm, p, Vec::Ones(p.r.size()), nullptr, &dx);
    input_grads->resize(segments.size());
    for (std::size_t i = 0; i < segments.size(); ++i)
      (*input_grads)[i] = Eigen::Map<const Mat>(dx.row(i).data(), rm.horizon,
                                                rm.channels);
  }
  return {p.r.data(), p.r.data() + p.r.size()};
}

double bt_loss(const RewardModelParams& rm, const Mat& winner, const Mat& loser,
               DVector* grad) {
  const RewardPass p = forward(rm, {&winner, &loser});
  const double margin = p.r[0] - p.r[1];
  if (grad != nullptr) {
    Vec dr(2);
    const double s = sigmoid(-margin);
    dr << -s, s;
    backward(rm, p, dr, grad, nullptr);
  }
  return softplus(-margin);
}

double pairwise_accuracy(const RewardModelParams& rm,
                         std::span<const LabeledPair> pairs) {
  if (pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<const Mat*> ptrs;
  for (const LabeledPair& p : pairs) {
    ptrs.push_back(&p.winner);
    ptrs.push_back(&p.loser);
  }
  const Vec r = forward(rm, ptrs).r;
  int correct = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    correct += r[2 * i] > r[2 * i + 1];
  return static_cast<double>(correct) / pairs.size();
}

RewardTrainResult train_reward_model(std::span<const LabeledPair> labels,
                                     const RewardModelConfig& config) {
  if (labels.empty())
    throw std::invalid_argument("train_reward_model: no labels");
  if (config.n_updates < 1)
    throw std::invalid_argument("train_reward_model: n_updates must be >= 1");
  const int H = static_cast<int>(labels[0].winner.rows());
  const int C = static_cast<int>(labels[0].winner.cols());

  std::vector<int> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(config.seed, 0x13);
  std::shuffle(order.begin(), order.end(), rng);
  int n_hold = 0;
  if (labels.size() >= 5)
    n_hold = static_cast<int>(std::floor(config.holdout_fraction * labels.size()));
  std::vector<LabeledPair> train, hold;
  for (std::size_t i = 0; i < order.size(); ++i)
    (static_cast<int>(i) < n_hold ? hold : train).push_back(labels[order[i]]);

  RewardTrainResult out;
  out.model = init_reward_model(H, C, config.hidden, config.seed);
  RewardModelParams& rm = out.model;
  AdamOptions opts;
  opts.learning_rate = config.learning_rate;
  Adam adam(rm.flat.size(), opts);
  const int B = std::max(1, std::min<int>(config.batch_size, train.size()));
  std::uniform_int_distribution<int> pick(0, static_cast<int>(train.size()) - 1);
  std::vector<const Mat*> ptrs(2 * B);
  DVector grad;
  for (int step = 0; step < config.n_updates; ++step) {
    for (int j = 0; j < B; ++j) {
      const LabeledPair& p = train[pick(rng)];
      ptrs[j] = &p.winner;
      ptrs[B + j] = &p.loser;
    }
    const RewardPass pass = forward(rm, ptrs);
    Vec dr(2 * B);
    double loss = 0.0;
    for (int j = 0; j < B; ++j) {
      const double margin = pass.r[j] - pass.r[B + j];
      loss += softplus(-margin);
      const double s = sigmoid(-margin) / B;
      dr[j] = -s;
      dr[B + j] = s;
    }
    loss /= B;
    if (!std::isfinite(loss))
      throw DivergenceError("train_reward_model: non-finite loss", step);
    backward(rm, pass, dr, &grad, nullptr);
    adam.step(rm.flat, grad);
    out.loss_history.push_back(loss);
  }
  out.train_accuracy = pairwise_accuracy(rm, train);
  out.heldout_accuracy = pairwise_accuracy(rm, hold);
  return out;
}

BatchNoisePredictor reward_guided_predictor(const DenoiserParams& params,
                                            const RewardModelParams& rm,
                                            const NoiseSchedule& schedule,
                                            double v) {
  const BatchNoisePredictor uncond = conditional_predictor(params, std::nullopt);
  return [uncond, &rm, &schedule, v](const std::vector<Mat>& xs, int k) {
    std::vector<Mat> eps = uncond(xs, k);
    if (v == 0.0) return eps;
    std::vector<Mat> grads;
    reward_batch(rm, xs, &grads);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!grads[i].allFinite())
        throw DivergenceError("guided_sample: non-finite reward gradient", k);
      eps[i] = classifier_guided_combine(eps[i], grads[i],
                                         schedule.alpha_bar[k], v);
    }
    return eps;
  };
}

std::vector<Trajectory> guided_sample(const DenoiserParams& frozen,
                                      const RewardModelParams& rm,
                                      const NoiseSchedule& schedule, double v,
                                      int n, std::uint64_t seed) {
  return ancestral_sample_batch(
      reward_guided_predictor(frozen, rm, schedule, v), schedule,
      frozen.config.horizon, frozen.config.channels(), n, seed);
}

}  // namespace pledi
