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

#include "pledi/schedule.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace pledi {
namespace {

void check_step(const NoiseSchedule& schedule, int k) {
  if (k < 0 || k >= schedule.K)
    throw std::invalid_argument("diffusion step " + std::to_string(k) +
                                " outside [0, " + std::to_string(schedule.K) +
                                ")");
}

void check_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

void apply(const Constraints& constraints, Mat& x) {
  for (const PinnedEntry& p : constraints) x(p.row, p.col) = p.value;
}

}  // namespace

NoiseSchedule make_cosine_schedule(int K) {
  if (K < 1)
    throw std::invalid_argument("make_cosine_schedule: K must be positive");
  constexpr double s = 0.008;
  auto f = [&](double t) {
    const double c = std::cos((t / K + s) / (1.0 + s) * std::numbers::pi / 2);
    return c * c;
  };
  const double f0 = f(0.0);
  NoiseSchedule schedule;
  schedule.K = K;
  schedule.alpha.resize(K);
  schedule.alpha_bar.resize(K);
  double prev_raw = 1.0;
  double running = 1.0;
  for (int k = 0; k < K; ++k) {
    const double raw = f(k + 1.0) / f0;
    schedule.alpha[k] = std::clamp(raw / prev_raw, 0.001, 0.9999);
    prev_raw = raw;
    running *= schedule.alpha[k];
    schedule.alpha_bar[k] = running;
  }
  return schedule;
}

Trajectory forward_noise(const Trajectory& tau_0, int k, const Mat& epsilon,
                         const NoiseSchedule& schedule) {
  check_step(schedule, k);
  check_same_shape(tau_0, epsilon, "forward_noise");
  const double ab = schedule.alpha_bar[k];
  return std::sqrt(ab) * tau_0 + std::sqrt(1.0 - ab) * epsilon;
}

Trajectory forward_step(const Trajectory& x_prev, int k, const Mat& noise,
                        const NoiseSchedule& schedule) {
  check_step(schedule, k);
  check_same_shape(x_prev, noise, "forward_step");
  const double a = schedule.alpha[k];
  return std::sqrt(a) * x_prev + std::sqrt(1.0 - a) * noise;
}

double posterior_variance(const NoiseSchedule& schedule, int k) {
  if (k <= 0) return 0.0;
  check_step(schedule, k);
  return (1.0 - schedule.alpha_bar[k - 1]) / (1.0 - schedule.alpha_bar[k]) *
         (1.0 - schedule.alpha[k]);
}

Constraints pin_row(int row, const Vec& values, int first_col) {
  Constraints out;
  for (int j = 0; j < values.size(); ++j)
    out.push_back({row, first_col + j, values[j]});
  return out;
}

std::vector<Trajectory> ancestral_sample_batch(
    const BatchNoisePredictor& predict, const NoiseSchedule& schedule,
    int rows, int cols, int n, std::uint64_t seed,
    const Constraints& constraints) {
  for (const PinnedEntry& p : constraints)
    if (p.row < 0 || p.row >= rows || p.col < 0 || p.col >= cols)
      throw std::invalid_argument("ancestral_sample: constraint out of range");
  std::vector<Rng> rngs;
  std::vector<Mat> x(n);
  for (int i = 0; i < n; ++i) {
    rngs.push_back(make_rng(seed, static_cast<std::uint64_t>(i)));
    x[i] = randn(rngs[i], rows, cols);
    apply(constraints, x[i]);
  }
  for (int k = schedule.K - 1; k >= 0; --k) {
    const std::vector<Mat> eps = predict(x, k);
    if (static_cast<int>(eps.size()) != n)
      throw std::invalid_argument("ancestral_sample: predictor batch size");
    const double a = schedule.alpha[k];
    const double coef = (1.0 - a) / std::sqrt(1.0 - schedule.alpha_bar[k]);
    const double sigma = std::sqrt(posterior_variance(schedule, k));
    for (int i = 0; i < n; ++i) {
      check_same_shape(x[i], eps[i], "ancestral_sample prediction");
      if (!eps[i].allFinite())
        throw DivergenceError("ancestral_sample: non-finite noise prediction",
                              k);
      x[i] = (x[i] - coef * eps[i]) / std::sqrt(a);
      if (k > 0) x[i] += sigma * randn(rngs[i], rows, cols);
      apply(constraints, x[i]);
    }
  }
  return x;
}

Trajectory ancestral_sample(const NoisePredictor& predict,
                            const NoiseSchedule& schedule, int rows, int cols,
                            std::uint64_t seed,
                            const Constraints& constraints) {
  BatchNoisePredictor batched = [&](const std::vector<Mat>& xs, int k) {
    return std::vector<Mat>{predict(xs[0], k)};
  };
  return ancestral_sample_batch(batched, schedule, rows, cols, 1, seed,
                                constraints)[0];
}

}  // namespace pledi
