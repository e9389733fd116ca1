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


#include "pledi/eval.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "pledi/adam.h"

namespace pledi {

double normalized_score(double score, double random_score,
                        double expert_score) {
  const double denom = expert_score - random_score;
  if (denom == 0.0 || !std::isfinite(denom))
    throw std::invalid_argument(
        "normalized_score: expert and random scores must differ");
  // Dividing first keeps both endpoints exact.
  return 100.0 * ((score - random_score) / denom);
}

double win_rate(const std::vector<Mat>& a, const std::vector<Mat>& b,
                const OracleSpec& oracle, std::uint64_t seed) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("win_rate: empty sample list");
  if (a.size() != b.size())
    throw std::invalid_argument("win_rate: sample counts differ (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  const int n = static_cast<int>(a.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 0x77);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> partner(n);
  for (int i = 0; i + 1 < n; i += 2) {
    partner[order[i]] = order[i + 1];
    partner[order[i + 1]] = order[i];
  }
  if (n % 2 == 1) partner[order[n - 1]] = order[n - 1];

  double wins = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = oracle_reward(a[i], oracle) -
                     oracle_reward(b[partner[i]], oracle);
    if (std::abs(d) < kTieTolerance)
      wins += 0.5;
    else if (d > 0)
      wins += 1.0;
  }
  return wins / n;
}

double mean_reward(const std::vector<Mat>& segments, const OracleSpec& oracle) {
  if (segments.empty()) throw std::invalid_argument("mean_reward: no segments");
  double acc = 0.0;
  for (const Mat& s : segments) acc += oracle_reward(s, oracle);
  return acc / segments.size();
}

double fit_linear_probe(const Mat& features, const std::vector<int>& labels,
                        const std::vector<int>& train_idx,
                        const std::vector<int>& test_idx) {
  if (train_idx.empty() || test_idx.empty())
    throw std::invalid_argument("fit_linear_probe: empty split");
  const int d = static_cast<int>(features.cols());
  const int n_class = *std::max_element(labels.begin(), labels.end()) + 1;
  const int n = static_cast<int>(train_idx.size());

  Mat x(n, d + 1);
  Mat y = Mat::Zero(n, n_class);
  for (int i = 0; i < n; ++i) {
    x.row(i) << features.row(train_idx[i]), 1.0;
    y(i, labels[train_idx[i]]) = 1.0;
  }
  // Full-batch softmax regression with a light ridge penalty.
  constexpr double kRidge = 1e-4;
  constexpr int kIters = 1500;
  DVector w((d + 1) * n_class, 0.0);
  AdamOptions opts;
  opts.learning_rate = 0.05;
  Adam adam(w.size(), opts);
  DVector grad(w.size());
  for (int it = 0; it < kIters; ++it) {
    Eigen::Map<const Mat> wm(w.data(), d + 1, n_class);
    Mat logits = x * wm;
    for (int i = 0; i < n; ++i) {
      logits.row(i).array() -= logits.row(i).maxCoeff();
      logits.row(i) = logits.row(i).array().exp().matrix();
      logits.row(i) /= logits.row(i).sum();
    }
    Eigen::Map<Mat> gm(grad.data(), d + 1, n_class);
    gm = x.transpose() * (logits - y) / n + kRidge * wm;
    adam.step(w, grad);
  }
  Eigen::Map<const Mat> wm(w.data(), d + 1, n_class);
  int correct = 0;
  for (int i : test_idx) {
    Eigen::RowVectorXd xi(d + 1);
    xi << features.row(i), 1.0;
    Eigen::RowVectorXd logits = xi * wm;
    Eigen::Index arg;
    logits.maxCoeff(&arg);
    correct += static_cast<int>(arg) == labels[i];
  }
  return static_cast<double>(correct) / test_idx.size();
}

Mat pca_2d(const Mat& x) {
  if (x.rows() < 2) throw std::invalid_argument("pca_2d: need >= 2 rows");
  const Mat centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const int d = static_cast<int>(x.cols());
  const int m = std::min(2, d);
  Eigen::MatrixXd axes = Eigen::MatrixXd::Zero(d, 2);
  for (int c = 0; c < m; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - c);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    axes.col(c) = v;
  }
  return centered * axes;
}

LatentProbeResult latent_probe(const MapperParams& mapper,
                               const std::vector<FullTrajectory>& corpus,
                               const Normalizer& normalizer,
                               const OracleSpec& oracle, std::uint64_t seed) {
  std::map<int, int> per_mode;
  for (const auto& e : corpus) ++per_mode[e.mode_id];
  if (per_mode.size() < 2)
    throw std::invalid_argument("latent_probe: need at least two modes");
  for (const auto& [mode, count] : per_mode)
    if (count < 10 || mode < 0)
      throw std::invalid_argument("latent_probe: mode " + std::to_string(mode) +
                                  " has " + std::to_string(count) +
                                  " episodes; at least 10 required");

  const int n = static_cast<int>(corpus.size());
  LatentProbeResult out;
  out.embeddings.resize(n, mapper.ple_dim());
  for (int i = 0; i < n; ++i) {
    const Mat m = corpus[i].matrix();
    out.embeddings.row(i) =
        map_trajectory(mapper, normalizer.normalize(m)).z.transpose();
    out.mode_ids.push_back(corpus[i].mode_id);
    out.rewards.push_back(oracle_reward(m, oracle));
  }

  Mat standardized = out.embeddings.rowwise() - out.embeddings.colwise().mean();
  for (int j = 0; j < standardized.cols(); ++j) {
    const double sd = std::sqrt(standardized.col(j).squaredNorm() / n);
    if (sd > 1e-12) standardized.col(j) /= sd;
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 0x9b);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = static_cast<int>(std::lround(0.8 * n));
  std::vector<int> train(order.begin(), order.begin() + n_train);
  std::vector<int> test(order.begin() + n_train, order.end());
  out.probe_accuracy = fit_linear_probe(standardized, out.mode_ids, train, test);
  out.pca = pca_2d(out.embeddings);
  return out;
}

}  // namespace pledi
