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

#include "pledi/envdata.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

namespace pledi {
namespace {

constexpr double kWaveFrequency = 2.0;  // rad/s
constexpr double kStartBox = 2.0;

Vec clamp_norm(const Vec& a, double max_norm) {
  const double n = a.norm();
  return n > max_norm ? Vec(a * (max_norm / n)) : a;
}

}  // namespace

Vec step_dynamics(const Vec& state, const Vec& action) {
  return state + kDt * clamp_norm(action, kMaxActionNorm);
}

Mat FullTrajectory::matrix() const {
  Mat m(states.rows(), states.cols() + actions.cols());
  m << states, actions;
  return m;
}

ModeParams mode_params(int mode, int n_modes) {
  if (n_modes < 2)
    throw std::invalid_argument("mode_params: n_modes must be >= 2");
  if (mode < 0 || mode >= n_modes)
    throw std::invalid_argument("mode_params: mode out of range");
  const double span = n_modes - 1.0;
  ModeParams p;
  p.omega = -1.2 + 2.4 * mode / span;
  // Speeds are a permutation of the grid so that speed and curl rank modes
  // differently.
  p.speed = 0.55 + 0.3 * ((3 * mode + 1) % n_modes) / span;
  p.waviness = mode % 2 == 0 ? 0.25 : 0.5;
  return p;
}

std::vector<FullTrajectory> generate_corpus(int n_episodes, int L, int n_modes,
                                            std::uint64_t seed) {
  if (n_modes < 2)
    throw std::invalid_argument("generate_corpus: n_modes must be >= 2");
  if (n_episodes < 1 || L < 2)
    throw std::invalid_argument("generate_corpus: need n_episodes >= 1, L >= 2");
  std::vector<FullTrajectory> corpus(n_episodes);
  for (int e = 0; e < n_episodes; ++e) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(e));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    FullTrajectory& traj = corpus[e];
    traj.episode_id = e;
    traj.mode_id = e % n_modes;
    const ModeParams mp = mode_params(traj.mode_id, n_modes);

    Vec pos(2);
    pos << kStartBox * (2 * uni(rng) - 1), kStartBox * (2 * uni(rng) - 1);
    const double heading0 = 2 * std::numbers::pi * uni(rng);
    const double phase = 2 * std::numbers::pi * uni(rng);
    const double episode_speed = mp.speed * (1.0 + 0.03 * normal(rng));

    traj.states.resize(L, kStateDim);
    traj.actions.resize(L, kActionDim);
    for (int t = 0; t < L; ++t) {
      const double time = t * kDt;
      const double heading = heading0 + mp.omega * time +
                             mp.waviness * std::sin(kWaveFrequency * time + phase);
      const double speed = episode_speed + 0.02 * normal(rng);
      Vec a(2);
      a << speed * std::cos(heading) + 0.01 * normal(rng),
          speed * std::sin(heading) + 0.01 * normal(rng);
      a = clamp_norm(a, kMaxActionNorm);
      traj.states.row(t) = pos.transpose();
      traj.actions.row(t) = a.transpose();
      pos = step_dynamics(pos, a);
    }
  }
  return corpus;
}

std::vector<FullTrajectory> generate_random_corpus(int n_episodes, int L,
                                                   std::uint64_t seed) {
  std::vector<FullTrajectory> corpus(n_episodes);
  for (int e = 0; e < n_episodes; ++e) {
    Rng rng = make_rng(seed ^ 0x52414e44ULL, static_cast<std::uint64_t>(e));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    FullTrajectory& traj = corpus[e];
    traj.episode_id = e;
    traj.mode_id = -1;
    traj.states.resize(L, kStateDim);
    traj.actions.resize(L, kActionDim);
    Vec pos(2);
    pos << kStartBox * (2 * uni(rng) - 1), kStartBox * (2 * uni(rng) - 1);
    for (int t = 0; t < L; ++t) {
      const double r = std::sqrt(uni(rng));
      const double th = 2 * std::numbers::pi * uni(rng);
      Vec a(2);
      a << r * std::cos(th), r * std::sin(th);
      traj.states.row(t) = pos.transpose();
      traj.actions.row(t) = a.transpose();
      pos = step_dynamics(pos, a);
    }
  }
  return corpus;
}

double dynamics_residual(const FullTrajectory& traj) {
  double worst = 0.0;
  for (int t = 0; t + 1 < traj.length(); ++t) {
    const Vec expected = step_dynamics(traj.states.row(t).transpose(),
                                       traj.actions.row(t).transpose());
    worst = std::max(
        worst, (traj.states.row(t + 1).transpose() - expected).cwiseAbs().maxCoeff());
  }
  return worst;
}

Segment extract_segment(const FullTrajectory& traj, int start, int H) {
  if (H < 1 || start < 0 || start + H > traj.length())
    throw std::invalid_argument("extract_segment: window [" +
                                std::to_string(start) + ", " +
                                std::to_string(start + H) +
                                ") outside episode of length " +
                                std::to_string(traj.length()));
  Segment seg;
  seg.episode_id = traj.episode_id;
  seg.start = start;
  seg.data.resize(H, traj.states.cols() + traj.actions.cols());
  seg.data << traj.states.middleRows(start, H), traj.actions.middleRows(start, H);
  return seg;
}

Normalizer::Normalizer(Vec min, Vec max) : min_(std::move(min)), max_(std::move(max)) {
  if (min_.size() != max_.size())
    throw std::invalid_argument("Normalizer: min/max size mismatch");
  for (int j = 0; j < min_.size(); ++j) {
    if (!(max_[j] > min_[j])) {
      degenerate_.push_back(j);
      warnings_.push_back("dimension " + std::to_string(j) +
                          " is constant; normalized to 0");
    }
  }
}

Normalizer Normalizer::fit(const std::vector<FullTrajectory>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("Normalizer::fit: empty corpus");
  const int d = static_cast<int>(corpus[0].states.cols() + corpus[0].actions.cols());
  Vec lo = Vec::Constant(d, std::numeric_limits<double>::infinity());
  Vec hi = Vec::Constant(d, -std::numeric_limits<double>::infinity());
  for (const auto& traj : corpus) {
    const Mat m = traj.matrix();
    lo = lo.cwiseMin(m.colwise().minCoeff().transpose());
    hi = hi.cwiseMax(m.colwise().maxCoeff().transpose());
  }
  return Normalizer(lo, hi);
}

Mat Normalizer::normalize(const Mat& x) const {
  if (x.cols() != min_.size())
    throw std::invalid_argument("Normalizer: column count mismatch");
  Mat out(x.rows(), x.cols());
  for (int j = 0; j < x.cols(); ++j) {
    const double range = max_[j] - min_[j];
    if (range > 0)
      out.col(j) = ((x.col(j).array() - min_[j]) * (2.0 / range) - 1.0).matrix();
    else
      out.col(j).setZero();
  }
  return out;
}

Mat Normalizer::denormalize(const Mat& x) const {
  if (x.cols() != min_.size())
    throw std::invalid_argument("Normalizer: column count mismatch");
  Mat out(x.rows(), x.cols());
  for (int j = 0; j < x.cols(); ++j) {
    const double range = max_[j] - min_[j];
    if (range > 0)
      out.col(j) = ((x.col(j).array() + 1.0) * (range / 2.0) + min_[j]).matrix();
    else
      out.col(j).setConstant(min_[j]);
  }
  return out;
}

std::string to_string(OracleKind kind) {
  switch (kind) {
    case OracleKind::kSpeed: return "speed";
    case OracleKind::kSmoothness: return "smoothness";
    case OracleKind::kCurl: return "curl";
  }
  return "unknown";
}

OracleKind parse_oracle_kind(const std::string& text) {
  if (text == "speed") return OracleKind::kSpeed;
  if (text == "smoothness") return OracleKind::kSmoothness;
  if (text == "curl") return OracleKind::kCurl;
  throw std::invalid_argument("unknown oracle kind '" + text + "'");
}

std::string OracleSpec::name() const {
  return to_string(kind) + (sign > 0 ? "+" : "-");
}

OracleSpec OracleSpec::parse(const std::string& text) {
  OracleSpec spec;
  std::string base = text;
  if (!base.empty() && (base.back() == '+' || base.back() == '-')) {
    spec.sign = base.back() == '+' ? 1 : -1;
    base.pop_back();
  }
  spec.kind = parse_oracle_kind(base);
  return spec;
}

double oracle_reward(const Mat& segment, const OracleSpec& oracle,
                     int state_dim) {
  const int H = static_cast<int>(segment.rows());
  const int a_dim = static_cast<int>(segment.cols()) - state_dim;
  if (H < 2 || a_dim < 1)
    throw std::invalid_argument("oracle_reward: segment too small");
  const auto actions = segment.rightCols(a_dim);
  double r = 0.0;
  switch (oracle.kind) {
    case OracleKind::kSpeed:
      r = actions.rowwise().norm().mean();
      break;
    case OracleKind::kSmoothness: {
      double acc = 0;
      for (int t = 0; t + 1 < H; ++t)
        acc += (actions.row(t + 1) - actions.row(t)).norm();
      r = -acc / (H - 1);
      break;
    }
    case OracleKind::kCurl: {
      if (state_dim < 2 || H < 3)
        throw std::invalid_argument("oracle_reward: curl needs 2-D states, H >= 3");
      double acc = 0;
      for (int t = 0; t + 2 < H; ++t) {
        const double dx0 = segment(t + 1, 0) - segment(t, 0);
        const double dy0 = segment(t + 1, 1) - segment(t, 1);
        const double dx1 = segment(t + 2, 0) - segment(t + 1, 0);
        const double dy1 = segment(t + 2, 1) - segment(t + 1, 1);
        acc += dx0 * dy1 - dy0 * dx1;
      }
      r = acc / (H - 2);
      break;
    }
  }
  return oracle.sign * r;
}

std::string to_string(Winner w) { return w == Winner::kA ? "a" : "b"; }
std::string to_string(LabelSource s) {
  return s == LabelSource::kOracle ? "oracle" : "human";
}

Winner parse_winner(const std::string& text) {
  if (text == "a") return Winner::kA;
  if (text == "b") return Winner::kB;
  throw std::invalid_argument("winner must be \"a\" or \"b\", got \"" + text + "\"");
}

LabelSource parse_label_source(const std::string& text) {
  if (text == "oracle") return LabelSource::kOracle;
  if (text == "human") return LabelSource::kHuman;
  throw std::invalid_argument("label source must be oracle or human, got \"" +
                              text + "\"");
}

std::vector<QueryPair> make_query_pairs(
    const std::vector<FullTrajectory>& corpus, int n_query, int H,
    std::uint64_t seed) {
  if (n_query < 0) throw std::invalid_argument("make_query_pairs: n_query < 0");
  std::vector<std::pair<int, int>> candidates;
  for (int e = 0; e < static_cast<int>(corpus.size()); ++e)
    for (int s = 0; s + H <= corpus[e].length(); ++s) candidates.push_back({e, s});
  const std::size_t need = 2 * static_cast<std::size_t>(n_query);
  if (need > candidates.size())
    throw std::invalid_argument(
        "make_query_pairs: n_query=" + std::to_string(n_query) + " needs " +
        std::to_string(need) + " distinct segments but only " +
        std::to_string(candidates.size()) + " exist");
  Rng rng = make_rng(seed, 0x5150);
  for (std::size_t i = 0; i < need; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  std::vector<QueryPair> pairs(n_query);
  for (int q = 0; q < n_query; ++q) {
    char id[32];
    std::snprintf(id, sizeof(id), "q%05d", q);
    pairs[q].pair_id = id;
    const auto [ea, sa] = candidates[2 * q];
    const auto [eb, sb] = candidates[2 * q + 1];
    pairs[q].a = extract_segment(corpus[ea], sa, H);
    pairs[q].b = extract_segment(corpus[eb], sb, H);
  }
  return pairs;
}

std::optional<PreferenceLabel> oracle_label(const QueryPair& pair,
                                            const OracleSpec& oracle) {
  if (pair.a.data.rows() != pair.b.data.rows() ||
      pair.a.data.cols() != pair.b.data.cols())
    throw std::invalid_argument("oracle_label: segment shapes differ");
  const double ra = oracle_reward(pair.a.data, oracle);
  const double rb = oracle_reward(pair.b.data, oracle);
  if (std::abs(ra - rb) < kTieTolerance) return std::nullopt;
  PreferenceLabel label;
  label.pair_id = pair.pair_id;
  label.winner = ra > rb ? Winner::kA : Winner::kB;
  label.source = LabelSource::kOracle;
  return label;
}

std::vector<PreferenceLabel> oracle_label_all(
    const std::vector<QueryPair>& pairs, const OracleSpec& oracle,
    std::vector<std::string>* skipped) {
  std::vector<PreferenceLabel> labels;
  for (const QueryPair& p : pairs) {
    if (auto l = oracle_label(p, oracle))
      labels.push_back(*l);
    else if (skipped != nullptr)
      skipped->push_back(p.pair_id);
  }
  return labels;
}

std::vector<LabeledPair> resolve_labels(
    const std::vector<QueryPair>& pairs,
    const std::vector<PreferenceLabel>& labels, const Normalizer& normalizer) {
  std::unordered_map<std::string, const QueryPair*> by_id;
  for (const QueryPair& p : pairs) by_id[p.pair_id] = &p;
  std::vector<LabeledPair> out;
  out.reserve(labels.size());
  for (const PreferenceLabel& l : labels) {
    auto it = by_id.find(l.pair_id);
    if (it == by_id.end())
      throw std::invalid_argument("label references unknown pair_id " + l.pair_id);
    const QueryPair& p = *it->second;
    const Segment& w = l.winner == Winner::kA ? p.a : p.b;
    const Segment& lo = l.winner == Winner::kA ? p.b : p.a;
    out.push_back({normalizer.normalize(w.data), normalizer.normalize(lo.data)});
  }
  return out;
}

ReferenceScores reference_scores(const OracleSpec& oracle, int L, int H,
                                 int n_modes, std::uint64_t seed) {
  constexpr int kEpisodes = 200;
  auto mean_reward = [&](const std::vector<FullTrajectory>& episodes) {
    double acc = 0;
    int n = 0;
    for (const auto& e : episodes)
      for (int s = 0; s + H <= e.length(); s += H) {
        acc += oracle_reward(extract_segment(e, s, H).data, oracle);
        ++n;
      }
    return acc / n;
  };
  ReferenceScores scores;
  scores.random_score = mean_reward(generate_random_corpus(kEpisodes, L, seed));
  const auto scripted = generate_corpus(kEpisodes * n_modes / 4 + n_modes, L, n_modes, seed);
  scores.expert_score = -std::numeric_limits<double>::infinity();
  for (int m = 0; m < n_modes; ++m) {
    std::vector<FullTrajectory> mode_eps;
    for (const auto& e : scripted)
      if (e.mode_id == m) mode_eps.push_back(e);
    scores.expert_score = std::max(scores.expert_score, mean_reward(mode_eps));
  }
  return scores;
}

}  // namespace pledi
