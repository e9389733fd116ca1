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

#ifndef PLEDI_ENVDATA_H_
#define PLEDI_ENVDATA_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pledi/common.h"

namespace pledi {

// 2-D kinematic point mass.
inline constexpr int kStateDim = 2;
inline constexpr int kActionDim = 2;
inline constexpr double kDt = 0.1;
inline constexpr double kMaxActionNorm = 1.0;

// state + dt * action, with the action first clamped to norm <= 1.
Vec step_dynamics(const Vec& state, const Vec& action);

struct FullTrajectory {
  int episode_id = 0;
  int mode_id = 0;  // generator bookkeeping, never shown to models
  Mat states;       // L x S
  Mat actions;      // L x A

  int length() const { return static_cast<int>(states.rows()); }
  // L x (S+A): states then actions per timestep.
  Mat matrix() const;
};

// Scripted controller parameters for one behavioural mode.
struct ModeParams {
  double omega = 0.0;     // heading drift rate, rad/s
  double speed = 0.0;     // target speed, units/s
  double waviness = 0.0;  // heading oscillation amplitude, rad
};
ModeParams mode_params(int mode, int n_modes);

// Balanced modes (episode i has mode i % n_modes), per-episode random start
// position and heading, small seeded noise. Deterministic in seed.
std::vector<FullTrajectory> generate_corpus(int n_episodes, int L, int n_modes,
                                            std::uint64_t seed);

// Uniformly random actions in the unit disk; used for reference scores.
std::vector<FullTrajectory> generate_random_corpus(int n_episodes, int L,
                                                   std::uint64_t seed);

// Largest dynamics residual |s[t+1] - s[t] - dt a[t]| over the episode.
double dynamics_residual(const FullTrajectory& traj);

struct Segment {
  Mat data;  // H x (S+A)
  int episode_id = 0;
  int start = 0;
};

Segment extract_segment(const FullTrajectory& traj, int start, int H);

class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(Vec min, Vec max);

  static Normalizer fit(const std::vector<FullTrajectory>& corpus);

  // Affine map to [-1, 1] per column; a degenerate column maps to 0.
  Mat normalize(const Mat& x) const;
  Mat denormalize(const Mat& x) const;

  const Vec& min() const { return min_; }
  const Vec& max() const { return max_; }
  const std::vector<int>& degenerate_dims() const { return degenerate_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  Vec min_, max_;
  std::vector<int> degenerate_;
  std::vector<std::string> warnings_;
};

enum class OracleKind { kSpeed, kSmoothness, kCurl };

struct OracleSpec {
  OracleKind kind = OracleKind::kSpeed;
  int sign = 1;  // +1 or -1

  std::string name() const;  // e.g. "speed+", "curl-"
  static OracleSpec parse(const std::string& text);
};

std::string to_string(OracleKind kind);
OracleKind parse_oracle_kind(const std::string& text);

// Hidden reward of a segment given in environment units:
//   speed       mean |a_t|
//   smoothness  -mean |a_{t+1} - a_t|
//   curl        mean cross(d_t, d_{t+1}), d_t = s_{t+1} - s_t
double oracle_reward(const Mat& segment, const OracleSpec& oracle,
                     int state_dim = kStateDim);

struct QueryPair {
  std::string pair_id;
  Segment a;
  Segment b;
};

enum class Winner { kA, kB };
enum class LabelSource { kOracle, kHuman };

struct PreferenceLabel {
  std::string pair_id;
  Winner winner = Winner::kA;
  LabelSource source = LabelSource::kOracle;
  std::int64_t timestamp = 0;
};

std::string to_string(Winner w);
std::string to_string(LabelSource s);
Winner parse_winner(const std::string& text);
LabelSource parse_label_source(const std::string& text);

// Segments drawn uniformly over (episode, start) without replacement.
std::vector<QueryPair> make_query_pairs(
    const std::vector<FullTrajectory>& corpus, int n_query, int H,
    std::uint64_t seed);

inline constexpr double kTieTolerance = 1e-9;

// Winner has strictly higher reward; ties (|diff| < 1e-9) yield nullopt.
// Segments are expected in environment units.
std::optional<PreferenceLabel> oracle_label(const QueryPair& pair,
                                            const OracleSpec& oracle);

// Labels every pair, dropping ties. `skipped` receives the skipped pair ids.
std::vector<PreferenceLabel> oracle_label_all(
    const std::vector<QueryPair>& pairs, const OracleSpec& oracle,
    std::vector<std::string>* skipped = nullptr);

// Winner and loser segments of a labelled pair, in model (normalized) units.
struct LabeledPair {
  Mat winner;
  Mat loser;
};

std::vector<LabeledPair> resolve_labels(
    const std::vector<QueryPair>& pairs,
    const std::vector<PreferenceLabel>& labels, const Normalizer& normalizer);

// Mean oracle reward of uniformly random controllers and of the best scripted
// mode, over segments of length H.
struct ReferenceScores {
  double random_score = 0.0;
  double expert_score = 0.0;
};
ReferenceScores reference_scores(const OracleSpec& oracle, int L, int H,
                                 int n_modes, std::uint64_t seed);

}  // namespace pledi

#endif  // PLEDI_ENVDATA_H_
