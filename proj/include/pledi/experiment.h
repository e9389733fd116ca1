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


#ifndef PLEDI_EXPERIMENT_H_
#define PLEDI_EXPERIMENT_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pledi/checkpoint.h"
#include "pledi/config.h"
#include "pledi/dataio.h"

namespace pledi {

// Method names accepted by run_experiment.
inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> names = {
      "diffuser", "guided", "finetune_full", "finetune_lora", "inversion"};
  return names;
}

// Pretrains a checkpoint as configured (model, diffusion steps, pretrain
// options, seed).
struct PretrainRun {
  DenoiserCheckpoint checkpoint;
  DVector loss_history;
  double max_mapper_grad = 0.0;
};
PretrainRun pretrain_from_config(const RunConfig& config, const Dataset& data,
                                 const TrainProgress& progress = {});

// Preference inversion on stored labels. Throws std::invalid_argument naming
// the offending pair when a label references a segment outside the corpus.
AdaptedArtifact adapt_from_labels(const DenoiserCheckpoint& checkpoint,
                                  const std::vector<LabelRecord>& labels,
                                  const std::vector<FullTrajectory>& corpus,
                                  const InversionConfig& config,
                                  const InversionProgress& progress = {});

// Query pairs drawn from the corpus and labelled by an oracle. Segments are in
// environment units; `resolved` holds the normalized winner/loser segments.
struct OracleLabelSet {
  std::vector<QueryPair> pairs;
  std::vector<PreferenceLabel> labels;
  std::vector<LabeledPair> resolved;
};

OracleLabelSet make_oracle_labels(const Dataset& data, const OracleSpec& oracle,
                                  int n_query, int horizon, std::uint64_t seed);

// One evaluated cell: a method adapted on one label set and sampled once.
struct EvalReport {
  std::string method;
  std::string oracle;
  std::string sweep;    // "main", "n_adapt", "u", "prior" or "ple_dim"
  std::string setting;  // sweep value, e.g. "0.02"; empty for "main"
  int n_query = 0;
  int n_adapt = 0;
  std::uint64_t seed = 0;
  int n_labels = 0;
  int n_samples = 0;
  double mean_reward = 0.0;       // of the method's samples
  double base_mean_reward = 0.0;  // of the unadapted checkpoint's samples
  double win_rate = 0.0;          // method vs. unadapted checkpoint
  double normalized_score = 0.0;
  double runtime_seconds = 0.0;
};

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
// One JSON object per line, sorted by cell key.
std::string reports_to_jsonl(std::vector<EvalReport> reports);
// Header method,n_query,n_adapt,seed,metric,value. The method column carries
// the oracle and sweep setting ("inversion|speed+|u=0.02"); metrics are
// win_rate, mean_reward, base_mean_reward, normalized_score, runtime_seconds.
std::string reports_to_csv(std::vector<EvalReport> reports);

// Mean and standard deviation over seeds of every cell group.
struct ReportSummary {
  std::string method, oracle, sweep, setting;
  int n_query = 0;
  int n_adapt = 0;
  int n_seeds = 0;
  double win_rate_mean = 0.0, win_rate_std = 0.0;
  double mean_reward_mean = 0.0, mean_reward_std = 0.0;
  double normalized_score_mean = 0.0, normalized_score_std = 0.0;
};
std::vector<ReportSummary> summarize(const std::vector<EvalReport>& reports);
std::string summaries_to_csv(const std::vector<ReportSummary>& summaries);

struct ExperimentInputs {
  const Dataset* data = nullptr;
  const RunConfig* config = nullptr;
  const DenoiserCheckpoint* base = nullptr;
  // Pretrained checkpoint for another PLE dimension; required only by the
  // ple_dim sweep.
  std::function<DenoiserCheckpoint(int ple_dim)> pretrained_for_dim;
};

using ExperimentLog = std::function<void(const EvalReport&)>;

// Runs the cells enabled in config.eval: the main grid (methods x oracles x
// n_query_grid x seeds) and the optional sweeps, which use query.n_query:
//   n_adapt  inversion, finetune_full and finetune_lora at each n_adapt_sweep
//            value (one run per seed with snapshots)
//   u        inversion at each u_sweep value
//   prior    inversion with each prior
//   ple_dim  inversion on a checkpoint pretrained at each ple_dims value
// Rejects unknown method, oracle and prior names before any work.
std::vector<EvalReport> run_experiment(const ExperimentInputs& inputs,
                                       const ExperimentLog& log = {});

// Seeds used for one cell.
struct CellSeeds {
  std::uint64_t labels, adapt, samples, base_samples, pairing;
};
CellSeeds cell_seeds(std::uint64_t seed, int n_query);

}  // namespace pledi

#endif  // PLEDI_EXPERIMENT_H_
