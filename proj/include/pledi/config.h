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


#ifndef PLEDI_CONFIG_H_
#define PLEDI_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "pledi/baselines.h"
#include "pledi/denoiser.h"
#include "pledi/guidance.h"
#include "pledi/pipeline.h"
#include "pledi/ple.h"

namespace pledi {

using Json = nlohmann::json;

struct DataConfig {
  int n_episodes = 750;
  int episode_length = 64;
  int n_modes = 4;
};

struct QueryConfig {
  int n_query = 50;
  std::string oracle = "speed+";
};

struct EvalConfig {
  std::vector<std::string> methods = {"diffuser", "guided", "finetune_full",
                                      "finetune_lora", "inversion"};
  std::vector<int> n_query_grid = {10, 25, 50, 100};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<std::string> oracles = {"speed+"};
  int n_samples = 100;
  std::vector<int> n_adapt_sweep = {1000, 5000, 15000, 20000, 30000};
  DVector u_sweep = {0.0, 0.005, 0.01, 0.02, 0.05};
  std::vector<std::string> priors = {"uniform01", "gaussian_half", "fixed_half"};
  std::vector<int> ple_dims = {2, 4, 8, 16, 32};
  bool run_main = true;
  bool run_n_adapt_sweep = false;
  bool run_u_sweep = false;
  bool run_prior_sweep = false;
  bool run_ple_dim_sweep = false;
};

struct PathsConfig {
  std::string data_dir = "data";
  std::string checkpoint = "pretrained.pledi";
  std::string sessions_dir = "sessions";
};

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
};

// Every section and key is optional; missing keys keep the defaults below and
// unknown keys are rejected. Component seeds are derived from `seed`.
struct RunConfig {
  DataConfig data;
  DenoiserConfig model;
  int diffusion_steps = 100;
  PretrainOptions pretrain;
  InversionConfig inversion;
  GuidanceWeights guidance;
  QueryConfig query;
  RewardModelConfig reward_model;
  double reward_guidance_scale = 1.0;
  FinetuneConfig finetune;
  EvalConfig eval;
  PathsConfig paths;
  ServeConfig serve;
  std::uint64_t seed = 0;

  // Sets `seed` and re-derives every component seed from it.
  void set_seed(std::uint64_t s);
  // Range checks on every field; throws std::invalid_argument naming the key.
  void validate() const;
};

RunConfig parse_config(const Json& j);
RunConfig load_config(const std::string& path);
Json to_json(const RunConfig& config);

}  // namespace pledi

#endif  // PLEDI_CONFIG_H_
