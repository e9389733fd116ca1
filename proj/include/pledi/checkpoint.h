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


#ifndef PLEDI_CHECKPOINT_H_
#define PLEDI_CHECKPOINT_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pledi/baselines.h"
#include "pledi/denoiser.h"
#include "pledi/envdata.h"
#include "pledi/lora.h"

namespace pledi {

// File layout:
//   "PLEDIFF1"                       8-byte magic
//   header length                    uint64, little-endian
//   header                           UTF-8 JSON text of exactly that length
//   payload                          float32 little-endian, layout order
// The header carries {format_version, type, layout, ...type-specific fields}.
inline constexpr char kCheckpointMagic[] = "PLEDIFF1";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string type;  // "denoiser", "reward" or "lora"
  nlohmann::json header;
  DVector payload;  // widened from float32
};

void write_checkpoint(const std::string& path, const std::string& type,
                      nlohmann::json header, std::span<const double> payload);
Checkpoint read_checkpoint(const std::string& path);

nlohmann::json layout_to_json(const ParamLayout& layout);
ParamLayout layout_from_json(const nlohmann::json& j);

struct DenoiserCheckpoint {
  DenoiserParams params;
  Normalizer normalizer;
  std::vector<std::uint8_t> mask;
  int diffusion_steps = 100;
  nlohmann::json run_config;  // snapshot of the producing configuration
};

void save_denoiser(const std::string& path, const DenoiserCheckpoint& ckpt);
DenoiserCheckpoint load_denoiser(const std::string& path);

void save_reward_model(const std::string& path, const RewardModelParams& rm);
RewardModelParams load_reward_model(const std::string& path);

void save_lora(const std::string& path, const LoraAdapters& adapters);
LoraAdapters load_lora(const std::string& path);

// Rounds every entry to float32 and back, as a save/load cycle does.
DVector round_to_float(std::span<const double> values);

}  // namespace pledi

#endif  // PLEDI_CHECKPOINT_H_
