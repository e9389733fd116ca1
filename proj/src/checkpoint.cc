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


#include "pledi/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace pledi {
namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

json vec_to_json(const Vec& v) {
  return DVector(v.data(), v.data() + v.size());
}

Vec vec_from_json(const json& j) {
  const auto values = j.get<DVector>();
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

void expect_type(const Checkpoint& c, const std::string& type,
                 const std::string& path) {
  if (c.type != type)
    throw std::runtime_error(path + ": expected a " + type +
                             " checkpoint but found type '" + c.type + "'");
}

}  // namespace

DVector round_to_float(std::span<const double> values) {
  DVector out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<double>(static_cast<float>(values[i]));
  return out;
}

json layout_to_json(const ParamLayout& layout) {
  json arr = json::array();
  for (const TensorSpec& t : layout.tensors())
    arr.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols},
                   {"offset", t.offset}});
  return arr;
}

ParamLayout layout_from_json(const json& j) {
  ParamLayout layout;
  for (const json& t : j) {
    layout.add(t.at("name").get<std::string>(), t.at("rows").get<int>(),
               t.at("cols").get<int>());
    if (layout.tensors().back().offset != t.at("offset").get<std::size_t>())
      throw std::runtime_error("checkpoint: layout offsets are inconsistent");
  }
  return layout;
}

void write_checkpoint(const std::string& path, const std::string& type,
                      json header, std::span<const double> payload) {
  header["format_version"] = kCheckpointVersion;
  header["type"] = type;
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(kCheckpointMagic, 8);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<float> blob(payload.size());
  for (std::size_t i = 0; i < payload.size(); ++i)
    blob[i] = static_cast<float>(payload[i]);
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || bytes.compare(0, 8, kCheckpointMagic) != 0)
    throw std::runtime_error(path + ": not a PLEDIFF1 checkpoint");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  if (len > bytes.size() - 16)
    throw std::runtime_error(path + ": header length exceeds file size");
  Checkpoint c;
  try {
    c.header = json::parse(bytes.substr(16, len));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": malformed header: " + e.what());
  }
  if (c.header.value("format_version", 0) != kCheckpointVersion)
    throw std::runtime_error(path + ": unsupported format version");
  c.type = c.header.at("type").get<std::string>();
  const ParamLayout layout = layout_from_json(c.header.at("layout"));
  const std::size_t payload_bytes = bytes.size() - 16 - len;
  if (payload_bytes != layout.total() * sizeof(float))
    throw std::runtime_error(path + ": payload holds " +
                             std::to_string(payload_bytes / sizeof(float)) +
                             " values but the layout needs " +
                             std::to_string(layout.total()));
  std::vector<float> blob(layout.total());
  std::memcpy(blob.data(), bytes.data() + 16 + len, payload_bytes);
  c.payload.assign(blob.begin(), blob.end());
  return c;
}

void save_denoiser(const std::string& path, const DenoiserCheckpoint& ckpt) {
  const DenoiserConfig& m = ckpt.params.config;
  json h;
  h["model"] = {{"horizon", m.horizon},         {"state_dim", m.state_dim},
                {"action_dim", m.action_dim},   {"ple_dim", m.ple_dim},
                {"hidden_width", m.hidden_width}, {"n_blocks", m.n_blocks},
                {"time_embed_dim", m.time_embed_dim},
                {"mapper_hidden", m.mapper_hidden}, {"seed", m.seed}};
  h["diffusion_steps"] = ckpt.diffusion_steps;
  h["normalizer"] = {{"min", vec_to_json(ckpt.normalizer.min())},
                     {"max", vec_to_json(ckpt.normalizer.max())}};
  h["mask"] = std::vector<int>(ckpt.mask.begin(), ckpt.mask.end());
  h["run_config"] = ckpt.run_config;
  h["layout"] = layout_to_json(ckpt.params.layout);
  write_checkpoint(path, "denoiser", std::move(h), ckpt.params.flat);
}

DenoiserCheckpoint load_denoiser(const std::string& path) {
  Checkpoint c = read_checkpoint(path);
  expect_type(c, "denoiser", path);
  const json& m = c.header.at("model");
  DenoiserConfig cfg;
  cfg.horizon = m.at("horizon");
  cfg.state_dim = m.at("state_dim");
  cfg.action_dim = m.at("action_dim");
  cfg.ple_dim = m.at("ple_dim");
  cfg.hidden_width = m.at("hidden_width");
  cfg.n_blocks = m.at("n_blocks");
  cfg.time_embed_dim = m.at("time_embed_dim");
  cfg.mapper_hidden = m.at("mapper_hidden");
  cfg.seed = m.at("seed");
  DenoiserCheckpoint out;
  out.params.config = cfg;
  out.params.layout = denoiser_layout(cfg);
  if (!(out.params.layout == layout_from_json(c.header.at("layout"))))
    throw std::runtime_error(path + ": layout does not match the model config");
  out.params.flat = std::move(c.payload);
  out.diffusion_steps = c.header.at("diffusion_steps");
  out.normalizer = Normalizer(vec_from_json(c.header.at("normalizer").at("min")),
                              vec_from_json(c.header.at("normalizer").at("max")));
  for (int v : c.header.at("mask").get<std::vector<int>>())
    out.mask.push_back(static_cast<std::uint8_t>(v != 0));
  out.run_config = c.header.value("run_config", json::object());
  return out;
}

void save_reward_model(const std::string& path, const RewardModelParams& rm) {
  json h;
  h["horizon"] = rm.horizon;
  h["channels"] = rm.channels;
  h["hidden"] = rm.hidden;
  h["layout"] = layout_to_json(rm.layout);
  write_checkpoint(path, "reward", std::move(h), rm.flat);
}

RewardModelParams load_reward_model(const std::string& path) {
  Checkpoint c = read_checkpoint(path);
  expect_type(c, "reward", path);
  RewardModelParams rm = init_reward_model(c.header.at("horizon"),
                                           c.header.at("channels"),
                                           c.header.at("hidden"), 0);
  if (!(rm.layout == layout_from_json(c.header.at("layout"))))
    throw std::runtime_error(path + ": reward-model layout mismatch");
  rm.flat = std::move(c.payload);
  return rm;
}

void save_lora(const std::string& path, const LoraAdapters& adapters) {
  json h;
  h["rank"] = adapters.rank;
  json targets = json::array();
  for (const auto& d : adapters.deltas) targets.push_back(d.target);
  h["targets"] = targets;
  h["layout"] = layout_to_json(lora_layout(adapters));
  write_checkpoint(path, "lora", std::move(h), flatten_lora(adapters));
}

LoraAdapters load_lora(const std::string& path) {
  Checkpoint c = read_checkpoint(path);
  expect_type(c, "lora", path);
  const ParamLayout layout = layout_from_json(c.header.at("layout"));
  LoraAdapters a;
  a.rank = c.header.at("rank");
  for (const auto& name : c.header.at("targets").get<std::vector<std::string>>()) {
    const TensorSpec& down = layout.at(name + ".down");
    const TensorSpec& up = layout.at(name + ".up");
    a.deltas.push_back({name, Mat::Zero(down.rows, down.cols), Mat::Zero(up.rows, up.cols)});
  }
  unflatten_lora(c.payload, a);
  return a;
}

}  // namespace pledi
