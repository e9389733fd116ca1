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

#include "pledi/lora.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pledi {
namespace {

// '*' matches any run of characters; anything else must match literally.
bool glob_match(const std::string& pattern, const std::string& text) {
  std::size_t p = 0, t = 0, star = std::string::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && pattern[p] == text[t]) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (star != std::string::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

bool is_weight(const TensorSpec& t) {
  return t.rows > 1 && t.name.size() > 2 &&
         t.name.compare(t.name.size() - 2, 2, ".w") == 0 &&
         t.name.rfind("mapper.", 0) != 0;
}

}  // namespace

const LowRankDelta* LoraAdapters::find(const std::string& target) const {
  for (const auto& d : deltas)
    if (d.target == target) return &d;
  return nullptr;
}

std::size_t LoraAdapters::trainable_count() const {
  std::size_t n = 0;
  for (const auto& d : deltas) n += d.down.size() + d.up.size();
  return n;
}

std::vector<std::string> lora_targets(const ParamLayout& layout,
                                      const std::vector<std::string>& patterns) {
  std::vector<std::string> out;
  for (const TensorSpec& t : layout.tensors()) {
    if (!is_weight(t)) continue;
    for (const auto& p : patterns) {
      if (glob_match(p, t.name)) {
        out.push_back(t.name);
        break;
      }
    }
  }
  return out;
}

LoraAdapters init_lora(const DenoiserParams& base,
                       const std::vector<std::string>& targets, int rank,
                       std::uint64_t seed) {
  if (rank < 1) throw std::invalid_argument("init_lora: rank must be >= 1");
  if (targets.empty()) throw std::invalid_argument("init_lora: no target tensors");
  LoraAdapters adapters;
  adapters.rank = rank;
  Rng rng = make_rng(seed, 0x10a);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const std::string& name : targets) {
    const TensorSpec& t = base.layout.at(name);
    if (rank > std::min(t.rows, t.cols))
      throw std::invalid_argument(
          "init_lora: rank " + std::to_string(rank) + " exceeds min(" +
          std::to_string(t.rows) + ", " + std::to_string(t.cols) + ") of " + name);
    LowRankDelta d;
    d.target = name;
    d.down = Mat::Zero(t.rows, rank);
    d.up.resize(rank, t.cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(t.rows));
    for (int i = 0; i < rank; ++i)
      for (int j = 0; j < t.cols; ++j) d.up(i, j) = scale * normal(rng);
    adapters.deltas.push_back(std::move(d));
  }
  return adapters;
}

DenoiserParams merge_lora(const DenoiserParams& base,
                          const LoraAdapters& adapters) {
  DenoiserParams merged = base;
  for (const auto& d : adapters.deltas) merged.tensor(d.target) += d.down * d.up;
  return merged;
}

void lora_factor_grads(const LoraAdapters& adapters,
                       const DenoiserParams& base_layout_owner,
                       const DVector& grad_effective,
                       DVector& grads) {
  grads.assign(adapters.trainable_count(), 0.0);
  std::size_t off = 0;
  for (const auto& d : adapters.deltas) {
    const TensorSpec& t = base_layout_owner.layout.at(d.target);
    Eigen::Map<const Mat> dW(grad_effective.data() + t.offset, t.rows, t.cols);
    Eigen::Map<Mat> d_down(grads.data() + off, d.down.rows(), d.down.cols());
    off += d.down.size();
    Eigen::Map<Mat> d_up(grads.data() + off, d.up.rows(), d.up.cols());
    off += d.up.size();
    d_down = dW * d.up.transpose();
    d_up = d.down.transpose() * dW;
  }
}

DVector flatten_lora(const LoraAdapters& adapters) {
  DVector flat;
  flat.reserve(adapters.trainable_count());
  for (const auto& d : adapters.deltas) {
    flat.insert(flat.end(), d.down.data(), d.down.data() + d.down.size());
    flat.insert(flat.end(), d.up.data(), d.up.data() + d.up.size());
  }
  return flat;
}

void unflatten_lora(std::span<const double> flat, LoraAdapters& adapters) {
  if (flat.size() != adapters.trainable_count())
    throw std::invalid_argument("unflatten_lora: size mismatch");
  std::size_t off = 0;
  for (auto& d : adapters.deltas) {
    std::copy_n(flat.data() + off, d.down.size(), d.down.data());
    off += d.down.size();
    std::copy_n(flat.data() + off, d.up.size(), d.up.data());
    off += d.up.size();
  }
}

ParamLayout lora_layout(const LoraAdapters& adapters) {
  ParamLayout layout;
  for (const auto& d : adapters.deltas) {
    layout.add(d.target + ".down", static_cast<int>(d.down.rows()),
               static_cast<int>(d.down.cols()));
    layout.add(d.target + ".up", static_cast<int>(d.up.rows()),
               static_cast<int>(d.up.cols()));
  }
  return layout;
}

}  // namespace pledi
