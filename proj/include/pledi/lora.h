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

#ifndef PLEDI_LORA_H_
#define PLEDI_LORA_H_

#include <cstdint>
#include <string>
#include <vector>

#include "pledi/common.h"
#include "pledi/denoiser.h"

namespace pledi {

// Low-rank update of one weight tensor W (m x n): W_eff = W + down * up with
// down (m x r) and up (r x n). `down` starts at zero.
struct LowRankDelta {
  std::string target;
  Mat down;
  Mat up;
};

struct LoraAdapters {
  int rank = 0;
  std::vector<LowRankDelta> deltas;

  const LowRankDelta* find(const std::string& target) const;
  std::size_t trainable_count() const;
};

// Patterns are globs where '*' matches any run of characters ("blk*.film.w"
// selects every FiLM kernel). Only weight matrices qualify: biases,
// null_context and the mapper never receive adapters.
std::vector<std::string> lora_targets(const ParamLayout& layout,
                                      const std::vector<std::string>& patterns);

// Rejects rank < 1 or rank > min(m, n) for any selected tensor.
LoraAdapters init_lora(const DenoiserParams& base,
                       const std::vector<std::string>& targets, int rank,
                       std::uint64_t seed);

// Folds the deltas into a copy of the base parameters.
DenoiserParams merge_lora(const DenoiserParams& base,
                          const LoraAdapters& adapters);

// Chain rule from d loss / d W_eff to the low-rank factors, written into
// `grads` laid out like flatten_lora().
void lora_factor_grads(const LoraAdapters& adapters,
                       const DenoiserParams& base_layout_owner,
                       const DVector& grad_effective,
                       DVector& grads);

DVector flatten_lora(const LoraAdapters& adapters);
void unflatten_lora(std::span<const double> flat, LoraAdapters& adapters);
ParamLayout lora_layout(const LoraAdapters& adapters);

}  // namespace pledi

#endif  // PLEDI_LORA_H_
