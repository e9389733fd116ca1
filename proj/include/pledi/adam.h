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

#ifndef PLEDI_ADAM_H_
#define PLEDI_ADAM_H_

#include <span>
#include <vector>

namespace pledi {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip_norm = 0.0;  // 0 disables global-norm clipping
};

// Adaptive moment estimation over a flat parameter span.
class Adam {
 public:
  Adam(std::size_t size, AdamOptions options);

  void step(std::span<double> params, std::span<const double> grads);

  long steps_taken() const { return t_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

}  // namespace pledi

#endif  // PLEDI_ADAM_H_
