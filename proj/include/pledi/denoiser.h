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

#ifndef PLEDI_DENOISER_H_
#define PLEDI_DENOISER_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pledi/common.h"
#include "pledi/schedule.h"

namespace pledi {

struct LoraAdapters;

struct DenoiserConfig {
  int horizon = 16;
  int state_dim = 2;
  int action_dim = 2;
  int ple_dim = 16;
  int hidden_width = 32;
  int n_blocks = 3;
  int time_embed_dim = 32;
  // Width of the per-timestep hidden layer of the trajectory mapper;
  // 0 makes the mapper a single affine projection.
  int mapper_hidden = 32;
  std::uint64_t seed = 0;

  int channels() const { return state_dim + action_dim; }
  int cond_dim() const { return time_embed_dim + ple_dim; }
  void validate() const;
  bool operator==(const DenoiserConfig&) const = default;
};

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// Ordered (name, shape, offset) table describing a flat parameter vector.
class ParamLayout {
 public:
  void add(std::string name, int rows, int cols);
  const TensorSpec& at(std::string_view name) const;
  const TensorSpec* find(std::string_view name) const;
  std::size_t total() const { return total_; }
  const std::vector<TensorSpec>& tensors() const { return tensors_; }
  bool operator==(const ParamLayout& other) const;

 private:
  std::vector<TensorSpec> tensors_;
  std::size_t total_ = 0;
};

// Network layout (all weights stored as in x out, applied as x * W):
//   in.w          (3C x W)    kernel-3 input convolution, in.b (1 x W)
//   cond.w        (E x W)     E = time_embed_dim + ple_dim, cond.b
//   blk{i}.conv1  (3W x W)    + bias
//   blk{i}.film   (W x 2W)    per-block scale/shift from the conditioning
//   blk{i}.conv2  (3W x W)    + bias
//   out.w         (3W x C)    + bias
//   null_context  (1 x d_e)
//   mapper.*                  trajectory mapper (see mapper.h)
ParamLayout denoiser_layout(const DenoiserConfig& config);

struct DenoiserParams {
  DenoiserConfig config;
  ParamLayout layout;
  DVector flat;

  Eigen::Map<const Mat> tensor(std::string_view name) const;
  Eigen::Map<Mat> tensor(std::string_view name);
  Vec null_context() const;
};

// Weights ~ N(0, 1/fan_in), biases 0, null context 0.5; deterministic in seed.
DenoiserParams init_params(const DenoiserConfig& config);

// nullopt is the null-context sentinel; it resolves to params.null_context.
using Context = std::optional<Vec>;

Trajectory denoise(const DenoiserParams& params, const Trajectory& tau_k,
                   int k, const Context& ctx);

void sinusoidal_embedding(int k, std::span<double> out);

struct DenoiseItem {
  const Trajectory* x = nullptr;
  int k = 0;
  const Vec* ctx = nullptr;  // nullptr selects the null context
};

// One batched forward evaluation that retains its activations so that
// reverse-mode gradients can be taken afterwards. `params` must outlive it.
class DenoiserPass {
 public:
  DenoiserPass(const DenoiserParams& params, std::span<const DenoiseItem> items,
               const LoraAdapters* lora = nullptr);

  int batch() const { return batch_; }
  // Rows [i*H, (i+1)*H) belong to item i.
  const Mat& outputs() const { return y_; }
  Trajectory output(int i) const;

  struct Gradients {
    DVector params;  // empty unless requested
    std::vector<Vec> ctx;        // d loss / d (resolved) context, per item
  };
  // Pulls `d_outputs` (same shape as outputs()) back through the network.
  Gradients backward(const Mat& d_outputs, bool want_param_grads = true) const;

 private:
  struct Block {
    Mat col1, a, film, a2, a3, col2;
  };
  const DenoiserParams& params_;
  int batch_ = 0;
  int horizon_ = 0;
  bool has_lora_ = false;
  std::vector<bool> is_null_;
  Mat cond_in_, cond_pre_, cond_, col_in_, h_final_, col_out_, y_;
  std::vector<Block> blocks_;
};

struct TrainItem {
  Trajectory tau_0;
  int k = 0;
  Mat epsilon;
  Context ctx;
};

struct LossAndGrads {
  double loss = 0.0;
  DVector grad_params;
  std::vector<Vec> grad_ctx;
};

// Mean over the batch of the per-entry mean squared error between epsilon and
// the prediction at tau_k = forward_noise(tau_0, k, epsilon).
LossAndGrads loss_and_grads(const DenoiserParams& params,
                            const NoiseSchedule& schedule,
                            std::span<const TrainItem> batch);

// Per-entry mean squared error and its gradient w.r.t. `prediction`.
double denoising_mse(const Mat& target, const Mat& prediction,
                     Mat* grad_prediction = nullptr);

}  // namespace pledi

#endif  // PLEDI_DENOISER_H_
