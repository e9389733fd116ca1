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

#include "pledi/denoiser.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pledi/lora.h"

namespace pledi {
namespace {

using ConstMap = Eigen::Map<const Mat>;

void require_positive(int value, const char* name) {
  if (value < 1)
    throw std::invalid_argument(std::string("DenoiserConfig: ") + name +
                                " must be positive, got " +
                                std::to_string(value));
}

Mat silu(const Mat& x) {
  return x.unaryExpr([](double v) { return pledi::silu(v); });
}

Mat silu_backward(const Mat& pre, const Mat& grad) {
  return grad.cwiseProduct(
      pre.unaryExpr([](double v) { return pledi::silu_grad(v); }));
}

// (B*H x C) -> (B*H x 3C): row (b, t) holds [x(t-1), x(t), x(t+1)] with zero
// padding at both ends of every item.
Mat im2col(const Mat& x, int horizon) {
  const int rows = static_cast<int>(x.rows());
  const int c = static_cast<int>(x.cols());
  Mat col = Mat::Zero(rows, 3 * c);
  for (int r = 0; r < rows; ++r) {
    const int t = r % horizon;
    if (t > 0) col.block(r, 0, 1, c) = x.row(r - 1);
    col.block(r, c, 1, c) = x.row(r);
    if (t + 1 < horizon) col.block(r, 2 * c, 1, c) = x.row(r + 1);
  }
  return col;
}

// Adjoint of im2col.
Mat col2im(const Mat& dcol, int horizon) {
  const int rows = static_cast<int>(dcol.rows());
  const int c = static_cast<int>(dcol.cols()) / 3;
  Mat dx = dcol.block(0, c, rows, c);
  for (int r = 0; r < rows; ++r) {
    const int t = r % horizon;
    if (t > 0) dx.row(r - 1) += dcol.block(r, 0, 1, c);
    if (t + 1 < horizon) dx.row(r + 1) += dcol.block(r, 2 * c, 1, c);
  }
  return dx;
}

class GradSink {
 public:
  GradSink(const ParamLayout& layout, DVector* out)
      : layout_(layout), out_(out) {}
  bool active() const { return out_ != nullptr; }
  Eigen::Map<Mat> operator[](std::string_view name) {
    const TensorSpec& t = layout_.at(name);
    return Eigen::Map<Mat>(out_->data() + t.offset, t.rows, t.cols);
  }

 private:
  const ParamLayout& layout_;
  DVector* out_;
};

}  // namespace

void DenoiserConfig::validate() const {
  require_positive(horizon, "horizon");
  require_positive(state_dim, "state_dim");
  require_positive(action_dim, "action_dim");
  require_positive(ple_dim, "ple_dim");
  require_positive(hidden_width, "hidden_width");
  require_positive(n_blocks, "n_blocks");
  require_positive(time_embed_dim, "time_embed_dim");
  if (horizon < 2)
    throw std::invalid_argument("DenoiserConfig: horizon must be >= 2");
  if (time_embed_dim % 2 != 0)
    throw std::invalid_argument("DenoiserConfig: time_embed_dim must be even");
  if (mapper_hidden < 0)
    throw std::invalid_argument("DenoiserConfig: mapper_hidden must be >= 0");
}

void ParamLayout::add(std::string name, int rows, int cols) {
  if (find(name) != nullptr)
    throw std::invalid_argument("ParamLayout: duplicate tensor " + name);
  TensorSpec spec{std::move(name), rows, cols, total_};
  total_ += spec.size();
  tensors_.push_back(std::move(spec));
}

const TensorSpec* ParamLayout::find(std::string_view name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return &t;
  return nullptr;
}

const TensorSpec& ParamLayout::at(std::string_view name) const {
  const TensorSpec* t = find(name);
  if (t == nullptr)
    throw std::out_of_range("ParamLayout: no tensor named " +
                            std::string(name));
  return *t;
}

bool ParamLayout::operator==(const ParamLayout& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto &a = tensors_[i], &b = other.tensors_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols ||
        a.offset != b.offset)
      return false;
  }
  return true;
}

ParamLayout denoiser_layout(const DenoiserConfig& config) {
  config.validate();
  const int c = config.channels();
  const int w = config.hidden_width;
  ParamLayout layout;
  layout.add("in.w", 3 * c, w);
  layout.add("in.b", 1, w);
  layout.add("cond.w", config.cond_dim(), w);
  layout.add("cond.b", 1, w);
  for (int i = 0; i < config.n_blocks; ++i) {
    const std::string p = "blk" + std::to_string(i) + ".";
    layout.add(p + "conv1.w", 3 * w, w);
    layout.add(p + "conv1.b", 1, w);
    layout.add(p + "film.w", w, 2 * w);
    layout.add(p + "film.b", 1, 2 * w);
    layout.add(p + "conv2.w", 3 * w, w);
    layout.add(p + "conv2.b", 1, w);
  }
  layout.add("out.w", 3 * w, c);
  layout.add("out.b", 1, c);
  layout.add("null_context", 1, config.ple_dim);
  if (config.mapper_hidden > 0) {
    layout.add("mapper.hidden.w", c, config.mapper_hidden);
    layout.add("mapper.hidden.b", 1, config.mapper_hidden);
    layout.add("mapper.proj.w", config.mapper_hidden, config.ple_dim);
  } else {
    layout.add("mapper.proj.w", c, config.ple_dim);
  }
  layout.add("mapper.proj.b", 1, config.ple_dim);
  return layout;
}

Eigen::Map<const Mat> DenoiserParams::tensor(std::string_view name) const {
  const TensorSpec& t = layout.at(name);
  return Eigen::Map<const Mat>(flat.data() + t.offset, t.rows, t.cols);
}

Eigen::Map<Mat> DenoiserParams::tensor(std::string_view name) {
  const TensorSpec& t = layout.at(name);
  return Eigen::Map<Mat>(flat.data() + t.offset, t.rows, t.cols);
}

Vec DenoiserParams::null_context() const {
  return tensor("null_context").row(0).transpose();
}

DenoiserParams init_params(const DenoiserConfig& config) {
  DenoiserParams params;
  params.config = config;
  params.layout = denoiser_layout(config);
  params.flat.assign(params.layout.total(), 0.0);
  Rng rng = make_rng(config.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const TensorSpec& t : params.layout.tensors()) {
    auto view = params.tensor(t.name);
    if (t.name == "null_context") {
      view.setConstant(0.5);
    } else if (t.rows > 1) {
      // Rows are the fan-in for every x * W weight in this layout.
      const double scale = 1.0 / std::sqrt(static_cast<double>(t.rows));
      for (int i = 0; i < t.rows; ++i)
        for (int j = 0; j < t.cols; ++j) view(i, j) = scale * normal(rng);
    }
  }
  return params;
}

void sinusoidal_embedding(int k, std::span<double> out) {
  const int half = static_cast<int>(out.size()) / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    out[i] = std::sin(k * freq);
    out[half + i] = std::cos(k * freq);
  }
}

DenoiserPass::DenoiserPass(const DenoiserParams& params,
                           std::span<const DenoiseItem> items,
                           const LoraAdapters* lora)
    : params_(params),
      batch_(static_cast<int>(items.size())),
      horizon_(params.config.horizon),
      has_lora_(lora != nullptr) {
  const DenoiserConfig& cfg = params.config;
  const int H = cfg.horizon, C = cfg.channels(), T = cfg.time_embed_dim,
            E = cfg.cond_dim(), W = cfg.hidden_width;
  if (batch_ == 0) throw std::invalid_argument("denoise: empty batch");

  Mat x(batch_ * H, C);
  cond_in_.resize(batch_, E);
  is_null_.resize(batch_);
  const Vec null_ctx = params.null_context();
  for (int b = 0; b < batch_; ++b) {
    const DenoiseItem& it = items[b];
    if (it.x == nullptr) throw std::invalid_argument("denoise: null input");
    if (it.x->rows() != H)
      throw std::invalid_argument(
          "denoise: trajectory has " + std::to_string(it.x->rows()) +
          " timesteps (rows) but the model horizon is " + std::to_string(H));
    if (it.x->cols() != C)
      throw std::invalid_argument(
          "denoise: trajectory has " + std::to_string(it.x->cols()) +
          " feature columns but the model expects S+A = " + std::to_string(C));
    if (it.ctx != nullptr && it.ctx->size() != cfg.ple_dim)
      throw std::invalid_argument(
          "denoise: context has dimension " + std::to_string(it.ctx->size()) +
          " but ple_dim is " + std::to_string(cfg.ple_dim));
    x.block(b * H, 0, H, C) = *it.x;
    sinusoidal_embedding(it.k, std::span<double>(cond_in_.row(b).data(), T));
    is_null_[b] = it.ctx == nullptr;
    cond_in_.block(b, T, 1, cfg.ple_dim) =
        (it.ctx == nullptr ? null_ctx : *it.ctx).transpose();
  }

  auto linear = [&](const Mat& in, const std::string& w_name,
                    const std::string& b_name) {
    Mat out = in * params.tensor(w_name);
    out.rowwise() += params.tensor(b_name).row(0);
    if (lora != nullptr) {
      if (const LowRankDelta* d = lora->find(w_name))
        out.noalias() += (in * d->down) * d->up;
    }
    return out;
  };

  cond_pre_ = linear(cond_in_, "cond.w", "cond.b");
  cond_ = silu(cond_pre_);
  col_in_ = im2col(x, H);
  Mat h = linear(col_in_, "in.w", "in.b");
  blocks_.resize(cfg.n_blocks);
  for (int i = 0; i < cfg.n_blocks; ++i) {
    const std::string p = "blk" + std::to_string(i) + ".";
    Block& blk = blocks_[i];
    blk.col1 = im2col(h, H);
    blk.a = linear(blk.col1, p + "conv1.w", p + "conv1.b");
    blk.film = linear(cond_, p + "film.w", p + "film.b");
    blk.a2.resize(blk.a.rows(), W);
    for (int b = 0; b < batch_; ++b) {
      const Eigen::RowVectorXd scale = blk.film.row(b).head(W).array() + 1.0;
      const Eigen::RowVectorXd shift = blk.film.row(b).tail(W);
      blk.a2.middleRows(b * H, H) =
          (blk.a.middleRows(b * H, H).array().rowwise() * scale.array())
              .rowwise() +
          shift.array();
    }
    blk.a3 = silu(blk.a2);
    blk.col2 = im2col(blk.a3, H);
    h += linear(blk.col2, p + "conv2.w", p + "conv2.b");
  }
  h_final_ = h;
  col_out_ = im2col(silu(h), H);
  y_ = linear(col_out_, "out.w", "out.b");
}

Trajectory DenoiserPass::output(int i) const {
  return y_.block(i * horizon_, 0, horizon_, y_.cols());
}

DenoiserPass::Gradients DenoiserPass::backward(const Mat& d_out,
                                               bool want_param_grads) const {
  if (has_lora_ && want_param_grads)
    throw std::logic_error(
        "DenoiserPass: parameter gradients through on-the-fly adapters are "
        "not supported; merge the adapters first");
  if (d_out.rows() != y_.rows() || d_out.cols() != y_.cols())
    throw std::invalid_argument("DenoiserPass::backward: gradient shape");
  const DenoiserConfig& cfg = params_.config;
  const int H = cfg.horizon, T = cfg.time_embed_dim, W = cfg.hidden_width;

  Gradients grads;
  if (want_param_grads) grads.params.assign(params_.layout.total(), 0.0);
  GradSink g(params_.layout, want_param_grads ? &grads.params : nullptr);

  if (g.active()) {
    g["out.w"].noalias() += col_out_.transpose() * d_out;
    g["out.b"] += d_out.colwise().sum();
  }
  Mat dh = silu_backward(h_final_,
                         col2im(d_out * params_.tensor("out.w").transpose(), H));
  Mat d_cond = Mat::Zero(batch_, W);

  for (int i = cfg.n_blocks - 1; i >= 0; --i) {
    const std::string p = "blk" + std::to_string(i) + ".";
    const Block& blk = blocks_[i];
    // Residual: dh flows unchanged to the block input and into conv2.
    if (g.active()) {
      g[p + "conv2.w"].noalias() += blk.col2.transpose() * dh;
      g[p + "conv2.b"] += dh.colwise().sum();
    }
    const Mat da2 = silu_backward(
        blk.a2, col2im(dh * params_.tensor(p + "conv2.w").transpose(), H));
    Mat da(da2.rows(), W);
    Mat d_film(batch_, 2 * W);
    for (int b = 0; b < batch_; ++b) {
      const Eigen::RowVectorXd scale = blk.film.row(b).head(W).array() + 1.0;
      const auto rows = da2.middleRows(b * H, H);
      const auto a_rows = blk.a.middleRows(b * H, H);
      da.middleRows(b * H, H) = rows.array().rowwise() * scale.array();
      d_film.block(b, 0, 1, W) = rows.cwiseProduct(a_rows).colwise().sum();
      d_film.block(b, W, 1, W) = rows.colwise().sum();
    }
    if (g.active()) {
      g[p + "film.w"].noalias() += cond_.transpose() * d_film;
      g[p + "film.b"] += d_film.colwise().sum();
      g[p + "conv1.w"].noalias() += blk.col1.transpose() * da;
      g[p + "conv1.b"] += da.colwise().sum();
    }
    d_cond.noalias() += d_film * params_.tensor(p + "film.w").transpose();
    dh += col2im(da * params_.tensor(p + "conv1.w").transpose(), H);
  }
  if (g.active()) {
    g["in.w"].noalias() += col_in_.transpose() * dh;
    g["in.b"] += dh.colwise().sum();
  }

  const Mat d_cond_pre = silu_backward(cond_pre_, d_cond);
  if (g.active()) {
    g["cond.w"].noalias() += cond_in_.transpose() * d_cond_pre;
    g["cond.b"] += d_cond_pre.colwise().sum();
  }
  const int d_e = cfg.ple_dim;
  const Mat d_ctx = d_cond_pre * params_.tensor("cond.w")
                                     .block(T, 0, d_e, W)
                                     .transpose();
  grads.ctx.resize(batch_);
  for (int b = 0; b < batch_; ++b) {
    grads.ctx[b] = d_ctx.row(b).transpose();
    if (is_null_[b] && g.active()) g["null_context"] += d_ctx.row(b);
  }
  return grads;
}

Trajectory denoise(const DenoiserParams& params, const Trajectory& tau_k,
                   int k, const Context& ctx) {
  const DenoiseItem item{&tau_k, k, ctx ? &*ctx : nullptr};
  return DenoiserPass(params, std::span<const DenoiseItem>(&item, 1))
      .output(0);
}

double denoising_mse(const Mat& target, const Mat& prediction,
                     Mat* grad_prediction) {
  const Mat diff = prediction - target;
  const double n = static_cast<double>(diff.size());
  if (grad_prediction != nullptr) *grad_prediction = (2.0 / n) * diff;
  return diff.squaredNorm() / n;
}

LossAndGrads loss_and_grads(const DenoiserParams& params,
                            const NoiseSchedule& schedule,
                            std::span<const TrainItem> batch) {
  if (batch.empty())
    throw std::invalid_argument("loss_and_grads: empty batch");
  const int H = params.config.horizon, C = params.config.channels();
  const int B = static_cast<int>(batch.size());
  std::vector<Trajectory> noisy(B);
  std::vector<DenoiseItem> items(B);
  for (int b = 0; b < B; ++b) {
    const TrainItem& it = batch[b];
    if (it.k < 0 || it.k >= schedule.K)
      throw std::invalid_argument("loss_and_grads: diffusion step out of range");
    noisy[b] = forward_noise(it.tau_0, it.k, it.epsilon, schedule);
    items[b] = DenoiseItem{&noisy[b], it.k, it.ctx ? &*it.ctx : nullptr};
  }
  DenoiserPass pass(params, items);
  LossAndGrads out;
  Mat d_out(B * H, C);
  for (int b = 0; b < B; ++b) {
    Mat g;
    out.loss += denoising_mse(batch[b].epsilon, pass.output(b), &g);
    d_out.block(b * H, 0, H, C) = g / B;
  }
  out.loss /= B;
  auto grads = pass.backward(d_out, true);
  out.grad_params = std::move(grads.params);
  out.grad_ctx = std::move(grads.ctx);
  return out;
}

}  // namespace pledi
