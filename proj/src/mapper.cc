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

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "pledi/ple.h"

namespace pledi {
namespace {

// Sigmoid kept strictly inside (0, 1) when it saturates in double precision.
double open_sigmoid(double v) {
  static const double kHi = std::nextafter(1.0, 0.0);
  return std::clamp(sigmoid(v), std::numeric_limits<double>::min(), kHi);
}

Mat visible_rows(const MapperParams& mapper, const Mat& tau_full) {
  Mat out(mapper.visible_count(), tau_full.cols());
  int r = 0;
  for (int t = 0; t < static_cast<int>(mapper.mask.size()); ++t)
    if (mapper.mask[t]) out.row(r++) = tau_full.row(t);
  return out;
}

void check_input(const MapperParams& mapper, const Mat& tau_full) {
  if (tau_full.rows() != static_cast<Eigen::Index>(mapper.mask.size()))
    throw std::invalid_argument(
        "map_trajectory: trajectory has " + std::to_string(tau_full.rows()) +
        " timesteps but the mask covers " + std::to_string(mapper.mask.size()));
  const auto in_dim = mapper.has_hidden() ? mapper.hidden_w.rows()
                                          : mapper.proj_w.rows();
  if (tau_full.cols() != in_dim)
    throw std::invalid_argument("map_trajectory: feature dimension " +
                                std::to_string(tau_full.cols()) +
                                " does not match mapper input " +
                                std::to_string(in_dim));
}

}  // namespace

Vec project_to_bounds(const Vec& z) {
  return z.cwiseMax(kPleMargin).cwiseMin(1.0 - kPleMargin);
}

int MapperParams::visible_count() const {
  return static_cast<int>(std::count(mask.begin(), mask.end(), 1));
}

void MapperParams::validate() const {
  if (visible_count() == 0)
    throw std::invalid_argument("MapperParams: mask hides every timestep");
  if (proj_w.cols() != proj_b.size())
    throw std::invalid_argument("MapperParams: projection shape mismatch");
  if (has_hidden() && (hidden_w.cols() != hidden_b.size() ||
                       hidden_w.cols() != proj_w.rows()))
    throw std::invalid_argument("MapperParams: hidden layer shape mismatch");
}

std::pair<int, int> hidden_window(int L) {
  const int hidden = (L + 1) / 2;
  const int begin = (L - hidden) / 2;
  return {begin, begin + hidden};
}

std::vector<std::uint8_t> central_mask(int L) {
  if (L < 2) throw std::invalid_argument("central_mask: L must be >= 2");
  std::vector<std::uint8_t> mask(L, 1);
  const auto [b, e] = hidden_window(L);
  for (int t = b; t < e; ++t) mask[t] = 0;
  return mask;
}

MapperParams extract_mapper(const DenoiserParams& params,
                            std::vector<std::uint8_t> mask) {
  MapperParams m;
  if (params.layout.find("mapper.hidden.w") != nullptr) {
    m.hidden_w = params.tensor("mapper.hidden.w");
    m.hidden_b = params.tensor("mapper.hidden.b").row(0).transpose();
  }
  m.proj_w = params.tensor("mapper.proj.w");
  m.proj_b = params.tensor("mapper.proj.b").row(0).transpose();
  m.mask = std::move(mask);
  m.validate();
  return m;
}

Ple map_trajectory(const MapperParams& mapper, const Mat& tau_full) {
  mapper.validate();
  check_input(mapper, tau_full);
  const Mat x = visible_rows(mapper, tau_full);
  Mat feat = x;
  if (mapper.has_hidden()) {
    Mat pre = x * mapper.hidden_w;
    pre.rowwise() += mapper.hidden_b.transpose();
    feat = pre.unaryExpr([](double v) { return silu(v); });
  }
  // Mean-pool before the projection: the projection is affine, so this equals
  // the mean of the per-timestep projections.
  const Vec pooled_feat = feat.colwise().mean().transpose();
  const Vec pre = mapper.proj_w.transpose() * pooled_feat + mapper.proj_b;
  Ple out;
  out.z = pre.unaryExpr(&open_sigmoid);
  out.kind = PleKind::kPlaceholder;
  return out;
}

MapperGrads map_trajectory_vjp(const MapperParams& mapper, const Mat& tau_full,
                               const Vec& dz) {
  mapper.validate();
  check_input(mapper, tau_full);
  const Mat x = visible_rows(mapper, tau_full);
  const int n = static_cast<int>(x.rows());
  Mat pre_hidden;
  Mat feat = x;
  if (mapper.has_hidden()) {
    pre_hidden = x * mapper.hidden_w;
    pre_hidden.rowwise() += mapper.hidden_b.transpose();
    feat = pre_hidden.unaryExpr([](double v) { return silu(v); });
  }
  const Vec pooled_feat = feat.colwise().mean().transpose();
  const Vec pre = mapper.proj_w.transpose() * pooled_feat + mapper.proj_b;
  const Vec z = pre.unaryExpr(&open_sigmoid);
  const Vec d_pre = dz.cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));

  MapperGrads g;
  g.proj_w = pooled_feat * d_pre.transpose();
  g.proj_b = d_pre;
  const Vec d_pooled = mapper.proj_w * d_pre;
  // Every visible row receives d_pooled / n.
  Mat d_feat = (d_pooled / n).transpose().replicate(n, 1);
  Mat d_x;
  if (mapper.has_hidden()) {
    const Mat d_hpre = d_feat.cwiseProduct(
        pre_hidden.unaryExpr([](double v) { return silu_grad(v); }));
    g.hidden_w = x.transpose() * d_hpre;
    g.hidden_b = d_hpre.colwise().sum().transpose();
    d_x = d_hpre * mapper.hidden_w.transpose();
  } else {
    d_x = d_feat;
  }
  g.tau_full = Mat::Zero(tau_full.rows(), tau_full.cols());
  int r = 0;
  for (int t = 0; t < static_cast<int>(mapper.mask.size()); ++t)
    if (mapper.mask[t]) g.tau_full.row(t) = d_x.row(r++);
  return g;
}

void accumulate_mapper_grads(const MapperGrads& g, const ParamLayout& layout,
                             DVector& flat_grad) {
  auto add = [&](const char* name, const auto& src) {
    const TensorSpec& t = layout.at(name);
    Eigen::Map<Mat> dst(flat_grad.data() + t.offset, t.rows, t.cols);
    dst += Eigen::Map<const Mat>(src.data(), t.rows, t.cols);
  };
  if (g.hidden_w.size() > 0) {
    const Mat hw = g.hidden_w;  // row-major copy for the map
    add("mapper.hidden.w", hw);
    add("mapper.hidden.b", g.hidden_b);
  }
  const Mat pw = g.proj_w;
  add("mapper.proj.w", pw);
  add("mapper.proj.b", g.proj_b);
}

std::string PriorSpec::name() const {
  switch (kind) {
    case PriorKind::kUniform01: return "uniform01";
    case PriorKind::kGaussianHalf: return "gaussian_half";
    case PriorKind::kFixedHalf: return "fixed_half";
  }
  return "unknown";
}

PriorSpec PriorSpec::parse(const std::string& text) {
  if (text == "uniform01") return {PriorKind::kUniform01};
  if (text == "gaussian_half") return {PriorKind::kGaussianHalf};
  if (text == "fixed_half") return {PriorKind::kFixedHalf};
  throw std::invalid_argument("unknown prior '" + text +
                              "' (expected uniform01, gaussian_half, fixed_half)");
}

Ple sample_prior(const PriorSpec& prior, int d_e, std::uint64_t seed) {
  if (d_e < 1) throw std::invalid_argument("sample_prior: d_e must be >= 1");
  Rng rng = make_rng(seed, 0x9d1);
  Vec z(d_e);
  switch (prior.kind) {
    case PriorKind::kUniform01: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (int i = 0; i < d_e; ++i) z[i] = u(rng);
      break;
    }
    case PriorKind::kGaussianHalf: {
      std::normal_distribution<double> n(0.5, 0.5 / 3.0);
      for (int i = 0; i < d_e; ++i) z[i] = n(rng);
      break;
    }
    case PriorKind::kFixedHalf:
      z.setConstant(0.5);
      break;
  }
  return {project_to_bounds(z), PleKind::kPlaceholder};
}

}  // namespace pledi
