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


#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pledi/checkpoint.h"
#include "pledi/config.h"
#include "pledi/dataio.h"
#include "pledi/eval.h"
#include "pledi/experiment.h"
#include "pledi/guidance.h"

namespace py = pybind11;
using namespace pledi;

namespace {

py::dict episode_dict(const FullTrajectory& e) {
  py::dict d;
  d["episode_id"] = e.episode_id;
  d["mode_id"] = e.mode_id;
  d["states"] = e.states;
  d["actions"] = e.actions;
  return d;
}

// Pretrained checkpoint with its schedule, for sampling from Python.
class Model {
 public:
  explicit Model(const std::string& path)
      : ckpt_(load_denoiser(path)), schedule_(make_cosine_schedule(ckpt_.diffusion_steps)) {}

  std::vector<Mat> sample_base(int n, std::uint64_t seed) const {
    return pledi::sample_base(ckpt_.params, schedule_, ckpt_.normalizer, n, seed);
  }

  std::vector<Mat> sample_adapted(const Vec& z_w, const Vec& z_l, double u, double v,
                                  int n, std::uint64_t seed) const {
    return pledi::sample_adapted(ckpt_.params, schedule_, ckpt_.normalizer, z_w, z_l,
                                 GuidanceWeights{v, u}, n, seed);
  }

  int ple_dim() const { return ckpt_.params.config.ple_dim; }
  int horizon() const { return ckpt_.params.config.horizon; }
  std::size_t parameter_count() const { return ckpt_.params.flat.size(); }

 private:
  DenoiserCheckpoint ckpt_;
  NoiseSchedule schedule_;
};

}  // namespace

PYBIND11_MODULE(_pledi, m) {
  m.doc() = "Preference-aligned trajectory diffusion";

  m.def("generate_corpus",
        [](int n_episodes, int L, int n_modes, std::uint64_t seed) {
          py::list out;
          for (const FullTrajectory& e : generate_corpus(n_episodes, L, n_modes, seed))
            out.append(episode_dict(e));
          return out;
        },
        py::arg("n_episodes"), py::arg("L"), py::arg("n_modes"), py::arg("seed"));

  m.def("oracle_reward",
        [](const Mat& segment, const std::string& oracle) {
          return oracle_reward(segment, OracleSpec::parse(oracle));
        },
        py::arg("segment"), py::arg("oracle"));

  m.def("normalized_score", &normalized_score, py::arg("score"), py::arg("random_score"),
        py::arg("expert_score"));

  m.def("win_rate",
        [](const std::vector<Mat>& a, const std::vector<Mat>& b, const std::string& oracle,
           std::uint64_t seed) { return win_rate(a, b, OracleSpec::parse(oracle), seed); },
        py::arg("a"), py::arg("b"), py::arg("oracle"), py::arg("seed"));

  m.def("cosine_alpha_bar",
        [](int K) { return make_cosine_schedule(K).alpha_bar; }, py::arg("K"));

  m.def("cfg_combine", &cfg_combine, py::arg("cond"), py::arg("null"), py::arg("v"));
  m.def("dual_cfg_combine",
        [](const Mat& w, const Mat& l, const Mat& null, double u, double v) {
          return dual_cfg_combine(w, l, null, GuidanceWeights{v, u});
        },
        py::arg("winner"), py::arg("loser"), py::arg("null"), py::arg("u"), py::arg("v"));

  m.def("validate_config",
        [](const std::string& text) { return to_json(parse_config(Json::parse(text))).dump(); },
        py::arg("json_text"),
        "Parses a configuration strictly and returns it with defaults filled in.");

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("path"))
      .def("sample_base", &Model::sample_base, py::arg("n"), py::arg("seed"))
      .def("sample_adapted", &Model::sample_adapted, py::arg("z_w"), py::arg("z_l"),
           py::arg("u") = 0.02, py::arg("v") = 1.2, py::arg("n") = 10, py::arg("seed") = 0)
      .def_property_readonly("ple_dim", &Model::ple_dim)
      .def_property_readonly("horizon", &Model::horizon)
      .def_property_readonly("parameter_count", &Model::parameter_count);

  py::register_exception<DivergenceError>(m, "DivergenceError");
}
