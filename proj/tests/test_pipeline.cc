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


#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "pledi/checkpoint.h"
#include "pledi/dataio.h"
#include "pledi/envdata.h"
#include "pledi/pipeline.h"
#include "pledi/ple.h"
#include "pledi/schedule.h"
#include "test_util.h"

namespace pledi {
namespace {

using testing::temp_dir;
using testing::tiny_config;

struct Fixture {
  std::vector<FullTrajectory> corpus = generate_corpus(20, 12, 2, 1);
  Normalizer norm = Normalizer::fit(corpus);
  NoiseSchedule schedule = make_cosine_schedule(10);
};

TEST_CASE("pretraining without context never updates the mapper") {
  Fixture f;
  PretrainOptions opts;
  opts.n_updates = 30;
  opts.batch_size = 4;
  opts.context_dropout_p = 1.0;
  const auto init = init_params(tiny_config());
  const auto r = pretrain(tiny_config(), f.schedule, f.corpus, f.norm, opts, 2);
  CHECK(r.max_mapper_grad == 0.0);
  for (const auto& t : init.layout.tensors()) {
    if (t.name.rfind("mapper", 0) != 0) continue;
    CHECK(Mat(r.params.tensor(t.name)) == Mat(init.tensor(t.name)));
  }
  opts.context_dropout_p = 0.0;
  const auto with_ctx =
      pretrain(tiny_config(), f.schedule, f.corpus, f.norm, opts, 2);
  CHECK(with_ctx.max_mapper_grad > 0.0);
}

TEST_CASE("pretraining is deterministic down to the checkpoint bytes") {
  Fixture f;
  PretrainOptions opts;
  opts.n_updates = 25;
  opts.batch_size = 4;
  const auto dir = temp_dir("pretrain");
  std::vector<std::string> bytes;
  for (int run = 0; run < 2; ++run) {
    const auto r = pretrain(tiny_config(), f.schedule, f.corpus, f.norm, opts, 3);
    CHECK(r.loss_history.size() == 25);
    DenoiserCheckpoint ckpt{r.params, f.norm, r.mask, f.schedule.K, {}};
    const std::string path = dir + "/run" + std::to_string(run) + ".pledi";
    save_denoiser(path, ckpt);
    bytes.push_back(read_text_file(path));
  }
  CHECK(bytes[0] == bytes[1]);
  const auto other = pretrain(tiny_config(), f.schedule, f.corpus, f.norm, opts, 4);
  DenoiserCheckpoint ckpt{other.params, f.norm, other.mask, f.schedule.K, {}};
  save_denoiser(dir + "/other.pledi", ckpt);
  CHECK(read_text_file(dir + "/other.pledi") != bytes[0]);
}

TEST_CASE("pretraining reduces the denoising loss") {
  Fixture f;
  PretrainOptions opts;
  opts.n_updates = 400;
  opts.batch_size = 16;
  opts.learning_rate = 3e-3;
  const auto r = pretrain(tiny_config(), f.schedule, f.corpus, f.norm, opts, 5);
  auto mean = [&](int b, int e) {
    return std::accumulate(r.loss_history.begin() + b,
                           r.loss_history.begin() + e, 0.0) / (e - b);
  };
  CHECK(mean(350, 400) < 0.8 * mean(0, 50));
}

TEST_CASE("pretraining rejects an episode length the horizon does not fit") {
  Fixture f;
  auto cfg = tiny_config();
  cfg.horizon = 8;  // the masked window of a 12-step episode holds 6
  PretrainOptions opts;
  opts.n_updates = 1;
  CHECK_THROWS(pretrain(cfg, f.schedule, f.corpus, f.norm, opts, 1));
}

TEST_CASE("samples come back in environment units and are reproducible") {
  Fixture f;
  const auto params = init_params(tiny_config());
  const auto a = sample_base(params, f.schedule, f.norm, 5, 6);
  const auto b = sample_base(params, f.schedule, f.norm, 5, 6);
  REQUIRE(a.size() == 5);
  CHECK(a[0].rows() == 4);
  CHECK(a[0].cols() == 4);
  for (int i = 0; i < 5; ++i) CHECK(a[i] == b[i]);
  CHECK(a[0] != a[1]);

  const Vec zw = Vec::Constant(4, 0.3), zl = Vec::Constant(4, 0.7);
  GuidanceWeights w;
  const auto s1 = sample_adapted(params, f.schedule, f.norm, zw, zl, w, 3, 7);
  const auto s2 = sample_adapted(params, f.schedule, f.norm, zw, zl, w, 3, 7);
  for (int i = 0; i < 3; ++i) CHECK(s1[i] == s2[i]);
  // A first sample does not depend on how many are requested.
  const auto s3 = sample_adapted(params, f.schedule, f.norm, zw, zl, w, 1, 7);
  CHECK(s3[0] == s1[0]);
}

TEST_CASE("label set hashes are order sensitive") {
  std::vector<PreferenceLabel> labels(3);
  for (int i = 0; i < 3; ++i) labels[i].pair_id = "p" + std::to_string(i);
  const auto h = label_set_hash(labels);
  CHECK(label_set_hash(labels) == h);
  auto swapped = labels;
  std::swap(swapped[0], swapped[1]);
  CHECK(label_set_hash(swapped) != h);
  auto flipped = labels;
  flipped[2].winner = Winner::kB;
  CHECK(label_set_hash(flipped) != h);
}

}  // namespace
}  // namespace pledi
