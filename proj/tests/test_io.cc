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
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pledi/baselines.h"
#include "pledi/checkpoint.h"
#include "pledi/config.h"
#include "pledi/dataio.h"
#include "pledi/envdata.h"
#include "pledi/lora.h"
#include "pledi/ple.h"
#include "test_util.h"

namespace pledi {
namespace {

using testing::temp_dir;
using testing::tiny_config;

// Largest relative error introduced by a float32 round trip.
constexpr double kFloatRel = 6e-8;

void check_float_close(const DVector& a, const DVector& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(std::abs(a[i] - b[i]) <= kFloatRel * std::abs(a[i]) + 1e-45);
}

TEST_CASE("denoiser checkpoint round-trips within float32 rounding") {
  const auto dir = temp_dir("ckpt");
  const auto corpus = generate_corpus(12, 10, 3, 1);
  DenoiserCheckpoint ckpt;
  ckpt.params = init_params(tiny_config());
  ckpt.normalizer = Normalizer::fit(corpus);
  ckpt.mask = central_mask(10);
  ckpt.diffusion_steps = 20;
  ckpt.run_config = {{"seed", 5}};
  const std::string path = dir + "/model.pledi";
  save_denoiser(path, ckpt);
  const auto back = load_denoiser(path);
  CHECK(back.params.config == ckpt.params.config);
  CHECK(back.params.layout == ckpt.params.layout);
  check_float_close(ckpt.params.flat, back.params.flat);
  CHECK(back.params.flat == round_to_float(ckpt.params.flat));
  CHECK(back.mask == ckpt.mask);
  CHECK(back.diffusion_steps == 20);
  CHECK(back.run_config == ckpt.run_config);
  CHECK(back.normalizer.min() == ckpt.normalizer.min());
  CHECK(back.normalizer.max() == ckpt.normalizer.max());

  // A second cycle is lossless.
  save_denoiser(path, back);
  CHECK(load_denoiser(path).params.flat == back.params.flat);
}

TEST_CASE("reward model and adapter checkpoints round-trip") {
  const auto dir = temp_dir("ckpt2");
  const auto rm = init_reward_model(4, 4, 8, 2);
  save_reward_model(dir + "/rm.pledi", rm);
  const auto rm2 = load_reward_model(dir + "/rm.pledi");
  CHECK(rm2.hidden == 8);
  CHECK(rm2.layout == rm.layout);
  check_float_close(rm.flat, rm2.flat);

  const auto base = init_params(tiny_config());
  auto lora = init_lora(base, lora_targets(base.layout, {"blk*.film.w"}), 2, 3);
  Rng rng(4);
  for (auto& d : lora.deltas) d.down = randn(rng, d.down.rows(), d.down.cols());
  save_lora(dir + "/lora.pledi", lora);
  const auto lora2 = load_lora(dir + "/lora.pledi");
  CHECK(lora2.rank == 2);
  REQUIRE(lora2.deltas.size() == lora.deltas.size());
  check_float_close(flatten_lora(lora), flatten_lora(lora2));
  CHECK(lora2.deltas[0].target == lora.deltas[0].target);
}

TEST_CASE("checkpoint reader rejects damaged files") {
  const auto dir = temp_dir("ckpt3");
  const std::string path = dir + "/bad.pledi";
  write_text_file(path, "NOTPLEDI and some bytes");
  CHECK_THROWS(read_checkpoint(path));
  CHECK_THROWS(read_checkpoint(dir + "/missing.pledi"));

  DenoiserCheckpoint ckpt;
  ckpt.params = init_params(tiny_config());
  ckpt.normalizer = Normalizer::fit(generate_corpus(6, 10, 2, 1));
  ckpt.mask = central_mask(10);
  save_denoiser(path, ckpt);
  const auto full = read_text_file(path);
  write_text_file(path, full.substr(0, full.size() - 7));
  CHECK_THROWS(load_denoiser(path));
  // The wrong type is rejected too.
  save_reward_model(path, init_reward_model(4, 4, 8, 2));
  CHECK_THROWS(load_denoiser(path));
}

TEST_CASE("corpus files round-trip byte for byte") {
  const auto corpus = generate_corpus(9, 12, 3, 7);
  const std::string text = corpus_to_jsonl(corpus);
  const auto back = corpus_from_jsonl(text);
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(back[i].episode_id == corpus[i].episode_id);
    CHECK(back[i].mode_id == corpus[i].mode_id);
    CHECK(back[i].states == corpus[i].states);
    CHECK(back[i].actions == corpus[i].actions);
  }
  CHECK(corpus_to_jsonl(back) == text);
}

TEST_CASE("datasets reload and reject mismatched manifests") {
  const auto dir = temp_dir("dataset");
  const auto corpus = generate_corpus(8, 12, 2, 8);
  const auto manifest = make_manifest(corpus, 2, 8, {"speed+", "curl-"}, 4);
  write_dataset(dir, corpus, manifest);
  const std::string corpus_text = read_text_file(dir + "/corpus.jsonl");
  const std::string manifest_text = read_text_file(dir + "/manifest.json");
  const auto data = load_dataset(dir);
  CHECK(data.corpus.size() == 8);
  CHECK(data.manifest.reference.count("curl-") == 1);
  CHECK(data.manifest.min == manifest.min);
  write_dataset(dir, data.corpus, data.manifest);
  CHECK(read_text_file(dir + "/corpus.jsonl") == corpus_text);
  CHECK(read_text_file(dir + "/manifest.json") == manifest_text);

  auto j = manifest_to_json(manifest);
  j["n_episodes"] = 9;
  write_text_file(dir + "/manifest.json", j.dump(2));
  CHECK_THROWS(load_dataset(dir));
  j["n_episodes"] = 8;
  j["L"] = 13;
  write_text_file(dir + "/manifest.json", j.dump(2));
  CHECK_THROWS(load_dataset(dir));
}

TEST_CASE("pair and label files round-trip byte for byte") {
  const auto corpus = generate_corpus(10, 20, 2, 9);
  const auto pairs = make_query_pairs(corpus, 6, 4, 10);
  const auto labels = oracle_label_all(pairs, OracleSpec::parse("speed+"));
  const std::string pair_text = pairs_to_jsonl(pairs);
  const auto pairs2 = pairs_from_jsonl(pair_text, corpus);
  REQUIRE(pairs2.size() == pairs.size());
  CHECK(pairs2[0].a.data == pairs[0].a.data);
  CHECK(pairs_to_jsonl(pairs2) == pair_text);

  const auto records = attach_refs(labels, pairs);
  const std::string label_text = labels_to_jsonl(records);
  const auto records2 = labels_from_jsonl(label_text);
  CHECK(labels_to_jsonl(records2) == label_text);
  REQUIRE(records2.size() == labels.size());
  CHECK(records2[0].label.pair_id == labels[0].pair_id);
  CHECK(records2[0].label.winner == labels[0].winner);
  const auto rebuilt = pairs_for_labels(records2, corpus);
  CHECK(rebuilt[0].b.data == pairs[0].b.data);

  std::vector<PreferenceLabel> stray = {labels[0]};
  stray[0].pair_id = "nope";
  CHECK_THROWS(attach_refs(stray, pairs));
}

TEST_CASE("adapted artifacts round-trip") {
  AdaptedArtifact a;
  a.z_w = Vec::Constant(3, 0.25);
  a.z_l = Vec::Constant(3, 0.75);
  a.z_w_init = Vec::Constant(3, 0.5);
  a.z_l_init = Vec::Constant(3, 0.5);
  a.label_hash = 0xfedcba9876543210ULL;
  a.n_labels = 10;
  a.n_adapt = 200;
  a.batch_size = 10;
  a.learning_rate = 0.01;
  a.prior = "uniform01";
  a.seed = 12;
  a.final_loss = 0.125;
  const auto j = artifact_to_json(a);
  const auto b = artifact_from_json(nlohmann::json::parse(j.dump()));
  CHECK(b.z_w == a.z_w);
  CHECK(b.z_l == a.z_l);
  CHECK(b.label_hash == a.label_hash);
  CHECK(b.prior == "uniform01");
  CHECK(artifact_to_json(b) == j);
}

TEST_CASE("durable appends accumulate lines") {
  const auto dir = temp_dir("append");
  const std::string path = dir + "/log.jsonl";
  append_line_durable(path, "{\"a\":1}");
  append_line_durable(path, "{\"a\":2}");
  CHECK(read_text_file(path) == "{\"a\":1}\n{\"a\":2}\n");
}

TEST_CASE("empty configuration yields valid defaults") {
  const RunConfig c = parse_config(nlohmann::json::object());
  CHECK_NOTHROW(c.validate());
  CHECK(c.diffusion_steps == 100);
  CHECK(c.inversion.n_adapt == 5000);
  CHECK(c.guidance.u == 0.02);
  // Serializing and parsing again is the identity.
  CHECK(to_json(parse_config(to_json(c))) == to_json(c));
}

TEST_CASE("configuration parsing is strict") {
  using nlohmann::json;
  CHECK_THROWS_WITH_AS(parse_config(json{{"sed", 1}}),
                       doctest::Contains("sed"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config(json{{"model", {{"horizn", 8}}}}),
                       doctest::Contains("model.horizn"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config(json{{"model", {{"horizon", "8"}}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_config(json{{"model", 3}}), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config(json{{"guidance", {{"v", -1.0}}}}),
                       doctest::Contains("guidance.v"), std::invalid_argument);
  CHECK_THROWS_AS(
      parse_config(json{{"eval", {{"methods", {"inversion", "magic"}}}}}),
      std::invalid_argument);
  CHECK_THROWS_AS(parse_config(json{{"inversion", {{"prior", "laplace"}}}}),
                  std::invalid_argument);
}

TEST_CASE("the seed re-derives component seeds") {
  RunConfig a = parse_config(nlohmann::json{{"seed", 3}});
  RunConfig b = parse_config(nlohmann::json{{"seed", 4}});
  CHECK(a.seed == 3);
  CHECK(a.inversion.seed != b.inversion.seed);
  a.set_seed(4);
  CHECK(to_json(a) == to_json(b));
}

TEST_CASE("configuration files load from disk") {
  const auto dir = temp_dir("config");
  write_text_file(dir + "/c.json", R"({"seed": 9, "data": {"n_modes": 3}})");
  const RunConfig c = load_config(dir + "/c.json");
  CHECK(c.seed == 9);
  CHECK(c.data.n_modes == 3);
  write_text_file(dir + "/bad.json", "{ not json");
  CHECK_THROWS(load_config(dir + "/bad.json"));
  CHECK_THROWS(load_config(dir + "/missing.json"));
}

}  // namespace
}  // namespace pledi
