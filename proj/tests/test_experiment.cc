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


#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pledi/config.h"
#include "pledi/dataio.h"
#include "pledi/experiment.h"
#include "test_util.h"

namespace pledi {
namespace {

using testing::tiny_config;

RunConfig tiny_run_config() {
  RunConfig c = parse_config(nlohmann::json::object());
  c.model = tiny_config();
  c.data.n_episodes = 20;
  c.data.episode_length = 12;
  c.data.n_modes = 2;
  c.diffusion_steps = 10;
  c.pretrain.n_updates = 20;
  c.pretrain.batch_size = 4;
  c.inversion.n_adapt = 10;
  c.reward_model.n_updates = 10;
  c.reward_model.hidden = 8;
  c.finetune.n_adapt = 5;
  c.finetune.lora_rank = 2;
  c.eval.n_query_grid = {4};
  c.eval.seeds = {0};
  c.eval.n_samples = 4;
  c.query.n_query = 4;
  c.set_seed(7);
  return c;
}

struct Fixture {
  RunConfig config = tiny_run_config();
  Dataset data;
  DenoiserCheckpoint base;
  Fixture() {
    data.corpus = generate_corpus(20, 12, 2, 1);
    data.manifest = make_manifest(data.corpus, 2, 1, {"speed+", "curl+"},
                                  config.model.horizon);
    base = pretrain_from_config(config, data).checkpoint;
  }
  ExperimentInputs inputs() const { return {&data, &config, &base, {}}; }
};

TEST_CASE("a tiny experiment reports every method once") {
  Fixture f;
  std::vector<std::string> logged;
  const auto reports = run_experiment(
      f.inputs(), [&](const EvalReport& r) { logged.push_back(r.method); });
  REQUIRE(reports.size() == known_methods().size());
  std::set<std::string> methods;
  for (const auto& r : reports) {
    methods.insert(r.method);
    CHECK(r.sweep == "main");
    CHECK(r.oracle == "speed+");
    CHECK(r.n_query == 4);
    CHECK(r.n_samples == 4);
    CHECK(r.win_rate >= 0.0);
    CHECK(r.win_rate <= 1.0);
  }
  CHECK(methods.size() == known_methods().size());
  CHECK(logged.size() == reports.size());

  // Everything except wall-clock time is reproducible.
  auto strip = [](std::vector<EvalReport> rs) {
    for (auto& r : rs) r.runtime_seconds = 0;
    return reports_to_jsonl(rs);
  };
  CHECK(strip(run_experiment(f.inputs())) == strip(reports));
}

TEST_CASE("the CSV report has a fixed header") {
  EvalReport r;
  r.method = "inversion";
  r.oracle = "speed+";
  r.sweep = "u";
  r.setting = "0.02";
  r.n_query = 50;
  r.n_adapt = 5000;
  r.win_rate = 0.75;
  const std::string csv = reports_to_csv({r});
  std::istringstream in(csv);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "method,n_query,n_adapt,seed,metric,value");
  CHECK(first.rfind("inversion|speed+|u=0.02,50,5000,0,", 0) == 0);
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows + 1 == 5);

  const auto back = report_from_json(report_to_json(r));
  CHECK(report_to_json(back) == report_to_json(r));
}

TEST_CASE("summaries average over seeds") {
  std::vector<EvalReport> rs(2);
  rs[0].method = rs[1].method = "inversion";
  rs[0].oracle = rs[1].oracle = "speed+";
  rs[0].sweep = rs[1].sweep = "main";
  rs[0].seed = 0;
  rs[1].seed = 1;
  rs[0].win_rate = 0.6;
  rs[1].win_rate = 0.8;
  const auto s = summarize(rs);
  REQUIRE(s.size() == 1);
  CHECK(s[0].n_seeds == 2);
  CHECK(s[0].win_rate_mean == doctest::Approx(0.7));
  CHECK(s[0].win_rate_std > 0.0);
  CHECK(summaries_to_csv(s).find("inversion") != std::string::npos);
}

TEST_CASE("experiments reject unknown names before any work") {
  Fixture f;
  f.config.eval.methods = {"inversion", "magic"};
  CHECK_THROWS_WITH_AS(run_experiment(f.inputs()), doctest::Contains("magic"),
                       std::invalid_argument);
  f.config.eval.methods = {"inversion"};
  f.config.eval.oracles = {"height+"};
  CHECK_THROWS_AS(run_experiment(f.inputs()), std::invalid_argument);
  f.config.eval.oracles = {"speed+"};
  f.config.eval.run_prior_sweep = true;
  f.config.eval.priors = {"laplace"};
  CHECK_THROWS_AS(run_experiment(f.inputs()), std::invalid_argument);
}

TEST_CASE("sweeps emit one report per setting") {
  Fixture f;
  f.config.eval.methods = {"inversion"};
  f.config.eval.run_main = false;
  f.config.eval.run_u_sweep = true;
  f.config.eval.u_sweep = {0.0, 0.02};
  f.config.eval.run_n_adapt_sweep = true;
  f.config.eval.n_adapt_sweep = {3, 6};
  const auto reports = run_experiment(f.inputs());
  int u = 0, n = 0;
  for (const auto& r : reports) {
    u += r.sweep == "u";
    n += r.sweep == "n_adapt";
  }
  CHECK(u == 2);
  CHECK(n == 2);
}

TEST_CASE("adaptation from stored labels names bad references") {
  Fixture f;
  const auto set = make_oracle_labels(f.data, OracleSpec::parse("speed+"), 4,
                                      f.config.model.horizon, 3);
  auto records = attach_refs(set.labels, set.pairs);
  InversionConfig cfg = f.config.inversion;
  const auto art = adapt_from_labels(f.base, records, f.data.corpus, cfg);
  CHECK(art.n_labels == static_cast<int>(records.size()));
  CHECK(art.z_w.size() == f.config.model.ple_dim);
  records[0].a.episode_id = 999;
  CHECK_THROWS_WITH_AS(adapt_from_labels(f.base, records, f.data.corpus, cfg),
                       doctest::Contains(records[0].label.pair_id.c_str()),
                       std::invalid_argument);
}

}  // namespace
}  // namespace pledi
