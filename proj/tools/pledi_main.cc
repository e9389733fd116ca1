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


// pledi: data generation, pretraining, adaptation, sampling, evaluation and
// the labeling service.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "pledi/checkpoint.h"
#include "pledi/config.h"
#include "pledi/dataio.h"
#include "pledi/eval.h"
#include "pledi/experiment.h"
#include "pledi/server.h"

namespace {

namespace fs = std::filesystem;
using namespace pledi;

const std::vector<std::string> kAllOracles = {"speed+",      "speed-",
                                              "smoothness+", "smoothness-",
                                              "curl+",       "curl-"};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Master seed (overrides the config)");
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? parse_config(Json::object())
                                        : load_config(c.config_path);
  if (c.seed) cfg.set_seed(*c.seed);
  return cfg;
}

std::string or_default(const std::string& given, const std::string& fallback) {
  return given.empty() ? fallback : given;
}

void write_loss_csv(const std::string& path, const DVector& loss) {
  std::string text = "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < loss.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i + 1, loss[i]);
    text += buf;
  }
  write_text_file(path, text);
}

int gen_data(const Common& c) {
  const RunConfig cfg = resolve_config(c);
  fs::create_directories(c.out);
  const auto corpus = generate_corpus(cfg.data.n_episodes, cfg.data.episode_length,
                                      cfg.data.n_modes, cfg.seed);
  const Manifest m = make_manifest(corpus, cfg.data.n_modes, cfg.seed, kAllOracles,
                                   cfg.model.horizon);
  write_dataset(c.out, corpus, m);
  const auto pairs = make_query_pairs(corpus, cfg.query.n_query, cfg.model.horizon,
                                      derive_seed(cfg.seed, 0x9a));
  std::vector<std::string> skipped;
  const auto labels = oracle_label_all(pairs, OracleSpec::parse(cfg.query.oracle), &skipped);
  write_text_file(c.out + "/pairs.jsonl", pairs_to_jsonl(pairs));
  write_text_file(c.out + "/labels.jsonl", labels_to_jsonl(attach_refs(labels, pairs)));
  std::cout << "wrote " << corpus.size() << " episodes, " << pairs.size() << " pairs, "
            << labels.size() << " " << cfg.query.oracle << " labels ("
            << skipped.size() << " ties skipped) to " << c.out << "\n";
  return 0;
}

int pretrain_cmd(const Common& c, const std::string& data_dir) {
  const RunConfig cfg = resolve_config(c);
  const Dataset data = load_dataset(or_default(data_dir, cfg.paths.data_dir));
  if (data.manifest.episode_length != cfg.data.episode_length)
    std::cerr << "note: dataset episode length " << data.manifest.episode_length
              << " differs from the config\n";
  fs::create_directories(c.out);
  const int every = std::max(1, cfg.pretrain.n_updates / 20);
  const PretrainRun run = pretrain_from_config(cfg, data, [&](int step, double loss) {
    if (step % every == 0) std::cout << "step " << step << " loss " << loss << "\n";
  });
  const std::string path = c.out + "/" + fs::path(cfg.paths.checkpoint).filename().string();
  save_denoiser(path, run.checkpoint);
  write_loss_csv(c.out + "/pretrain_loss.csv", run.loss_history);
  std::cout << "saved " << path << "\n";
  return 0;
}

std::vector<LabelRecord> load_labels_checked(const std::string& labels_path,
                                             const std::string& pairs_path) {
  std::vector<LabelRecord> labels = labels_from_jsonl(read_text_file(labels_path));
  if (!pairs_path.empty()) {
    std::set<std::string> ids;
    std::istringstream in(read_text_file(pairs_path));
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) ids.insert(Json::parse(line).at("pair_id").get<std::string>());
    for (const LabelRecord& r : labels)
      if (!ids.count(r.label.pair_id))
        throw std::invalid_argument("label references unknown pair_id " + r.label.pair_id);
  }
  return labels;
}

int adapt_cmd(const Common& c, const std::string& checkpoint_path,
              const std::string& data_dir, const std::string& labels_path,
              const std::string& pairs_path) {
  const RunConfig cfg = resolve_config(c);
  const DenoiserCheckpoint ckpt = load_denoiser(checkpoint_path);
  const Dataset data = load_dataset(or_default(data_dir, cfg.paths.data_dir));
  const auto labels = load_labels_checked(labels_path, pairs_path);
  if (labels.empty()) throw std::invalid_argument("no labels in " + labels_path);
  fs::create_directories(c.out);
  const AdaptedArtifact a = adapt_from_labels(ckpt, labels, data.corpus, cfg.inversion);
  Json doc = artifact_to_json(a);
  doc["u"] = cfg.guidance.u;
  doc["v"] = cfg.guidance.v;
  write_text_file(c.out + "/adapted.json", doc.dump(2) + "\n");
  std::cout << "adapted on " << a.n_labels << " labels, final loss " << a.final_loss
            << "; wrote " << c.out << "/adapted.json\n";
  return 0;
}

int sample_cmd(const Common& c, const std::string& checkpoint_path,
               const std::string& adapted_path, int n) {
  const RunConfig cfg = resolve_config(c);
  const DenoiserCheckpoint ckpt = load_denoiser(checkpoint_path);
  const NoiseSchedule schedule = make_cosine_schedule(ckpt.diffusion_steps);
  std::vector<Mat> samples;
  if (adapted_path.empty()) {
    samples = sample_base(ckpt.params, schedule, ckpt.normalizer, n, cfg.seed);
  } else {
    const Json doc = Json::parse(read_text_file(adapted_path));
    const AdaptedArtifact a = artifact_from_json(doc);
    GuidanceWeights w = cfg.guidance;
    if (doc.contains("u")) w.u = doc["u"];
    if (doc.contains("v")) w.v = doc["v"];
    samples = sample_adapted(ckpt.params, schedule, ckpt.normalizer, a.z_w, a.z_l, w, n,
                             cfg.seed);
  }
  fs::create_directories(c.out);
  std::string text;
  for (const Mat& s : samples) {
    Json rewards = Json::object();
    for (const char* o : {"speed+", "smoothness+", "curl+"})
      rewards[o] = oracle_reward(s, OracleSpec::parse(o));
    Json rows = Json::array();
    for (int t = 0; t < s.rows(); ++t) {
      Json row = Json::array();
      for (int j = 0; j < s.cols(); ++j) row.push_back(s(t, j));
      rows.push_back(row);
    }
    text += Json{{"segment", rows}, {"oracle_rewards", rewards}}.dump() + "\n";
  }
  write_text_file(c.out + "/samples.jsonl", text);
  std::cout << "wrote " << samples.size() << " samples to " << c.out << "/samples.jsonl\n";
  return 0;
}

int eval_cmd(const Common& c, const std::string& checkpoint_path,
             const std::string& data_dir) {
  const RunConfig cfg = resolve_config(c);
  const Dataset data = load_dataset(or_default(data_dir, cfg.paths.data_dir));
  fs::create_directories(c.out);
  const DenoiserCheckpoint base = load_denoiser(checkpoint_path);
  ExperimentInputs in;
  in.data = &data;
  in.config = &cfg;
  in.base = &base;
  in.pretrained_for_dim = [&](int d) {
    const std::string path = c.out + "/pretrained_d" + std::to_string(d) + ".pledi";
    if (fs::exists(path)) return load_denoiser(path);
    RunConfig other = cfg;
    other.model.ple_dim = d;
    std::cout << "pretraining d_e=" << d << "\n";
    DenoiserCheckpoint ck = pretrain_from_config(other, data).checkpoint;
    save_denoiser(path, ck);
    return ck;
  };
  const auto reports = run_experiment(in, [](const EvalReport& r) {
    std::cout << r.sweep << " " << r.method << " " << r.oracle << " " << r.setting
              << " n_query=" << r.n_query << " seed=" << r.seed
              << " win_rate=" << r.win_rate << "\n";
  });
  write_text_file(c.out + "/reports.jsonl", reports_to_jsonl(reports));
  write_text_file(c.out + "/reports.csv", reports_to_csv(reports));
  write_text_file(c.out + "/summary.csv", summaries_to_csv(summarize(reports)));
  std::cout << "wrote " << reports.size() << " cells to " << c.out << "\n";
  return 0;
}

Server* g_server = nullptr;

int serve_cmd(const Common& c, const std::string& checkpoint_path,
              const std::string& data_dir, const std::string& host,
              std::optional<int> port, const std::string& sessions_dir) {
  const RunConfig cfg = resolve_config(c);
  ServerContext ctx;
  ctx.checkpoint = std::make_shared<DenoiserCheckpoint>(load_denoiser(checkpoint_path));
  ctx.data = std::make_shared<Dataset>(load_dataset(or_default(data_dir, cfg.paths.data_dir)));
  ctx.config = cfg;
  ctx.sessions_dir = or_default(sessions_dir, c.out + "/" + cfg.paths.sessions_dir);
  Server server(std::move(ctx));
  const int bound = server.bind(or_default(host, cfg.serve.host), port.value_or(cfg.serve.port));
  std::cout << "listening on " << or_default(host, cfg.serve.host) << ":" << bound << " ("
            << server.session_count() << " sessions loaded)" << std::endl;
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  server.listen();
  g_server = nullptr;
  server.shutdown_jobs();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-aligned trajectory diffusion"};
  app.require_subcommand(1);

  Common common;
  std::string data_dir, checkpoint, labels, pairs, adapted, host, sessions;
  std::optional<int> port;
  int n = 100;

  auto* gen = app.add_subcommand("gen-data", "Generate the corpus, manifest and oracle labels");
  add_common(gen, common);

  auto* pre = app.add_subcommand("pretrain", "Pretrain the denoiser and mapper");
  add_common(pre, common);
  pre->add_option("--data", data_dir, "Dataset directory (default paths.data_dir)");

  auto* ad = app.add_subcommand("adapt", "Preference inversion on a label file");
  add_common(ad, common);
  ad->add_option("--checkpoint", checkpoint, "Pretrained checkpoint")->required();
  ad->add_option("--data", data_dir, "Dataset directory (default paths.data_dir)");
  ad->add_option("--labels", labels, "Label file (JSON lines)")->required();
  ad->add_option("--pairs", pairs, "Pair file; labels must reference its pair ids");

  auto* sm = app.add_subcommand("sample", "Sample trajectories");
  add_common(sm, common);
  sm->add_option("--checkpoint", checkpoint, "Pretrained checkpoint")->required();
  sm->add_option("--adapted", adapted, "Adapted embeddings (omit for the base model)");
  sm->add_option("-n,--n", n, "Number of samples")->check(CLI::Range(1, 100000));

  auto* ev = app.add_subcommand("eval", "Run the evaluation grid and sweeps");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "Pretrained checkpoint")->required();
  ev->add_option("--data", data_dir, "Dataset directory (default paths.data_dir)");

  auto* sv = app.add_subcommand("serve", "Run the HTTP labeling service");
  add_common(sv, common);
  sv->add_option("--checkpoint", checkpoint, "Pretrained checkpoint")->required();
  sv->add_option("--data", data_dir, "Dataset directory (default paths.data_dir)");
  sv->add_option("--host", host, "Bind address (default serve.host)");
  sv->add_option("--port", port, "Port (default serve.port, 0 picks one)");
  sv->add_option("--sessions", sessions, "Session directory (default <out>/paths.sessions_dir)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return gen_data(common);
    if (*pre) return pretrain_cmd(common, data_dir);
    if (*ad) return adapt_cmd(common, checkpoint, data_dir, labels, pairs);
    if (*sm) return sample_cmd(common, checkpoint, adapted, n);
    if (*ev) return eval_cmd(common, checkpoint, data_dir);
    if (*sv) return serve_cmd(common, checkpoint, data_dir, host, port, sessions);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
