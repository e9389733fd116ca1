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


#include "pledi/config.h"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pledi/envdata.h"

namespace pledi {
namespace {

// Reads the keys of one JSON object and rejects any key it was not asked for.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw std::invalid_argument("config: " + where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    check_type<T>(*it, key);
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument("config: " + field(key) + " has the wrong type");
    }
  }

  // Nested object, or nullptr when absent.
  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string field(const char* key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw std::invalid_argument("config: unknown key '" +
                                    field(it.key().c_str()) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "the top level" : path_; }

  template <typename T>
  void check_type(const Json& v, const char* key) const {
    bool ok = true;
    if constexpr (std::is_same_v<T, bool>) {
      ok = v.is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
      ok = v.is_number_integer() &&
           (!std::is_unsigned_v<T> || v.is_number_unsigned() || v.get<std::int64_t>() >= 0);
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v.is_number();
    } else if constexpr (std::is_same_v<T, std::string>) {
      ok = v.is_string();
    } else {
      ok = v.is_array();
    }
    if (!ok)
      throw std::invalid_argument("config: " + field(key) + " has the wrong type");
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool cond, const std::string& key, const std::string& rule) {
  if (!cond) throw std::invalid_argument("config: " + key + " " + rule);
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  model.seed = derive_seed(s, 101);
  inversion.seed = derive_seed(s, 102);
  reward_model.seed = derive_seed(s, 103);
  finetune.seed = derive_seed(s, 104);
}

void RunConfig::validate() const {
  require(data.n_episodes >= 1, "data.n_episodes", "must be >= 1");
  require(data.n_modes >= 2, "data.n_modes", "must be >= 2");
  require(data.episode_length >= 2, "data.episode_length", "must be >= 2");
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("config: model: ") + e.what());
  }
  require(model.state_dim == kStateDim && model.action_dim == kActionDim,
          "model", "state/action dimensions are fixed by the environment");
  require((data.episode_length + 1) / 2 >= model.horizon, "model.horizon",
          "must fit inside the masked half of an episode");
  require(diffusion_steps >= 2, "diffusion.steps", "must be >= 2");
  require(pretrain.n_updates >= 1, "pretrain.n_updates", "must be >= 1");
  require(pretrain.batch_size >= 1, "pretrain.batch_size", "must be >= 1");
  require(pretrain.learning_rate > 0, "pretrain.learning_rate", "must be > 0");
  require(pretrain.context_dropout_p >= 0 && pretrain.context_dropout_p <= 1,
          "pretrain.context_dropout_p", "must lie in [0, 1]");
  require(pretrain.grad_clip_norm >= 0, "pretrain.grad_clip_norm", "must be >= 0");
  require(inversion.n_adapt >= 1, "inversion.n_adapt", "must be >= 1");
  require(inversion.batch_size >= 0, "inversion.batch_size", "must be >= 0");
  require(inversion.learning_rate > 0, "inversion.learning_rate", "must be > 0");
  require(guidance.v >= 0, "guidance.v", "must be >= 0");
  require(guidance.u >= 0, "guidance.u", "must be >= 0");
  require(query.n_query >= 1, "query.n_query", "must be >= 1");
  OracleSpec::parse(query.oracle);
  require(reward_model.hidden >= 1, "reward_model.hidden", "must be >= 1");
  require(reward_model.n_updates >= 1, "reward_model.n_updates", "must be >= 1");
  require(reward_model.batch_size >= 1, "reward_model.batch_size", "must be >= 1");
  require(reward_model.learning_rate > 0, "reward_model.learning_rate", "must be > 0");
  require(reward_model.holdout_fraction >= 0 && reward_model.holdout_fraction < 1,
          "reward_model.holdout_fraction", "must lie in [0, 1)");
  require(reward_guidance_scale >= 0, "reward_model.guidance_scale", "must be >= 0");
  require(finetune.n_adapt >= 1, "finetune.n_adapt", "must be >= 1");
  require(finetune.batch_size >= 0, "finetune.batch_size", "must be >= 0");
  require(finetune.learning_rate > 0, "finetune.learning_rate", "must be > 0");
  require(finetune.beta > 0, "finetune.beta", "must be > 0");
  require(finetune.lora_rank >= 1, "finetune.lora_rank", "must be >= 1");
  require(!finetune.lora_targets.empty(), "finetune.lora_targets", "must not be empty");
  require(eval.n_samples >= 1, "eval.n_samples", "must be >= 1");
  require(!eval.seeds.empty(), "eval.seeds", "must not be empty");
  for (int q : eval.n_query_grid) require(q >= 1, "eval.n_query_grid", "entries must be >= 1");
  for (int n : eval.n_adapt_sweep) require(n >= 1, "eval.n_adapt_sweep", "entries must be >= 1");
  for (double u : eval.u_sweep) require(u >= 0, "eval.u_sweep", "entries must be >= 0");
  for (int d : eval.ple_dims) require(d >= 1, "eval.ple_dims", "entries must be >= 1");
  for (const auto& p : eval.priors) PriorSpec::parse(p);
  for (const auto& o : eval.oracles) OracleSpec::parse(o);
  static const std::set<std::string> kMethods = {
      "diffuser", "guided", "finetune_full", "finetune_lora", "inversion"};
  for (const auto& m : eval.methods)
    require(kMethods.count(m) > 0, "eval.methods", "has unknown method '" + m + "'");
  require(serve.port >= 0 && serve.port < 65536, "serve.port", "must lie in [0, 65535]");
}

RunConfig parse_config(const Json& j) {
  RunConfig c;
  Section top(j, "");
  std::uint64_t seed = 0;
  top.get("seed", seed);

  if (const Json* s = top.child("data")) {
    Section d(*s, "data");
    d.get("n_episodes", c.data.n_episodes);
    d.get("episode_length", c.data.episode_length);
    d.get("n_modes", c.data.n_modes);
    d.finish();
  }
  if (const Json* s = top.child("model")) {
    Section m(*s, "model");
    m.get("horizon", c.model.horizon);
    m.get("ple_dim", c.model.ple_dim);
    m.get("hidden_width", c.model.hidden_width);
    m.get("n_blocks", c.model.n_blocks);
    m.get("time_embed_dim", c.model.time_embed_dim);
    m.get("mapper_hidden", c.model.mapper_hidden);
    m.finish();
  }
  if (const Json* s = top.child("diffusion")) {
    Section d(*s, "diffusion");
    d.get("steps", c.diffusion_steps);
    d.finish();
  }
  if (const Json* s = top.child("pretrain")) {
    Section p(*s, "pretrain");
    p.get("n_updates", c.pretrain.n_updates);
    p.get("batch_size", c.pretrain.batch_size);
    p.get("learning_rate", c.pretrain.learning_rate);
    p.get("context_dropout_p", c.pretrain.context_dropout_p);
    p.get("grad_clip_norm", c.pretrain.grad_clip_norm);
    p.finish();
  }
  if (const Json* s = top.child("inversion")) {
    Section i(*s, "inversion");
    i.get("n_adapt", c.inversion.n_adapt);
    i.get("batch_size", c.inversion.batch_size);
    i.get("learning_rate", c.inversion.learning_rate);
    std::string prior = c.inversion.prior.name();
    i.get("prior", prior);
    c.inversion.prior = PriorSpec::parse(prior);
    i.finish();
  }
  if (const Json* s = top.child("guidance")) {
    Section g(*s, "guidance");
    g.get("v", c.guidance.v);
    g.get("u", c.guidance.u);
    g.finish();
  }
  if (const Json* s = top.child("query")) {
    Section q(*s, "query");
    q.get("n_query", c.query.n_query);
    q.get("oracle", c.query.oracle);
    q.finish();
  }
  if (const Json* s = top.child("reward_model")) {
    Section r(*s, "reward_model");
    r.get("hidden", c.reward_model.hidden);
    r.get("n_updates", c.reward_model.n_updates);
    r.get("batch_size", c.reward_model.batch_size);
    r.get("learning_rate", c.reward_model.learning_rate);
    r.get("holdout_fraction", c.reward_model.holdout_fraction);
    r.get("guidance_scale", c.reward_guidance_scale);
    r.finish();
  }
  if (const Json* s = top.child("finetune")) {
    Section f(*s, "finetune");
    f.get("n_adapt", c.finetune.n_adapt);
    f.get("batch_size", c.finetune.batch_size);
    f.get("learning_rate", c.finetune.learning_rate);
    f.get("beta", c.finetune.beta);
    f.get("lora_rank", c.finetune.lora_rank);
    f.get("lora_targets", c.finetune.lora_targets);
    f.finish();
  }
  if (const Json* s = top.child("eval")) {
    Section e(*s, "eval");
    e.get("methods", c.eval.methods);
    e.get("n_query_grid", c.eval.n_query_grid);
    e.get("seeds", c.eval.seeds);
    e.get("oracles", c.eval.oracles);
    e.get("n_samples", c.eval.n_samples);
    e.get("n_adapt_sweep", c.eval.n_adapt_sweep);
    e.get("u_sweep", c.eval.u_sweep);
    e.get("priors", c.eval.priors);
    e.get("ple_dims", c.eval.ple_dims);
    e.get("run_main", c.eval.run_main);
    e.get("run_n_adapt_sweep", c.eval.run_n_adapt_sweep);
    e.get("run_u_sweep", c.eval.run_u_sweep);
    e.get("run_prior_sweep", c.eval.run_prior_sweep);
    e.get("run_ple_dim_sweep", c.eval.run_ple_dim_sweep);
    e.finish();
  }
  if (const Json* s = top.child("paths")) {
    Section p(*s, "paths");
    p.get("data_dir", c.paths.data_dir);
    p.get("checkpoint", c.paths.checkpoint);
    p.get("sessions_dir", c.paths.sessions_dir);
    p.finish();
  }
  if (const Json* s = top.child("serve")) {
    Section v(*s, "serve");
    v.get("host", c.serve.host);
    v.get("port", c.serve.port);
    v.finish();
  }
  top.finish();
  c.set_seed(seed);
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["data"] = {{"n_episodes", c.data.n_episodes},
               {"episode_length", c.data.episode_length},
               {"n_modes", c.data.n_modes}};
  j["model"] = {{"horizon", c.model.horizon},
                {"ple_dim", c.model.ple_dim},
                {"hidden_width", c.model.hidden_width},
                {"n_blocks", c.model.n_blocks},
                {"time_embed_dim", c.model.time_embed_dim},
                {"mapper_hidden", c.model.mapper_hidden}};
  j["diffusion"] = {{"steps", c.diffusion_steps}};
  j["pretrain"] = {{"n_updates", c.pretrain.n_updates},
                   {"batch_size", c.pretrain.batch_size},
                   {"learning_rate", c.pretrain.learning_rate},
                   {"context_dropout_p", c.pretrain.context_dropout_p},
                   {"grad_clip_norm", c.pretrain.grad_clip_norm}};
  j["inversion"] = {{"n_adapt", c.inversion.n_adapt},
                    {"batch_size", c.inversion.batch_size},
                    {"learning_rate", c.inversion.learning_rate},
                    {"prior", c.inversion.prior.name()}};
  j["guidance"] = {{"v", c.guidance.v}, {"u", c.guidance.u}};
  j["query"] = {{"n_query", c.query.n_query}, {"oracle", c.query.oracle}};
  j["reward_model"] = {{"hidden", c.reward_model.hidden},
                       {"n_updates", c.reward_model.n_updates},
                       {"batch_size", c.reward_model.batch_size},
                       {"learning_rate", c.reward_model.learning_rate},
                       {"holdout_fraction", c.reward_model.holdout_fraction},
                       {"guidance_scale", c.reward_guidance_scale}};
  j["finetune"] = {{"n_adapt", c.finetune.n_adapt},
                   {"batch_size", c.finetune.batch_size},
                   {"learning_rate", c.finetune.learning_rate},
                   {"beta", c.finetune.beta},
                   {"lora_rank", c.finetune.lora_rank},
                   {"lora_targets", c.finetune.lora_targets}};
  j["eval"] = {{"methods", c.eval.methods},
               {"n_query_grid", c.eval.n_query_grid},
               {"seeds", c.eval.seeds},
               {"oracles", c.eval.oracles},
               {"n_samples", c.eval.n_samples},
               {"n_adapt_sweep", c.eval.n_adapt_sweep},
               {"u_sweep", c.eval.u_sweep},
               {"priors", c.eval.priors},
               {"ple_dims", c.eval.ple_dims},
               {"run_main", c.eval.run_main},
               {"run_n_adapt_sweep", c.eval.run_n_adapt_sweep},
               {"run_u_sweep", c.eval.run_u_sweep},
               {"run_prior_sweep", c.eval.run_prior_sweep},
               {"run_ple_dim_sweep", c.eval.run_ple_dim_sweep}};
  j["paths"] = {{"data_dir", c.paths.data_dir},
                {"checkpoint", c.paths.checkpoint},
                {"sessions_dir", c.paths.sessions_dir}};
  j["serve"] = {{"host", c.serve.host}, {"port", c.serve.port}};
  return j;
}

}  // namespace pledi
