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


#include "pledi/experiment.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "pledi/eval.h"

namespace pledi {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

auto cell_key(const EvalReport& r) {
  return std::tie(r.sweep, r.method, r.oracle, r.setting, r.n_query, r.n_adapt,
                  r.seed);
}

void sort_reports(std::vector<EvalReport>& reports) {
  std::stable_sort(reports.begin(), reports.end(),
                   [](const EvalReport& a, const EvalReport& b) {
                     return cell_key(a) < cell_key(b);
                   });
}

std::string format_double(double x) {
  std::ostringstream out;
  out.precision(10);
  out << x;
  return out.str();
}

std::string method_label(const EvalReport& r) {
  std::string s = r.method + "|" + r.oracle;
  if (r.sweep != "main") s += "|" + r.sweep + "=" + r.setting;
  return s;
}

class Runner {
 public:
  explicit Runner(const ExperimentInputs& in)
      : in_(in),
        cfg_(*in.config),
        data_(*in.data),
        schedule_(make_cosine_schedule(in.base->diffusion_steps)) {}

  std::vector<EvalReport> run(const ExperimentLog& log) {
    log_ = log;
    const EvalConfig& e = cfg_.eval;
    if (e.run_main)
      for (const std::string& method : e.methods)
        for (const std::string& oracle : e.oracles)
          for (int nq : e.n_query_grid)
            for (std::uint64_t seed : e.seeds) main_cell(method, oracle, nq, seed);
    const int nq = cfg_.query.n_query;
    for (const std::string& oracle : e.oracles)
      for (std::uint64_t seed : e.seeds) {
        if (e.run_n_adapt_sweep) n_adapt_sweep(oracle, nq, seed);
        if (e.run_u_sweep) u_sweep(oracle, nq, seed);
        if (e.run_prior_sweep) prior_sweep(oracle, nq, seed);
        if (e.run_ple_dim_sweep) ple_dim_sweep(oracle, nq, seed);
      }
    sort_reports(reports_);
    return reports_;
  }

 private:
  struct Cell {
    std::string method, oracle, sweep = "main", setting;
    int n_query = 0;
    int n_adapt = 0;
    std::uint64_t seed = 0;
  };

  const DenoiserCheckpoint& base() const { return *in_.base; }

  const std::vector<Mat>& base_samples(const DenoiserCheckpoint& ckpt,
                                       std::uint64_t seed) {
    const auto key = std::make_pair(&ckpt, seed);
    auto it = base_cache_.find(key);
    if (it == base_cache_.end()) {
      const CellSeeds s = cell_seeds(seed, 0);
      it = base_cache_
               .emplace(key, sample_base(ckpt.params, schedule_, ckpt.normalizer,
                                         cfg_.eval.n_samples, s.base_samples))
               .first;
    }
    return it->second;
  }

  const OracleLabelSet& labels(const std::string& oracle, int n_query,
                               std::uint64_t seed) {
    const auto key = std::make_tuple(oracle, n_query, seed);
    auto it = label_cache_.find(key);
    if (it == label_cache_.end()) {
      OracleLabelSet set =
          make_oracle_labels(data_, OracleSpec::parse(oracle), n_query,
                             base().params.config.horizon, cell_seeds(seed, n_query).labels);
      if (set.labels.empty())
        throw std::runtime_error("every query pair tied under " + oracle);
      it = label_cache_.emplace(key, std::move(set)).first;
    }
    return it->second;
  }

  ReferenceScores reference(const std::string& oracle) {
    auto it = data_.manifest.reference.find(oracle);
    if (it != data_.manifest.reference.end()) return it->second;
    auto c = ref_cache_.find(oracle);
    if (c == ref_cache_.end())
      c = ref_cache_
              .emplace(oracle, reference_scores(OracleSpec::parse(oracle),
                                                data_.manifest.episode_length,
                                                base().params.config.horizon,
                                                data_.manifest.n_modes,
                                                derive_seed(data_.manifest.seed, 0x5c)))
              .first;
    return c->second;
  }

  void emit(const Cell& cell, const std::vector<Mat>& samples,
            const DenoiserCheckpoint& ckpt, int n_labels, double runtime) {
    const OracleSpec oracle = OracleSpec::parse(cell.oracle);
    const std::vector<Mat>& base = base_samples(ckpt, cell.seed);
    EvalReport r;
    r.method = cell.method;
    r.oracle = cell.oracle;
    r.sweep = cell.sweep;
    r.setting = cell.setting;
    r.n_query = cell.n_query;
    r.n_adapt = cell.n_adapt;
    r.seed = cell.seed;
    r.n_labels = n_labels;
    r.n_samples = static_cast<int>(samples.size());
    r.mean_reward = mean_reward(samples, oracle);
    r.base_mean_reward = mean_reward(base, oracle);
    r.win_rate = win_rate(samples, base, oracle, cell_seeds(cell.seed, cell.n_query).pairing);
    const ReferenceScores ref = reference(cell.oracle);
    r.normalized_score = normalized_score(r.mean_reward, ref.random_score, ref.expert_score);
    r.runtime_seconds = runtime;
    if (log_) log_(r);
    reports_.push_back(std::move(r));
  }

  InversionConfig inversion_config(std::uint64_t seed, int n_query) const {
    InversionConfig c = cfg_.inversion;
    c.seed = derive_seed(cell_seeds(seed, n_query).adapt, 1);
    return c;
  }

  FinetuneConfig finetune_config(std::uint64_t seed, int n_query) const {
    FinetuneConfig c = cfg_.finetune;
    c.seed = derive_seed(cell_seeds(seed, n_query).adapt, 2);
    return c;
  }

  std::vector<Mat> adapted_samples(const DenoiserCheckpoint& ckpt, const Vec& z_w,
                                   const Vec& z_l, const GuidanceWeights& w,
                                   std::uint64_t seed, int n_query) {
    return sample_adapted(ckpt.params, schedule_, ckpt.normalizer, z_w, z_l, w,
                          cfg_.eval.n_samples, cell_seeds(seed, n_query).samples);
  }

  std::vector<Mat> null_samples(const DenoiserParams& params, std::uint64_t seed,
                                int n_query) {
    return sample_base(params, schedule_, base().normalizer, cfg_.eval.n_samples,
                       cell_seeds(seed, n_query).samples);
  }

  void main_cell(const std::string& method, const std::string& oracle, int nq,
                 std::uint64_t seed) {
    const OracleLabelSet& set = labels(oracle, nq, seed);
    const int n_labels = static_cast<int>(set.labels.size());
    Cell cell{method, oracle, "main", "", nq, 0, seed};
    const auto t0 = Clock::now();
    std::vector<Mat> samples;
    if (method == "diffuser") {
      samples = null_samples(base().params, seed, nq);
    } else if (method == "inversion") {
      const InversionConfig ic = inversion_config(seed, nq);
      cell.n_adapt = ic.n_adapt;
      const InversionResult inv =
          invert_preferences(base().params, schedule_, set.resolved, ic);
      samples = adapted_samples(base(), inv.z_w.z, inv.z_l.z, cfg_.guidance, seed, nq);
    } else if (method == "guided") {
      RewardModelConfig rc = cfg_.reward_model;
      rc.seed = derive_seed(cell_seeds(seed, nq).adapt, 3);
      cell.n_adapt = rc.n_updates;
      const RewardTrainResult rm = train_reward_model(set.resolved, rc);
      samples = sample_segments(
          reward_guided_predictor(base().params, rm.model, schedule_,
                                  cfg_.reward_guidance_scale),
          schedule_, base().normalizer, base().params.config.horizon,
          cfg_.eval.n_samples, cell_seeds(seed, nq).samples);
    } else if (method == "finetune_full" || method == "finetune_lora") {
      const FinetuneConfig fc = finetune_config(seed, nq);
      cell.n_adapt = fc.n_adapt;
      const FinetuneResult ft =
          method == "finetune_full"
              ? finetune_full(base().params, schedule_, set.resolved, fc)
              : finetune_lora(base().params, schedule_, set.resolved, fc);
      samples = null_samples(ft.params, seed, nq);
    } else {
      throw std::invalid_argument("unknown method: " + method);
    }
    emit(cell, samples, base(), n_labels, seconds_since(t0));
  }

  std::vector<int> sweep_steps() const {
    std::vector<int> steps = cfg_.eval.n_adapt_sweep;
    std::sort(steps.begin(), steps.end());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
    return steps;
  }

  void n_adapt_sweep(const std::string& oracle, int nq, std::uint64_t seed) {
    const OracleLabelSet& set = labels(oracle, nq, seed);
    const int n_labels = static_cast<int>(set.labels.size());
    const std::vector<int> steps = sweep_steps();
    if (steps.empty()) return;

    {
      InversionConfig ic = inversion_config(seed, nq);
      ic.n_adapt = steps.back();
      ic.snapshot_steps = steps;
      const auto t0 = Clock::now();
      DVector at;
      const InversionResult inv = invert_preferences(
          base().params, schedule_, set.resolved, ic, [&](int step, double) {
            if (std::binary_search(steps.begin(), steps.end(), step))
              at.push_back(seconds_since(t0));
            return true;
          });
      for (std::size_t i = 0; i < inv.snapshots.size(); ++i) {
        const PleSnapshot& s = inv.snapshots[i];
        const auto ts = Clock::now();
        const auto samples =
            adapted_samples(base(), s.z_w, s.z_l, cfg_.guidance, seed, nq);
        emit({"inversion", oracle, "n_adapt", std::to_string(s.step), nq, s.step, seed},
             samples, base(), n_labels, at[i] + seconds_since(ts));
      }
    }

    for (const std::string method : {"finetune_full", "finetune_lora"}) {
      if (std::find(cfg_.eval.methods.begin(), cfg_.eval.methods.end(), method) ==
          cfg_.eval.methods.end())
        continue;
      FinetuneConfig fc = finetune_config(seed, nq);
      fc.n_adapt = steps.back();
      std::vector<std::pair<int, DenoiserParams>> snaps;
      DVector at;
      const auto t0 = Clock::now();
      FinetuneObserver obs = [&](int step, double, const DenoiserParams& p) {
        if (std::binary_search(steps.begin(), steps.end(), step)) {
          snaps.emplace_back(step, p);
          at.push_back(seconds_since(t0));
        }
        return true;
      };
      if (std::string(method) == "finetune_full")
        finetune_full(base().params, schedule_, set.resolved, fc, obs);
      else
        finetune_lora(base().params, schedule_, set.resolved, fc, obs);
      for (std::size_t i = 0; i < snaps.size(); ++i) {
        const auto ts = Clock::now();
        const auto samples = null_samples(snaps[i].second, seed, nq);
        emit({method, oracle, "n_adapt", std::to_string(snaps[i].first), nq,
              snaps[i].first, seed},
             samples, base(), n_labels, at[i] + seconds_since(ts));
      }
    }
  }

  void u_sweep(const std::string& oracle, int nq, std::uint64_t seed) {
    const OracleLabelSet& set = labels(oracle, nq, seed);
    const InversionConfig ic = inversion_config(seed, nq);
    const auto t0 = Clock::now();
    const InversionResult inv =
        invert_preferences(base().params, schedule_, set.resolved, ic);
    const double t_adapt = seconds_since(t0);
    for (double u : cfg_.eval.u_sweep) {
      GuidanceWeights w = cfg_.guidance;
      w.u = u;
      const auto ts = Clock::now();
      const auto samples = adapted_samples(base(), inv.z_w.z, inv.z_l.z, w, seed, nq);
      emit({"inversion", oracle, "u", format_double(u), nq, ic.n_adapt, seed}, samples,
           base(), static_cast<int>(set.labels.size()), t_adapt + seconds_since(ts));
    }
  }

  void prior_sweep(const std::string& oracle, int nq, std::uint64_t seed) {
    const OracleLabelSet& set = labels(oracle, nq, seed);
    for (const std::string& prior : cfg_.eval.priors) {
      InversionConfig ic = inversion_config(seed, nq);
      ic.prior = PriorSpec::parse(prior);
      const auto t0 = Clock::now();
      const InversionResult inv =
          invert_preferences(base().params, schedule_, set.resolved, ic);
      const auto samples =
          adapted_samples(base(), inv.z_w.z, inv.z_l.z, cfg_.guidance, seed, nq);
      emit({"inversion", oracle, "prior", ic.prior.name(), nq, ic.n_adapt, seed},
           samples, base(), static_cast<int>(set.labels.size()), seconds_since(t0));
    }
  }

  const DenoiserCheckpoint& checkpoint_for_dim(int d) {
    if (d == base().params.config.ple_dim) return base();
    auto it = dim_cache_.find(d);
    if (it == dim_cache_.end()) {
      if (!in_.pretrained_for_dim)
        throw std::invalid_argument("ple_dim sweep needs pretrained checkpoints");
      it = dim_cache_.emplace(d, in_.pretrained_for_dim(d)).first;
      if (it->second.params.config.ple_dim != d)
        throw std::runtime_error("pretrained_for_dim returned the wrong PLE dimension");
    }
    return it->second;
  }

  void ple_dim_sweep(const std::string& oracle, int nq, std::uint64_t seed) {
    const OracleLabelSet& set = labels(oracle, nq, seed);
    for (int d : cfg_.eval.ple_dims) {
      const DenoiserCheckpoint& ckpt = checkpoint_for_dim(d);
      const InversionConfig ic = inversion_config(seed, nq);
      const auto t0 = Clock::now();
      const InversionResult inv =
          invert_preferences(ckpt.params, schedule_, set.resolved, ic);
      const auto samples =
          adapted_samples(ckpt, inv.z_w.z, inv.z_l.z, cfg_.guidance, seed, nq);
      // Win rate against the samples of the unadapted checkpoint of the
      // same dimension.
      emit({"inversion", oracle, "ple_dim", std::to_string(d), nq, ic.n_adapt, seed},
           samples, ckpt, static_cast<int>(set.labels.size()), seconds_since(t0));
    }
  }

  const ExperimentInputs& in_;
  const RunConfig& cfg_;
  const Dataset& data_;
  NoiseSchedule schedule_;
  ExperimentLog log_;
  std::vector<EvalReport> reports_;
  std::map<std::pair<const DenoiserCheckpoint*, std::uint64_t>, std::vector<Mat>>
      base_cache_;
  std::map<std::tuple<std::string, int, std::uint64_t>, OracleLabelSet> label_cache_;
  std::map<std::string, ReferenceScores> ref_cache_;
  std::map<int, DenoiserCheckpoint> dim_cache_;
};

void check_inputs(const ExperimentInputs& in) {
  if (!in.data || !in.config || !in.base)
    throw std::invalid_argument("run_experiment: data, config and base are required");
  const EvalConfig& e = in.config->eval;
  for (const std::string& m : e.methods)
    if (std::find(known_methods().begin(), known_methods().end(), m) ==
        known_methods().end())
      throw std::invalid_argument("unknown method: " + m);
  for (const std::string& o : e.oracles) OracleSpec::parse(o);
  for (const std::string& p : e.priors) PriorSpec::parse(p);
  if (e.seeds.empty()) throw std::invalid_argument("run_experiment: no seeds");
  if (e.n_samples <= 0)
    throw std::invalid_argument("run_experiment: n_samples must be positive");
}

}  // namespace

PretrainRun pretrain_from_config(const RunConfig& config, const Dataset& data,
                                 const TrainProgress& progress) {
  const NoiseSchedule schedule = make_cosine_schedule(config.diffusion_steps);
  const Normalizer normalizer = data.normalizer();
  PretrainResult r = pretrain(config.model, schedule, data.corpus, normalizer,
                              config.pretrain, derive_seed(config.seed, 105), progress);
  PretrainRun out;
  out.checkpoint.params = std::move(r.params);
  out.checkpoint.normalizer = normalizer;
  out.checkpoint.mask = std::move(r.mask);
  out.checkpoint.diffusion_steps = config.diffusion_steps;
  out.checkpoint.run_config = to_json(config);
  out.loss_history = std::move(r.loss_history);
  out.max_mapper_grad = r.max_mapper_grad;
  return out;
}

AdaptedArtifact adapt_from_labels(const DenoiserCheckpoint& checkpoint,
                                  const std::vector<LabelRecord>& labels,
                                  const std::vector<FullTrajectory>& corpus,
                                  const InversionConfig& config,
                                  const InversionProgress& progress) {
  std::vector<QueryPair> pairs;
  for (const LabelRecord& r : labels) {
    try {
      auto one = pairs_for_labels({r}, corpus);
      pairs.push_back(std::move(one.at(0)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("label for pair " + r.label.pair_id + ": " + e.what());
    }
  }
  std::vector<PreferenceLabel> plain;
  for (const LabelRecord& r : labels) plain.push_back(r.label);
  const std::vector<LabeledPair> resolved =
      resolve_labels(pairs, plain, checkpoint.normalizer);
  const NoiseSchedule schedule = make_cosine_schedule(checkpoint.diffusion_steps);
  const InversionResult inv =
      invert_preferences(checkpoint.params, schedule, resolved, config, progress);
  AdaptedArtifact a;
  a.z_w = inv.z_w.z;
  a.z_l = inv.z_l.z;
  a.z_w_init = inv.z_w_init;
  a.z_l_init = inv.z_l_init;
  a.label_hash = label_set_hash(plain);
  a.n_labels = static_cast<int>(plain.size());
  a.n_adapt = static_cast<int>(inv.loss_history.size());
  a.batch_size = config.batch_size > 0
                     ? config.batch_size
                     : std::min<int>(16, static_cast<int>(plain.size()));
  a.learning_rate = config.learning_rate;
  a.prior = config.prior.name();
  a.seed = config.seed;
  const auto& h = inv.loss_history;
  const std::size_t tail = std::min<std::size_t>(100, h.size());
  for (std::size_t i = h.size() - tail; i < h.size(); ++i)
    a.final_loss += h[i] / static_cast<double>(tail);
  return a;
}

CellSeeds cell_seeds(std::uint64_t seed, int n_query) {
  const std::uint64_t q = derive_seed(seed, 0x100 + static_cast<std::uint64_t>(n_query));
  return {derive_seed(q, 1), derive_seed(q, 2), derive_seed(seed, 3),
          derive_seed(seed, 4), derive_seed(seed, 5)};
}

OracleLabelSet make_oracle_labels(const Dataset& data, const OracleSpec& oracle,
                                  int n_query, int horizon, std::uint64_t seed) {
  OracleLabelSet set;
  set.pairs = make_query_pairs(data.corpus, n_query, horizon, seed);
  set.labels = oracle_label_all(set.pairs, oracle);
  set.resolved = resolve_labels(set.pairs, set.labels, data.normalizer());
  return set;
}

json report_to_json(const EvalReport& r) {
  return {{"method", r.method},
          {"oracle", r.oracle},
          {"sweep", r.sweep},
          {"setting", r.setting},
          {"n_query", r.n_query},
          {"n_adapt", r.n_adapt},
          {"seed", r.seed},
          {"n_labels", r.n_labels},
          {"n_samples", r.n_samples},
          {"mean_reward", r.mean_reward},
          {"base_mean_reward", r.base_mean_reward},
          {"win_rate", r.win_rate},
          {"normalized_score", r.normalized_score},
          {"runtime_seconds", r.runtime_seconds}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  r.method = j.at("method");
  r.oracle = j.at("oracle");
  r.sweep = j.at("sweep");
  r.setting = j.at("setting");
  r.n_query = j.at("n_query");
  r.n_adapt = j.at("n_adapt");
  r.seed = j.at("seed");
  r.n_labels = j.at("n_labels");
  r.n_samples = j.at("n_samples");
  r.mean_reward = j.at("mean_reward");
  r.base_mean_reward = j.at("base_mean_reward");
  r.win_rate = j.at("win_rate");
  r.normalized_score = j.at("normalized_score");
  r.runtime_seconds = j.at("runtime_seconds");
  return r;
}

std::string reports_to_jsonl(std::vector<EvalReport> reports) {
  sort_reports(reports);
  std::string out;
  for (const EvalReport& r : reports) out += report_to_json(r).dump() + "\n";
  return out;
}

std::string reports_to_csv(std::vector<EvalReport> reports) {
  sort_reports(reports);
  std::string out = "method,n_query,n_adapt,seed,metric,value\n";
  for (const EvalReport& r : reports) {
    const std::string prefix = method_label(r) + "," + std::to_string(r.n_query) +
                               "," + std::to_string(r.n_adapt) + "," +
                               std::to_string(r.seed) + ",";
    const std::pair<const char*, double> metrics[] = {
        {"win_rate", r.win_rate},
        {"mean_reward", r.mean_reward},
        {"base_mean_reward", r.base_mean_reward},
        {"normalized_score", r.normalized_score},
        {"runtime_seconds", r.runtime_seconds}};
    for (const auto& [name, value] : metrics)
      out += prefix + name + "," + format_double(value) + "\n";
  }
  return out;
}

std::vector<ReportSummary> summarize(const std::vector<EvalReport>& reports) {
  std::map<std::tuple<std::string, std::string, std::string, std::string, int, int>,
           std::vector<const EvalReport*>>
      groups;
  for (const EvalReport& r : reports)
    groups[{r.sweep, r.method, r.oracle, r.setting, r.n_query, r.n_adapt}].push_back(&r);
  auto stats = [](const std::vector<const EvalReport*>& g, double EvalReport::*f) {
    double mean = 0.0;
    for (const EvalReport* r : g) mean += r->*f;
    mean /= static_cast<double>(g.size());
    double var = 0.0;
    for (const EvalReport* r : g) var += (r->*f - mean) * (r->*f - mean);
    const double sd = g.size() > 1 ? std::sqrt(var / static_cast<double>(g.size() - 1)) : 0.0;
    return std::make_pair(mean, sd);
  };
  std::vector<ReportSummary> out;
  for (const auto& [key, g] : groups) {
    ReportSummary s;
    std::tie(s.sweep, s.method, s.oracle, s.setting, s.n_query, s.n_adapt) = key;
    s.n_seeds = static_cast<int>(g.size());
    std::tie(s.win_rate_mean, s.win_rate_std) = stats(g, &EvalReport::win_rate);
    std::tie(s.mean_reward_mean, s.mean_reward_std) = stats(g, &EvalReport::mean_reward);
    std::tie(s.normalized_score_mean, s.normalized_score_std) =
        stats(g, &EvalReport::normalized_score);
    out.push_back(std::move(s));
  }
  return out;
}

std::string summaries_to_csv(const std::vector<ReportSummary>& summaries) {
  std::string out =
      "sweep,method,oracle,setting,n_query,n_adapt,n_seeds,win_rate_mean,"
      "win_rate_std,mean_reward_mean,mean_reward_std,normalized_score_mean,"
      "normalized_score_std\n";
  for (const ReportSummary& s : summaries)
    out += s.sweep + "," + s.method + "," + s.oracle + "," + s.setting + "," +
           std::to_string(s.n_query) + "," + std::to_string(s.n_adapt) + "," +
           std::to_string(s.n_seeds) + "," + format_double(s.win_rate_mean) + "," +
           format_double(s.win_rate_std) + "," + format_double(s.mean_reward_mean) +
           "," + format_double(s.mean_reward_std) + "," +
           format_double(s.normalized_score_mean) + "," +
           format_double(s.normalized_score_std) + "\n";
  return out;
}

std::vector<EvalReport> run_experiment(const ExperimentInputs& inputs,
                                       const ExperimentLog& log) {
  check_inputs(inputs);
  Runner runner(inputs);
  return runner.run(log);
}

}  // namespace pledi
