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


#include "pledi/server.h"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "pledi/eval.h"
#include "pledi/experiment.h"
#include "pledi/pipeline.h"

namespace pledi {

std::string left_side(const std::string& pair_id) {
  return (fnv1a64(pair_id) >> 7) & 1 ? "b" : "a";
}
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kMaxSamples = 1000;
constexpr int kMaxAdaptSteps = 1000000;

// Thrown by handlers and turned into the error envelope.
struct HttpError {
  int status;
  std::string code;
  std::string message;
  std::string field;
};

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const HttpError& e) {
  json err = {{"code", e.code}, {"message", e.message}};
  if (!e.field.empty()) err["field"] = e.field;
  send_json(res, e.status, {{"error", err}});
}

HttpError bad_request(const std::string& message, const std::string& field = "") {
  return {400, "bad_request", message, field};
}

json parse_body(const httplib::Request& req, bool allow_empty) {
  if (req.body.empty() && allow_empty) return json::object();
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception& e) {
    throw HttpError{400, "malformed_json", std::string("body is not valid JSON: ") + e.what(), ""};
  }
  if (!body.is_object()) throw bad_request("body must be a JSON object");
  return body;
}

void reject_unknown_keys(const json& body, const std::set<std::string>& allowed) {
  for (const auto& [key, _] : body.items())
    if (!allowed.count(key)) throw bad_request("unknown field \"" + key + "\"", key);
}

json segment_json(const Mat& seg, int episode_id, int start) {
  json states = json::array(), actions = json::array();
  for (int t = 0; t < seg.rows(); ++t) {
    states.push_back({seg(t, 0), seg(t, 1)});
    actions.push_back({seg(t, kStateDim), seg(t, kStateDim + 1)});
  }
  json j = {{"states", states}, {"actions", actions}};
  if (episode_id >= 0) {
    j["episode_id"] = episode_id;
    j["start"] = start;
  }
  return j;
}

json oracle_annotations(const Mat& seg) {
  json out = json::object();
  for (OracleKind k : {OracleKind::kSpeed, OracleKind::kSmoothness, OracleKind::kCurl})
    out[to_string(k)] = oracle_reward(seg, OracleSpec{k, 1});
  return out;
}

std::string random_hex(int n) {
  static std::mutex mu;
  static std::random_device rd;
  std::lock_guard<std::mutex> lock(mu);
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (int i = 0; i < n; ++i) s += digits[rd() % 16];
  return s;
}

std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct Session {
  std::mutex mu;
  std::string id, user, dir;
  std::uint64_t seed = 0;
  std::int64_t created = 0;
  std::vector<QueryPair> pairs;
  std::map<std::string, std::size_t> pair_index;
  std::vector<LabelRecord> labels;
  std::map<std::string, Winner> labeled;

  // Adaptation state.
  std::string state = "idle";  // idle, running, done, failed
  std::string job_id;
  int job_counter = 0;
  int step = 0;
  int n_adapt = 0;
  double loss = 0.0;
  std::string job_error;
  std::optional<AdaptedArtifact> adapted;
  GuidanceWeights weights;
  std::atomic<bool> cancel{false};
  std::thread worker;
  std::map<std::pair<int, std::uint64_t>, std::string> sample_cache;

  std::string path(const char* file) const { return dir + "/" + file; }
};

}  // namespace

class Server::Impl {
 public:
  explicit Impl(ServerContext ctx)
      : ctx_(std::move(ctx)) {
    if (!ctx_.checkpoint || !ctx_.data)
      throw std::invalid_argument("server: checkpoint and data are required");
    schedule_ = make_cosine_schedule(ctx_.checkpoint->diffusion_steps);
    // SO_REUSEADDR only: a second live server on the same port must fail.
    http_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    fs::create_directories(ctx_.sessions_dir);
    load_sessions();
    routes();
  }

  ~Impl() {
    stop();
    shutdown_jobs();
  }

  int bind(const std::string& host, int port) {
    if (port == 0) {
      const int p = http_.bind_to_any_port(host);
      if (p < 0) throw std::runtime_error("cannot bind " + host);
      return p;
    }
    if (!http_.bind_to_port(host, port))
      throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port) +
                               " (port in use or unavailable)");
    return port;
  }

  void listen() { http_.listen_after_bind(); }
  void stop() { http_.stop(); }

  void shutdown_jobs() {
    std::lock_guard<std::mutex> lock(sessions_mu_);
    for (auto& [_, s] : sessions_) {
      s->cancel = true;
      if (s->worker.joinable()) s->worker.join();
    }
  }

  int session_count() const {
    std::lock_guard<std::mutex> lock(sessions_mu_);
    return static_cast<int>(sessions_.size());
  }

 private:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  Handler guarded(Handler h) {
    return [h](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const HttpError& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_error(res, {500, "internal", e.what(), ""});
      }
    };
  }

  void routes() {
    http_.Get("/healthz", guarded([this](const auto&, auto& res) {
                send_json(res, 200, {{"status", "ok"}, {"sessions", session_count()}});
              }));
    http_.Post("/sessions", guarded([this](const auto& req, auto& res) { create(req, res); }));
    http_.Get("/sessions/:id/next-pair",
              guarded([this](const auto& req, auto& res) { next_pair(req, res); }));
    http_.Post("/sessions/:id/labels",
               guarded([this](const auto& req, auto& res) { post_label(req, res); }));
    http_.Post("/sessions/:id/adapt",
               guarded([this](const auto& req, auto& res) { adapt(req, res); }));
    http_.Get("/sessions/:id/adapt/status",
              guarded([this](const auto& req, auto& res) { status(req, res); }));
    http_.Get("/sessions/:id/samples",
              guarded([this](const auto& req, auto& res) { samples(req, res); }));
    http_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty())
        send_error(res, {res.status, res.status == 404 ? "not_found" : "error",
                         "no such endpoint", ""});
    });
  }

  std::shared_ptr<Session> find(const httplib::Request& req) {
    const std::string id = req.path_params.at("id");
    std::lock_guard<std::mutex> lock(sessions_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end())
      throw HttpError{404, "unknown_session", "no session " + id, ""};
    return it->second;
  }

  // --- persistence -------------------------------------------------------

  static json session_meta(const Session& s) {
    return {{"session_id", s.id}, {"user", s.user}, {"seed", s.seed},
            {"created", s.created}};
  }

  void load_sessions() {
    for (const auto& entry : fs::directory_iterator(ctx_.sessions_dir)) {
      if (!entry.is_directory() || !fs::exists(entry.path() / "session.json")) continue;
      try {
        auto s = load_session(entry.path().string());
        sessions_[s->id] = s;
      } catch (const std::exception& e) {
        std::cerr << "skipping session " << entry.path() << ": " << e.what() << "\n";
      }
    }
  }

  std::shared_ptr<Session> load_session(const std::string& dir) {
    auto s = std::make_shared<Session>();
    s->dir = dir;
    const json meta = json::parse(read_text_file(dir + "/session.json"));
    s->id = meta.at("session_id");
    s->user = meta.at("user");
    s->seed = meta.at("seed");
    s->created = meta.at("created");
    if (fs::exists(s->path("pairs.jsonl")))
      for (QueryPair& p : pairs_from_jsonl(read_text_file(s->path("pairs.jsonl")),
                                           ctx_.data->corpus)) {
        s->pair_index[p.pair_id] = s->pairs.size();
        s->pairs.push_back(std::move(p));
      }
    if (fs::exists(s->path("labels.jsonl"))) {
      // A torn final line can only belong to an unacknowledged label.
      std::istringstream in(read_text_file(s->path("labels.jsonl")));
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
          LabelRecord r = label_record_from_json(json::parse(line));
          if (s->labeled.count(r.label.pair_id)) continue;
          s->labeled[r.label.pair_id] = r.label.winner;
          s->labels.push_back(std::move(r));
        } catch (const std::exception& e) {
          std::cerr << "session " << s->id << ": ignoring label line: " << e.what() << "\n";
        }
      }
    }
    if (fs::exists(s->path("adapted.json"))) {
      const json a = json::parse(read_text_file(s->path("adapted.json")));
      s->adapted = artifact_from_json(a.at("artifact"));
      s->weights = {a.at("v").get<double>(), a.at("u").get<double>()};
      s->job_id = a.at("job_id");
      s->job_counter = a.value("job_counter", 1);
      s->step = s->n_adapt = s->adapted->n_adapt;
      s->loss = s->adapted->final_loss;
      s->state = "done";
    }
    return s;
  }

  // --- handlers ----------------------------------------------------------

  void create(const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req, /*allow_empty=*/true);
    reject_unknown_keys(body, {"user", "seed"});
    auto s = std::make_shared<Session>();
    if (body.contains("user")) {
      if (!body["user"].is_string()) throw bad_request("user must be a string", "user");
      s->user = body["user"];
    }
    s->id = random_hex(16);
    if (body.contains("seed")) {
      if (!body["seed"].is_number_unsigned())
        throw bad_request("seed must be a non-negative integer", "seed");
      s->seed = body["seed"];
    } else {
      s->seed = std::stoull(s->id.substr(0, 15), nullptr, 16);
    }
    s->created = unix_now();
    s->dir = ctx_.sessions_dir + "/" + s->id;
    fs::create_directories(s->dir);
    write_text_file(s->path("config.json"), to_json(ctx_.config).dump(2) + "\n");
    write_text_file(s->path("session.json"), session_meta(*s).dump(2) + "\n");
    {
      std::lock_guard<std::mutex> lock(sessions_mu_);
      sessions_[s->id] = s;
    }
    send_json(res, 201, {{"session_id", s->id}});
  }

  void next_pair(const httplib::Request& req, httplib::Response& res) {
    auto s = find(req);
    std::lock_guard<std::mutex> lock(s->mu);
    const int H = ctx_.checkpoint->params.config.horizon;
    const std::size_t n = s->pairs.size();
    QueryPair p = make_query_pairs(ctx_.data->corpus, 1, H, derive_seed(s->seed, n)).at(0);
    p.pair_id = s->id.substr(0, 8) + "-" + std::to_string(n);
    std::string line = pairs_to_jsonl({p});
    line.pop_back();
    append_line_durable(s->path("pairs.jsonl"), line);
    s->pair_index[p.pair_id] = n;
    s->pairs.push_back(p);
    send_json(res, 200,
              {{"pair_id", p.pair_id},
               {"a", segment_json(p.a.data, p.a.episode_id, p.a.start)},
               {"b", segment_json(p.b.data, p.b.episode_id, p.b.start)},
               {"placement", {{"left", left_side(p.pair_id)},
                              {"right", left_side(p.pair_id) == "a" ? "b" : "a"}}}});
  }

  void post_label(const httplib::Request& req, httplib::Response& res) {
    auto s = find(req);
    const json body = parse_body(req, /*allow_empty=*/false);
    reject_unknown_keys(body, {"pair_id", "winner"});
    if (!body.contains("pair_id") || !body["pair_id"].is_string())
      throw bad_request("pair_id must be a string", "pair_id");
    if (!body.contains("winner") || !body["winner"].is_string())
      throw bad_request("winner must be \"a\" or \"b\"", "winner");
    const std::string pair_id = body["pair_id"];
    Winner winner;
    try {
      winner = parse_winner(body["winner"]);
    } catch (const std::invalid_argument& e) {
      throw bad_request(e.what(), "winner");
    }
    std::lock_guard<std::mutex> lock(s->mu);
    auto pit = s->pair_index.find(pair_id);
    if (pit == s->pair_index.end())
      throw HttpError{400, "unknown_pair", "pair " + pair_id + " was not issued by this session",
                      "pair_id"};
    auto done = s->labeled.find(pair_id);
    if (done != s->labeled.end()) {
      send_json(res, 200, {{"pair_id", pair_id},
                           {"winner", to_string(done->second)},
                           {"n_labels", s->labels.size()},
                           {"duplicate", true}});
      return;
    }
    const QueryPair& p = s->pairs[pit->second];
    LabelRecord r;
    r.label = {pair_id, winner, LabelSource::kHuman, unix_now()};
    r.a = {p.a.episode_id, p.a.start};
    r.b = {p.b.episode_id, p.b.start};
    r.horizon = static_cast<int>(p.a.data.rows());
    append_line_durable(s->path("labels.jsonl"), label_record_to_json(r).dump());
    s->labeled[pair_id] = winner;
    s->labels.push_back(std::move(r));
    send_json(res, 200, {{"pair_id", pair_id},
                         {"winner", to_string(winner)},
                         {"n_labels", s->labels.size()},
                         {"duplicate", false}});
  }

  void adapt(const httplib::Request& req, httplib::Response& res) {
    auto s = find(req);
    const json body = parse_body(req, /*allow_empty=*/true);
    reject_unknown_keys(body, {"n_adapt", "u", "v"});
    InversionConfig ic = ctx_.config.inversion;
    GuidanceWeights w = ctx_.config.guidance;
    if (body.contains("n_adapt")) {
      if (!body["n_adapt"].is_number_integer() || body["n_adapt"].get<long long>() <= 0 ||
          body["n_adapt"].get<long long>() > kMaxAdaptSteps)
        throw bad_request("n_adapt must be an integer in [1, 1000000]", "n_adapt");
      ic.n_adapt = body["n_adapt"];
    }
    for (const char* key : {"u", "v"})
      if (body.contains(key) && (!body[key].is_number() || body[key].get<double>() < 0))
        throw bad_request(std::string(key) + " must be a non-negative number", key);
    if (body.contains("u")) w.u = body["u"];
    if (body.contains("v")) w.v = body["v"];

    std::lock_guard<std::mutex> lock(s->mu);
    if (s->labels.empty()) throw HttpError{409, "no_labels", "no labels", ""};
    if (s->state == "running")
      throw HttpError{409, "adapt_running", "an adaptation job is already running", ""};
    if (s->worker.joinable()) s->worker.join();

    ic.seed = derive_seed(s->seed, 0xada);
    ic.snapshot_steps.clear();
    s->job_id = s->id.substr(0, 8) + "-job" + std::to_string(++s->job_counter);
    s->state = "running";
    s->step = 0;
    s->loss = 0.0;
    s->n_adapt = ic.n_adapt;
    s->job_error.clear();
    s->cancel = false;
    const std::string job_id = s->job_id;
    s->worker = std::thread([this, s, ic, w, labels = s->labels, job_id] {
      run_job(s, ic, w, labels, job_id);
    });
    send_json(res, 202, {{"job_id", job_id}});
  }

  void run_job(const std::shared_ptr<Session>& s, const InversionConfig& ic,
               const GuidanceWeights& w, const std::vector<LabelRecord>& labels,
               const std::string& job_id) {
    try {
      const AdaptedArtifact a = adapt_from_labels(
          *ctx_.checkpoint, labels, ctx_.data->corpus, ic, [&](int step, double loss) {
            std::lock_guard<std::mutex> lock(s->mu);
            s->step = step;
            s->loss = loss;
            return !s->cancel.load();
          });
      std::lock_guard<std::mutex> lock(s->mu);
      if (s->cancel) {
        s->state = "idle";
        return;
      }
      const json doc = {{"artifact", artifact_to_json(a)}, {"u", w.u}, {"v", w.v},
                        {"job_id", job_id}, {"job_counter", s->job_counter}};
      write_text_file(s->path("adapted.json"), doc.dump(2) + "\n");
      s->adapted = a;
      s->weights = w;
      s->sample_cache.clear();
      s->state = "done";
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(s->mu);
      s->state = "failed";
      s->job_error = e.what();
    }
  }

  void status(const httplib::Request& req, httplib::Response& res) {
    auto s = find(req);
    std::lock_guard<std::mutex> lock(s->mu);
    json out = {{"state", s->state}, {"step", s->step}, {"loss", s->loss},
                {"n_adapt", s->n_adapt}, {"n_labels", s->labels.size()}};
    if (!s->job_id.empty()) out["job_id"] = s->job_id;
    if (!s->job_error.empty()) out["message"] = s->job_error;
    send_json(res, 200, out);
  }

  static long long query_int(const httplib::Request& req, const char* key,
                             long long fallback) {
    if (!req.has_param(key)) return fallback;
    const std::string text = req.get_param_value(key);
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos ||
        text.size() > 18)
      throw bad_request(std::string(key) + " must be a non-negative integer", key);
    return std::stoll(text);
  }

  void samples(const httplib::Request& req, httplib::Response& res) {
    auto s = find(req);
    const long long n = query_int(req, "n", 10);
    if (n < 1 || n > kMaxSamples)
      throw bad_request("n must be in [1, " + std::to_string(kMaxSamples) + "]", "n");
    const auto seed = static_cast<std::uint64_t>(query_int(req, "seed", 0));
    AdaptedArtifact a;
    GuidanceWeights w;
    {
      std::lock_guard<std::mutex> lock(s->mu);
      if (!s->adapted)
        throw HttpError{409, "not_adapted", "session has no adapted embeddings", ""};
      auto it = s->sample_cache.find({static_cast<int>(n), seed});
      if (it != s->sample_cache.end()) {
        res.status = 200;
        res.set_content(it->second, "application/json");
        return;
      }
      a = *s->adapted;
      w = s->weights;
    }
    const DenoiserCheckpoint& ck = *ctx_.checkpoint;
    const auto segs = sample_adapted(ck.params, schedule_, ck.normalizer, a.z_w, a.z_l, w,
                                     static_cast<int>(n), seed);
    json list = json::array();
    for (const Mat& seg : segs) {
      json item = segment_json(seg, -1, 0);
      item["oracle_rewards"] = oracle_annotations(seg);
      list.push_back(std::move(item));
    }
    const std::string body =
        json{{"n", n}, {"seed", seed}, {"u", w.u}, {"v", w.v}, {"samples", list}}.dump();
    {
      std::lock_guard<std::mutex> lock(s->mu);
      s->sample_cache[{static_cast<int>(n), seed}] = body;
    }
    res.status = 200;
    res.set_content(body, "application/json");
  }

  ServerContext ctx_;
  NoiseSchedule schedule_;
  httplib::Server http_;
  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

Server::Server(ServerContext context) : impl_(std::make_unique<Impl>(std::move(context))) {}
Server::~Server() = default;
int Server::bind(const std::string& host, int port) { return impl_->bind(host, port); }
void Server::listen() { impl_->listen(); }
void Server::stop() { impl_->stop(); }
void Server::shutdown_jobs() { impl_->shutdown_jobs(); }
int Server::session_count() const { return impl_->session_count(); }

}  // namespace pledi
