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


#include <chrono>
#include <memory>
#include <set>
#include <string>
#include <thread>

#include "doctest.h"
#include "json.hpp"
#include "pledi/config.h"
#include "pledi/dataio.h"
#include "pledi/experiment.h"
#include "pledi/server.h"
#include "test_util.h"
// After Eigen: <resolv.h> defines a macro that collides with Eigen internals.
#include "httplib.h"

namespace pledi {
namespace {

using nlohmann::json;

// Small pretrained model and corpus shared by every server test.
const ServerContext& shared_context() {
  static const ServerContext ctx = [] {
    RunConfig c = parse_config(json::object());
    c.model = testing::tiny_config();
    c.data.episode_length = 12;
    c.diffusion_steps = 10;
    c.pretrain.n_updates = 30;
    c.pretrain.batch_size = 4;
    auto data = std::make_shared<Dataset>();
    data->corpus = generate_corpus(20, 12, 2, 1);
    data->manifest = make_manifest(data->corpus, 2, 1, {"speed+"}, 4);
    auto ckpt = std::make_shared<DenoiserCheckpoint>(
        pretrain_from_config(c, *data).checkpoint);
    return ServerContext{ckpt, data, c, ""};
  }();
  return ctx;
}

// Runs a server on a free local port for the lifetime of the object.
class RunningServer {
 public:
  explicit RunningServer(const std::string& sessions_dir) {
    ServerContext ctx = shared_context();
    ctx.sessions_dir = sessions_dir;
    server_ = std::make_unique<Server>(ctx);
    port_ = server_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_->listen(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    for (int i = 0; i < 100 && !client_->Get("/healthz"); ++i)
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ~RunningServer() {
    server_->shutdown_jobs();
    server_->stop();
    thread_.join();
  }
  httplib::Client& client() { return *client_; }
  Server& server() { return *server_; }
  int port() const { return port_; }

 private:
  std::unique_ptr<Server> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

json body_of(const httplib::Result& r) { return json::parse(r->body); }

void check_error(const httplib::Result& r, int status, const std::string& code) {
  REQUIRE(r);
  CHECK(r->status == status);
  const json j = body_of(r);
  REQUIRE(j.contains("error"));
  CHECK(j["error"]["code"] == code);
  CHECK(j["error"]["message"].is_string());
}

std::string create_session(httplib::Client& c, std::uint64_t seed = 5) {
  auto r = c.Post("/sessions", json{{"user", "tester"}, {"seed", seed}}.dump(),
                  "application/json");
  REQUIRE(r);
  REQUIRE(r->status == 201);
  return body_of(r)["session_id"];
}

json next_pair(httplib::Client& c, const std::string& id) {
  auto r = c.Get("/sessions/" + id + "/next-pair");
  REQUIRE(r);
  REQUIRE(r->status == 200);
  return body_of(r);
}

httplib::Result post_label(httplib::Client& c, const std::string& id,
                           const std::string& pair_id, const std::string& winner) {
  return c.Post("/sessions/" + id + "/labels",
                json{{"pair_id", pair_id}, {"winner", winner}}.dump(),
                "application/json");
}

json wait_for_job(httplib::Client& c, const std::string& id) {
  json status;
  for (int i = 0; i < 2000; ++i) {
    auto r = c.Get("/sessions/" + id + "/adapt/status");
    REQUIRE(r);
    status = body_of(r);
    if (status["state"] != "running") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  return status;
}

TEST_CASE("health check and unknown routes") {
  RunningServer s(testing::temp_dir("srv_health"));
  auto r = s.client().Get("/healthz");
  REQUIRE(r);
  CHECK(r->status == 200);
  check_error(s.client().Get("/nope"), 404, "not_found");
}

TEST_CASE("session creation validates its body") {
  RunningServer s(testing::temp_dir("srv_create"));
  auto& c = s.client();
  auto bad = c.Post("/sessions", "{not json", "application/json");
  check_error(bad, 400, "malformed_json");
  auto unknown = c.Post("/sessions", R"({"usr": "x"})", "application/json");
  check_error(unknown, 400, "bad_request");
  CHECK(body_of(unknown)["error"]["field"] == "usr");
  check_error(c.Post("/sessions", R"({"seed": -1})", "application/json"), 400,
              "bad_request");
  auto empty = c.Post("/sessions", "", "application/json");
  REQUIRE(empty);
  CHECK(empty->status == 201);
  CHECK(body_of(empty)["session_id"].get<std::string>().size() == 16);
  CHECK(s.server().session_count() == 1);
}

TEST_CASE("unknown sessions are not found") {
  RunningServer s(testing::temp_dir("srv_404"));
  auto& c = s.client();
  check_error(c.Get("/sessions/deadbeef/next-pair"), 404, "unknown_session");
  check_error(post_label(c, "deadbeef", "x", "a"), 404, "unknown_session");
  check_error(c.Post("/sessions/deadbeef/adapt", "", "application/json"), 404,
              "unknown_session");
  check_error(c.Get("/sessions/deadbeef/adapt/status"), 404, "unknown_session");
  check_error(c.Get("/sessions/deadbeef/samples"), 404, "unknown_session");
}

TEST_CASE("adaptation and sampling need labels first") {
  RunningServer s(testing::temp_dir("srv_409"));
  auto& c = s.client();
  const std::string id = create_session(c);
  auto r = c.Post("/sessions/" + id + "/adapt", "{}", "application/json");
  check_error(r, 409, "no_labels");
  CHECK(body_of(r)["error"]["message"] == "no labels");
  check_error(c.Get("/sessions/" + id + "/samples?n=2"), 409, "not_adapted");
}

TEST_CASE("labels are validated and deduplicated by pair id") {
  RunningServer s(testing::temp_dir("srv_labels"));
  auto& c = s.client();
  const std::string id = create_session(c);
  const json pair = next_pair(c, id);
  const std::string pid = pair["pair_id"];
  CHECK(pair["a"]["states"].size() == 4);
  CHECK(pair["b"]["actions"].size() == 4);

  auto unknown = post_label(c, id, "other", "a");
  check_error(unknown, 400, "unknown_pair");
  CHECK(body_of(unknown)["error"]["field"] == "pair_id");
  auto bad_winner = post_label(c, id, pid, "left");
  check_error(bad_winner, 400, "bad_request");
  CHECK(body_of(bad_winner)["error"]["field"] == "winner");
  check_error(c.Post("/sessions/" + id + "/labels", "[1]", "application/json"),
              400, "bad_request");

  auto first = post_label(c, id, pid, "b");
  REQUIRE(first);
  CHECK(first->status == 200);
  CHECK(body_of(first)["duplicate"] == false);
  CHECK(body_of(first)["n_labels"] == 1);
  auto again = post_label(c, id, pid, "a");
  REQUIRE(again);
  CHECK(again->status == 200);
  CHECK(body_of(again)["duplicate"] == true);
  CHECK(body_of(again)["winner"] == "b");
  CHECK(body_of(again)["n_labels"] == 1);
}

TEST_CASE("pair placement is deterministic per pair id") {
  RunningServer s(testing::temp_dir("srv_place"));
  auto& c = s.client();
  const std::string id = create_session(c);
  std::set<std::string> sides;
  for (int i = 0; i < 16; ++i) {
    const json p = next_pair(c, id);
    const std::string left = p["placement"]["left"];
    CHECK(left == left_side(p["pair_id"]));
    CHECK(p["placement"]["right"] != left);
    sides.insert(left);
  }
  CHECK(sides.size() == 2);
  CHECK(left_side("abc-1") == left_side("abc-1"));
}

TEST_CASE("adaptation request parameters are validated") {
  RunningServer s(testing::temp_dir("srv_adapt_bad"));
  auto& c = s.client();
  const std::string id = create_session(c);
  const std::string url = "/sessions/" + id + "/adapt";
  check_error(c.Post(url, R"({"n_adapt": 0})", "application/json"), 400,
              "bad_request");
  check_error(c.Post(url, R"({"n_adapt": "many"})", "application/json"), 400,
              "bad_request");
  check_error(c.Post(url, R"({"u": -0.1})", "application/json"), 400,
              "bad_request");
  check_error(c.Post(url, R"({"steps": 3})", "application/json"), 400,
              "bad_request");
  check_error(c.Get("/sessions/" + id + "/samples?n=0"), 400, "bad_request");
  check_error(c.Get("/sessions/" + id + "/samples?n=abc"), 400, "bad_request");
}

TEST_CASE("full round trip survives a restart") {
  const auto dir = testing::temp_dir("srv_roundtrip");
  std::string id;
  std::string first_samples;
  {
    RunningServer s(dir);
    auto& c = s.client();
    id = create_session(c, 11);
    for (int i = 0; i < 10; ++i) {
      const json p = next_pair(c, id);
      auto r = post_label(c, id, p["pair_id"], i % 3 == 0 ? "b" : "a");
      REQUIRE(r);
      CHECK(r->status == 200);
    }
    CHECK(testing::count_lines(dir + "/" + id + "/labels.jsonl") == 10);

    auto r = c.Post("/sessions/" + id + "/adapt", R"({"n_adapt": 200})",
                    "application/json");
    REQUIRE(r);
    CHECK(r->status == 202);
    const std::string job = body_of(r)["job_id"];
    const json status = wait_for_job(c, id);
    CHECK(status["state"] == "done");
    CHECK(status["step"] == 200);
    CHECK(status["n_labels"] == 10);
    CHECK(status["job_id"] == job);

    auto samples = c.Get("/sessions/" + id + "/samples?n=6&seed=3");
    REQUIRE(samples);
    REQUIRE(samples->status == 200);
    const json j = body_of(samples);
    REQUIRE(j["samples"].size() == 6);
    for (const auto& item : j["samples"]) {
      CHECK(item["states"].size() == 4);
      CHECK(item["oracle_rewards"].contains("speed"));
      CHECK(item["oracle_rewards"].contains("smoothness"));
      CHECK(item["oracle_rewards"].contains("curl"));
    }
    first_samples = samples->body;
    CHECK(c.Get("/sessions/" + id + "/samples?n=6&seed=3")->body == first_samples);

    // An unlabelled pair issued before the restart stays labelable.
    const json pending = next_pair(c, id);
    CHECK(pending["pair_id"] == id.substr(0, 8) + "-10");
  }
  {
    RunningServer s(dir);
    auto& c = s.client();
    CHECK(s.server().session_count() == 1);
    const json status = body_of(c.Get("/sessions/" + id + "/adapt/status"));
    CHECK(status["n_labels"] == 10);
    CHECK(status["state"] == "done");
    auto samples = c.Get("/sessions/" + id + "/samples?n=6&seed=3");
    REQUIRE(samples);
    CHECK(samples->body == first_samples);
    auto late = post_label(c, id, id.substr(0, 8) + "-10", "a");
    REQUIRE(late);
    CHECK(late->status == 200);
    CHECK(body_of(late)["n_labels"] == 11);
    CHECK(next_pair(c, id)["pair_id"] == id.substr(0, 8) + "-11");
  }
}

TEST_CASE("a torn trailing label line is skipped on reload") {
  const auto dir = testing::temp_dir("srv_torn");
  std::string id;
  {
    RunningServer s(dir);
    auto& c = s.client();
    id = create_session(c);
    const json p = next_pair(c, id);
    REQUIRE(post_label(c, id, p["pair_id"], "a")->status == 200);
  }
  {
    std::ofstream out(dir + "/" + id + "/labels.jsonl", std::ios::app);
    out << "{\"pair_id\": \"trunc";
  }
  RunningServer s(dir);
  const json status = body_of(s.client().Get("/sessions/" + id + "/adapt/status"));
  CHECK(status["n_labels"] == 1);
}

TEST_CASE("binding an occupied port fails") {
  RunningServer s(testing::temp_dir("srv_port"));
  ServerContext ctx = shared_context();
  ctx.sessions_dir = testing::temp_dir("srv_port2");
  Server other(ctx);
  CHECK_THROWS(other.bind("127.0.0.1", s.port()));
}

}  // namespace
}  // namespace pledi
