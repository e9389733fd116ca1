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


#ifndef PLEDI_SERVER_H_
#define PLEDI_SERVER_H_

#include <memory>
#include <string>

#include "pledi/checkpoint.h"
#include "pledi/config.h"
#include "pledi/dataio.h"

namespace pledi {

struct ServerContext {
  std::shared_ptr<const DenoiserCheckpoint> checkpoint;
  std::shared_ptr<const Dataset> data;
  RunConfig config;
  std::string sessions_dir;
};

// Side ("a" or "b") a client shows on the left for a pair. Deterministic in
// the pair id so placement is auditable.
std::string left_side(const std::string& pair_id);

// HTTP labeling and adaptation service.
//
//   POST /sessions                     {user?, seed?} -> 201 {session_id}
//   GET  /sessions/{id}/next-pair      -> {pair_id, a, b, placement}
//   POST /sessions/{id}/labels         {pair_id, winner: "a"|"b"}
//   POST /sessions/{id}/adapt          {n_adapt?, u?, v?} -> 202 {job_id}
//   GET  /sessions/{id}/adapt/status   -> {state, step, loss, ...}
//   GET  /sessions/{id}/samples?n=K&seed=S
//   GET  /healthz
//
// Errors use {"error": {"code", "message", "field"?}}. Each session lives in
// its own directory under sessions_dir; labels are fsynced before they are
// acknowledged and every session is reloaded on startup.
class Server {
 public:
  explicit Server(ServerContext context);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds the socket; port 0 picks a free port. Returns the bound port and
  // throws when the address is unavailable.
  int bind(const std::string& host, int port);
  // Serves until stop(); requires bind().
  void listen();
  void stop();
  // Cancels running adaptation jobs and waits for them.
  void shutdown_jobs();

  int session_count() const;

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pledi

#endif  // PLEDI_SERVER_H_
