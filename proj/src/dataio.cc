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


#include "pledi/dataio.h"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace pledi {
namespace {

using nlohmann::json;

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const json& j, int cols, const char* what) {
  Mat m(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != static_cast<std::size_t>(cols))
      throw std::invalid_argument(std::string(what) + ": row " +
                                  std::to_string(i) + " must have " +
                                  std::to_string(cols) + " entries");
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

json vec_to_json(const Vec& v) {
  return DVector(v.data(), v.data() + v.size());
}

Vec vec_from_json(const json& j) {
  const auto values = j.get<DVector>();
  return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

template <typename Fn>
void for_each_line(const std::string& text, Fn fn) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw std::invalid_argument("line " + std::to_string(n) + ": " + e.what());
    }
  }
}

Segment segment_for(const SegmentRef& ref, int H,
                    const std::vector<FullTrajectory>& corpus) {
  if (ref.episode_id < 0 || ref.episode_id >= static_cast<int>(corpus.size()))
    throw std::invalid_argument("segment references unknown episode " +
                                std::to_string(ref.episode_id));
  return extract_segment(corpus[ref.episode_id], ref.start, H);
}

json ref_json(const SegmentRef& r) {
  return {{"episode_id", r.episode_id}, {"start", r.start}};
}

SegmentRef ref_from(const json& j) {
  return {j.at("episode_id").get<int>(), j.at("start").get<int>()};
}

}  // namespace

Manifest make_manifest(const std::vector<FullTrajectory>& corpus, int n_modes,
                       std::uint64_t seed, const std::vector<std::string>& oracles,
                       int H) {
  if (corpus.empty()) throw std::invalid_argument("make_manifest: empty corpus");
  Manifest m;
  m.episode_length = corpus[0].length();
  m.n_episodes = static_cast<int>(corpus.size());
  m.n_modes = n_modes;
  m.seed = seed;
  const Normalizer n = Normalizer::fit(corpus);
  m.min = n.min();
  m.max = n.max();
  for (const std::string& name : oracles)
    m.reference[name] = reference_scores(OracleSpec::parse(name), m.episode_length,
                                         H, n_modes, derive_seed(seed, 0x5c));
  return m;
}

std::string corpus_to_jsonl(const std::vector<FullTrajectory>& corpus) {
  std::string out;
  for (const FullTrajectory& e : corpus) {
    json j = {{"episode_id", e.episode_id},
              {"mode_id", e.mode_id},
              {"states", mat_to_json(e.states)},
              {"actions", mat_to_json(e.actions)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<FullTrajectory> corpus_from_jsonl(const std::string& text) {
  std::vector<FullTrajectory> corpus;
  for_each_line(text, [&](const json& j) {
    FullTrajectory e;
    e.episode_id = j.at("episode_id").get<int>();
    e.mode_id = j.at("mode_id").get<int>();
    e.states = mat_from_json(j.at("states"), kStateDim, "states");
    e.actions = mat_from_json(j.at("actions"), kActionDim, "actions");
    if (e.states.rows() != e.actions.rows())
      throw std::invalid_argument("episode " + std::to_string(e.episode_id) +
                                  ": states and actions differ in length");
    corpus.push_back(std::move(e));
  });
  return corpus;
}

json manifest_to_json(const Manifest& m) {
  json ref = json::object();
  for (const auto& [name, s] : m.reference)
    ref[name] = {{"random", s.random_score}, {"expert", s.expert_score}};
  return {{"S", m.state_dim},
          {"A", m.action_dim},
          {"L", m.episode_length},
          {"n_episodes", m.n_episodes},
          {"n_modes", m.n_modes},
          {"dt", m.dt},
          {"seed", m.seed},
          {"min", vec_to_json(m.min)},
          {"max", vec_to_json(m.max)},
          {"reference_scores", ref}};
}

Manifest manifest_from_json(const json& j) {
  Manifest m;
  m.state_dim = j.at("S");
  m.action_dim = j.at("A");
  m.episode_length = j.at("L");
  m.n_episodes = j.at("n_episodes");
  m.n_modes = j.at("n_modes");
  m.dt = j.at("dt");
  m.seed = j.at("seed");
  m.min = vec_from_json(j.at("min"));
  m.max = vec_from_json(j.at("max"));
  for (const auto& [name, s] : j.at("reference_scores").items())
    m.reference[name] = {s.at("random").get<double>(), s.at("expert").get<double>()};
  return m;
}

void write_dataset(const std::string& dir,
                   const std::vector<FullTrajectory>& corpus,
                   const Manifest& manifest) {
  std::filesystem::create_directories(dir);
  write_text_file(dir + "/corpus.jsonl", corpus_to_jsonl(corpus));
  write_text_file(dir + "/manifest.json", manifest_to_json(manifest).dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  try {
    d.manifest = manifest_from_json(json::parse(read_text_file(dir + "/manifest.json")));
  } catch (const json::exception& e) {
    throw std::invalid_argument(dir + "/manifest.json: " + e.what());
  }
  d.corpus = corpus_from_jsonl(read_text_file(dir + "/corpus.jsonl"));
  const Manifest& m = d.manifest;
  auto mismatch = [&](const std::string& what) {
    throw std::invalid_argument("corpus/manifest mismatch in " + dir + ": " + what);
  };
  if (m.state_dim != kStateDim || m.action_dim != kActionDim)
    mismatch("S/A differ from the environment");
  if (static_cast<int>(d.corpus.size()) != m.n_episodes)
    mismatch("manifest lists " + std::to_string(m.n_episodes) +
             " episodes, corpus has " + std::to_string(d.corpus.size()));
  if (m.min.size() != kStateDim + kActionDim || m.max.size() != m.min.size())
    mismatch("normalizer bounds have the wrong length");
  for (std::size_t i = 0; i < d.corpus.size(); ++i) {
    if (d.corpus[i].length() != m.episode_length)
      mismatch("episode " + std::to_string(i) + " has length " +
               std::to_string(d.corpus[i].length()));
    if (d.corpus[i].episode_id != static_cast<int>(i))
      mismatch("episode ids must be 0..n-1 in order");
  }
  return d;
}

std::string pairs_to_jsonl(const std::vector<QueryPair>& pairs) {
  std::string out;
  for (const QueryPair& p : pairs) {
    json j = {{"pair_id", p.pair_id},
              {"horizon", p.a.data.rows()},
              {"a", ref_json({p.a.episode_id, p.a.start})},
              {"b", ref_json({p.b.episode_id, p.b.start})}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<QueryPair> pairs_from_jsonl(const std::string& text,
                                        const std::vector<FullTrajectory>& corpus) {
  std::vector<QueryPair> pairs;
  for_each_line(text, [&](const json& j) {
    QueryPair p;
    p.pair_id = j.at("pair_id").get<std::string>();
    const int H = j.at("horizon").get<int>();
    p.a = segment_for(ref_from(j.at("a")), H, corpus);
    p.b = segment_for(ref_from(j.at("b")), H, corpus);
    pairs.push_back(std::move(p));
  });
  return pairs;
}

json label_record_to_json(const LabelRecord& r) {
  return {{"pair_id", r.label.pair_id},
          {"winner", to_string(r.label.winner)},
          {"source", to_string(r.label.source)},
          {"timestamp", r.label.timestamp},
          {"horizon", r.horizon},
          {"a", ref_json(r.a)},
          {"b", ref_json(r.b)}};
}

LabelRecord label_record_from_json(const json& j) {
  LabelRecord r;
  r.label.pair_id = j.at("pair_id").get<std::string>();
  r.label.winner = parse_winner(j.at("winner").get<std::string>());
  r.label.source = parse_label_source(j.at("source").get<std::string>());
  r.label.timestamp = j.at("timestamp").get<std::int64_t>();
  r.horizon = j.at("horizon").get<int>();
  r.a = ref_from(j.at("a"));
  r.b = ref_from(j.at("b"));
  return r;
}

std::string labels_to_jsonl(const std::vector<LabelRecord>& records) {
  std::string out;
  for (const LabelRecord& r : records) {
    out += label_record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<LabelRecord> labels_from_jsonl(const std::string& text) {
  std::vector<LabelRecord> out;
  for_each_line(text, [&](const json& j) { out.push_back(label_record_from_json(j)); });
  return out;
}

std::vector<LabelRecord> attach_refs(const std::vector<PreferenceLabel>& labels,
                                     const std::vector<QueryPair>& pairs) {
  std::unordered_map<std::string, const QueryPair*> by_id;
  for (const QueryPair& p : pairs) by_id[p.pair_id] = &p;
  std::vector<LabelRecord> out;
  for (const PreferenceLabel& l : labels) {
    auto it = by_id.find(l.pair_id);
    if (it == by_id.end())
      throw std::invalid_argument("label references unknown pair_id " + l.pair_id);
    const QueryPair& p = *it->second;
    out.push_back({l,
                   {p.a.episode_id, p.a.start},
                   {p.b.episode_id, p.b.start},
                   static_cast<int>(p.a.data.rows())});
  }
  return out;
}

std::vector<QueryPair> pairs_for_labels(const std::vector<LabelRecord>& records,
                                        const std::vector<FullTrajectory>& corpus) {
  std::vector<QueryPair> pairs;
  for (const LabelRecord& r : records) {
    QueryPair p;
    p.pair_id = r.label.pair_id;
    p.a = segment_for(r.a, r.horizon, corpus);
    p.b = segment_for(r.b, r.horizon, corpus);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

json artifact_to_json(const AdaptedArtifact& a) {
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(a.label_hash));
  return {{"z_w", vec_to_json(a.z_w)},
          {"z_l", vec_to_json(a.z_l)},
          {"z_w_init", vec_to_json(a.z_w_init)},
          {"z_l_init", vec_to_json(a.z_l_init)},
          {"label_hash", hash},
          {"n_labels", a.n_labels},
          {"n_adapt", a.n_adapt},
          {"batch_size", a.batch_size},
          {"learning_rate", a.learning_rate},
          {"prior", a.prior},
          {"seed", a.seed},
          {"final_loss", a.final_loss}};
}

AdaptedArtifact artifact_from_json(const json& j) {
  AdaptedArtifact a;
  a.z_w = vec_from_json(j.at("z_w"));
  a.z_l = vec_from_json(j.at("z_l"));
  a.z_w_init = vec_from_json(j.at("z_w_init"));
  a.z_l_init = vec_from_json(j.at("z_l_init"));
  a.label_hash = std::stoull(j.at("label_hash").get<std::string>(), nullptr, 16);
  a.n_labels = j.at("n_labels");
  a.n_adapt = j.at("n_adapt");
  a.batch_size = j.at("batch_size");
  a.learning_rate = j.at("learning_rate");
  a.prior = j.at("prior").get<std::string>();
  a.seed = j.at("seed");
  a.final_loss = j.at("final_loss");
  return a;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << text;
    if (!out) throw std::runtime_error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void append_line_durable(const std::string& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0)
    throw std::runtime_error("cannot open " + path + ": " + std::strerror(errno));
  const std::string data = line + "\n";
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw std::runtime_error("write to " + path + " failed: " + std::strerror(err));
    }
    done += static_cast<std::size_t>(n);
  }
  const int rc = ::fsync(fd);
  ::close(fd);
  if (rc != 0) throw std::runtime_error("fsync of " + path + " failed");
}

}  // namespace pledi
