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


#ifndef PLEDI_DATAIO_H_
#define PLEDI_DATAIO_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pledi/envdata.h"

namespace pledi {

// Sidecar of a corpus file.
struct Manifest {
  int state_dim = kStateDim;
  int action_dim = kActionDim;
  int episode_length = 0;
  int n_episodes = 0;
  int n_modes = 0;
  double dt = kDt;
  std::uint64_t seed = 0;
  Vec min, max;  // per-dimension corpus bounds
  // Random and best-mode reference scores, keyed by oracle name.
  std::map<std::string, ReferenceScores> reference;
};

// Reference scores are computed for each oracle over segments of length H.
Manifest make_manifest(const std::vector<FullTrajectory>& corpus, int n_modes,
                       std::uint64_t seed, const std::vector<std::string>& oracles,
                       int H);

// One episode per line: {"actions", "episode_id", "mode_id", "states"}.
std::string corpus_to_jsonl(const std::vector<FullTrajectory>& corpus);
std::vector<FullTrajectory> corpus_from_jsonl(const std::string& text);

nlohmann::json manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);

// <dir>/corpus.jsonl and <dir>/manifest.json.
void write_dataset(const std::string& dir,
                   const std::vector<FullTrajectory>& corpus,
                   const Manifest& manifest);

struct Dataset {
  std::vector<FullTrajectory> corpus;
  Manifest manifest;
  Normalizer normalizer() const { return Normalizer(manifest.min, manifest.max); }
};

// Rejects a corpus that disagrees with its manifest.
Dataset load_dataset(const std::string& dir);

struct SegmentRef {
  int episode_id = 0;
  int start = 0;
};

// A label together with the segments it compares, so that a label file can be
// resolved against the corpus without the pair file.
struct LabelRecord {
  PreferenceLabel label;
  SegmentRef a, b;
  int horizon = 0;
};

// {"a": {episode_id, start}, "b": {...}, "horizon", "pair_id"} per line.
std::string pairs_to_jsonl(const std::vector<QueryPair>& pairs);
// Segments are re-extracted from the corpus.
std::vector<QueryPair> pairs_from_jsonl(const std::string& text,
                                        const std::vector<FullTrajectory>& corpus);

nlohmann::json label_record_to_json(const LabelRecord& r);
LabelRecord label_record_from_json(const nlohmann::json& j);
std::string labels_to_jsonl(const std::vector<LabelRecord>& records);
std::vector<LabelRecord> labels_from_jsonl(const std::string& text);

std::vector<LabelRecord> attach_refs(const std::vector<PreferenceLabel>& labels,
                                     const std::vector<QueryPair>& pairs);
// Pairs referenced by the records, rebuilt from the corpus.
std::vector<QueryPair> pairs_for_labels(const std::vector<LabelRecord>& records,
                                        const std::vector<FullTrajectory>& corpus);

// Result of preference inversion plus its provenance.
struct AdaptedArtifact {
  Vec z_w, z_l;
  Vec z_w_init, z_l_init;
  std::uint64_t label_hash = 0;
  int n_labels = 0;
  int n_adapt = 0;
  int batch_size = 0;
  double learning_rate = 0.0;
  std::string prior;
  std::uint64_t seed = 0;
  double final_loss = 0.0;  // mean of the last 100 updates
};

nlohmann::json artifact_to_json(const AdaptedArtifact& a);
AdaptedArtifact artifact_from_json(const nlohmann::json& j);

std::string read_text_file(const std::string& path);
// Writes to a temporary sibling and renames it over `path`.
void write_text_file(const std::string& path, const std::string& text);
// Appends one line and flushes it to stable storage before returning.
void append_line_durable(const std::string& path, const std::string& line);

}  // namespace pledi

#endif  // PLEDI_DATAIO_H_
