// sepkit/dataset.hpp

// Copyright 2026  sepkit authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Glue between on-disk artifacts (feature directories, annotation and split
// files, checkpoints) and the in-memory training types.

#ifndef SEPKIT_DATASET_HPP_
#define SEPKIT_DATASET_HPP_

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "sepkit/annotations.hpp"
#include "sepkit/feature_io.hpp"
#include "sepkit/nn/checkpoint.hpp"
#include "sepkit/training.hpp"

namespace sepkit {

/// Loads `<dir>/<key>.<stream>.sepf` for every key, pairing each clip with
/// its annotation. Examples come back sorted by key.
inline std::vector<Example> LoadExamples(const std::string &features_dir, std::span<const ClipAnnotation> anns,
                                         std::vector<std::string> keys, std::span<const StreamName> streams) {
  std::unordered_map<std::string, const ClipAnnotation *> by_key;
  for (const auto &a : anns) by_key[a.key()] = &a;
  std::sort(keys.begin(), keys.end());
  std::vector<Example> out;
  out.reserve(keys.size());
  for (const auto &key : keys) {
    auto it = by_key.find(key);
    if (it == by_key.end()) throw InputError("no annotation for clip " + key);
    std::vector<FeatureStream> loaded;
    for (StreamName s : streams) {
      const auto path = (std::filesystem::path(features_dir) / FeatureFileName(key, s)).string();
      if (!std::filesystem::exists(path))
        throw InputError("architecture/stream mismatch: missing " + StreamLabel(s) + " features for clip " + key +
                         " (" + path + ")");
      FeatureStream f = ReadFeatureFile(path);
      if (f.name != s) throw InputError(path + ": file holds stream " + StreamLabel(f.name));
      loaded.push_back(std::move(f));
    }
    out.push_back({key, Bundle(std::move(loaded), key), DeriveTargets(*it->second)});
  }
  return out;
}

inline std::vector<const Example *> Pointers(const std::vector<Example> &examples) {
  std::vector<const Example *> p;
  p.reserve(examples.size());
  for (const auto &e : examples) p.push_back(&e);
  return p;
}

inline std::vector<std::string> KeysInSplit(std::span<const SplitAssignment> splits, Split which) {
  std::vector<std::string> keys;
  for (const auto &s : splits)
    if (s.split == which) keys.push_back(s.key);
  return keys;
}

// ---------------------------------------------------------------------------
// Trained model = checkpoint + input normalization + provenance metadata.

struct TrainedModel {
  nn::Model<float> model;
  Normalizer norm;
  std::string metadata;
};

inline void SaveTrainedModel(const std::string &path, const nn::Model<float> &model, const Normalizer &norm,
                             const std::string &metadata) {
  nn::SaveCheckpoint(path, model, metadata, norm.ToTensors());
}

inline TrainedModel LoadTrainedModel(const std::string &path) {
  nn::Checkpoint ck = nn::LoadCheckpoint(path);
  TrainedModel m;
  m.norm = Normalizer::FromCheckpoint(ck);
  m.model = std::move(ck.model);
  m.metadata = std::move(ck.metadata);
  return m;
}

/// Parses `key=value` lines.
inline std::map<std::string, std::string> ParseKeyValues(const std::string &text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("expected key=value, got '" + line + "'");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t"), b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace sepkit

#endif  // SEPKIT_DATASET_HPP_
