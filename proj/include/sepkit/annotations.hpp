// sepkit/annotations.hpp

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

// Clip annotations: per-label annotator counts, majority/soft targets,
// Fleiss' kappa, label distribution and dataset splits.

#ifndef SEPKIT_ANNOTATIONS_HPP_
#define SEPKIT_ANNOTATIONS_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sepkit/util.hpp"

namespace sepkit {

enum class Label : int {
  kBlock = 0,
  kProlongation,
  kSoundRep,
  kWordRep,
  kInterjection,
  kNoDysfluency,
  kNaturalPause,
  kUnintelligible,
  kUnsure,
  kNoSpeech,
  kPoorAudioQuality,
  kMusic,
};

constexpr size_t kNumLabels = 12;
constexpr size_t kNumEventTypes = 5;  // Block..Interjection, the detection targets

constexpr std::array<const char *, kNumLabels> kLabelNames = {
    "Block",          "Prolongation", "SoundRep", "WordRep", "Interjection",     "NoDysfluency",
    "NaturalPause",   "Unintelligible", "Unsure", "NoSpeech", "PoorAudioQuality", "Music"};

inline const char *LabelName(Label l) { return kLabelNames[static_cast<size_t>(l)]; }
inline const char *LabelName(size_t i) { return kLabelNames[i]; }

inline std::optional<Label> ParseLabel(std::string_view s) {
  for (size_t i = 0; i < kNumLabels; ++i)
    if (s == kLabelNames[i]) return static_cast<Label>(i);
  return std::nullopt;
}

struct ClipAnnotation {
  std::string source_id;
  int64_t clip_id = 0;
  int64_t start_sample = 0;
  int64_t stop_sample = 0;
  int n_annotators = 3;
  std::array<int, kNumLabels> counts{};

  std::string key() const { return source_id + "_" + std::to_string(clip_id); }
  int count(Label l) const { return counts[static_cast<size_t>(l)]; }
};

struct ClipTargets {
  std::array<int, kNumEventTypes> hard{};
  std::array<double, kNumEventTypes> soft{};
  int any = 0;
};

/// Majority rule: more than half of the annotators. For three annotators this
/// is "at least two of three".
inline bool IsMajority(int count, int n_annotators) { return 2 * count > n_annotators; }

inline ClipTargets DeriveTargets(const ClipAnnotation &ann) {
  ClipTargets t;
  for (size_t i = 0; i < kNumEventTypes; ++i) {
    t.hard[i] = IsMajority(ann.counts[i], ann.n_annotators) ? 1 : 0;
    t.soft[i] = static_cast<double>(ann.counts[i]) / ann.n_annotators;
    t.any = std::max(t.any, t.hard[i]);
  }
  return t;
}

// ---------------------------------------------------------------------------
// CSV: source_id,clip_id,start_sample,stop_sample,n_annotators,<12 labels>

inline std::string AnnotationHeader() {
  std::string h = "source_id,clip_id,start_sample,stop_sample,n_annotators";
  for (const char *n : kLabelNames) h += std::string(",") + n;
  return h;
}

inline std::string FormatAnnotations(std::span<const ClipAnnotation> anns) {
  std::string out = AnnotationHeader() + "\n";
  for (const auto &a : anns) {
    out += a.source_id + "," + std::to_string(a.clip_id) + "," + std::to_string(a.start_sample) + "," +
           std::to_string(a.stop_sample) + "," + std::to_string(a.n_annotators);
    for (int c : a.counts) out += "," + std::to_string(c);
    out += "\n";
  }
  return out;
}

/// Parses an annotation CSV. `n_annotators` is used for rows of a file with
/// no n_annotators column; otherwise the per-row value wins.
inline std::vector<ClipAnnotation> ParseAnnotations(const std::string &path, int n_annotators = 3) {
  const CsvTable t = ReadCsv(path);
  static const std::set<std::string> kMeta = {"source_id", "clip_id", "start_sample", "stop_sample",
                                              "n_annotators"};
  for (const auto &h : t.header)
    if (!kMeta.count(h) && !ParseLabel(h)) throw InputError(path + ": unknown label column '" + h + "'");
  const size_t c_src = t.Column("source_id", path), c_id = t.Column("clip_id", path);
  const size_t c_start = t.Column("start_sample", path), c_stop = t.Column("stop_sample", path);
  const std::optional<size_t> c_n =
      t.HasColumn("n_annotators") ? std::optional<size_t>(t.Column("n_annotators", path)) : std::nullopt;
  std::array<size_t, kNumLabels> c_label{};
  for (size_t l = 0; l < kNumLabels; ++l) c_label[l] = t.Column(kLabelNames[l], path);

  std::vector<ClipAnnotation> anns;
  std::unordered_set<std::string> seen;
  for (size_t i = 0; i < t.rows.size(); ++i) {
    const auto &f = t.rows[i];
    const std::string ctx = path + ":" + std::to_string(t.line_numbers[i]);
    ClipAnnotation a;
    a.source_id = f[c_src];
    a.clip_id = ParseNumber<int64_t>(f[c_id], ctx);
    a.start_sample = ParseNumber<int64_t>(f[c_start], ctx);
    a.stop_sample = ParseNumber<int64_t>(f[c_stop], ctx);
    a.n_annotators = c_n ? ParseNumber<int>(f[*c_n], ctx) : n_annotators;
    if (a.n_annotators < 1) throw InputError(ctx + ": n_annotators must be positive");
    for (size_t l = 0; l < kNumLabels; ++l) {
      const int c = ParseNumber<int>(f[c_label[l]], ctx);
      if (c < 0) throw InputError(ctx + ": negative count for " + kLabelNames[l]);
      if (c > a.n_annotators) throw InputError(ctx + ": count exceeds annotators for " + kLabelNames[l]);
      a.counts[l] = c;
    }
    if (!seen.insert(a.key()).second) throw InputError(ctx + ": duplicate clip id " + a.key());
    anns.push_back(std::move(a));
  }
  return anns;
}

/// Adapter for the public SEP-28k / FluencyBank label layout
/// (Show,EpId,ClipId,Start,Stop,<label columns>). Each row was rated by three
/// annotators; source_id becomes `<Show>_<EpId>`.
inline std::vector<ClipAnnotation> ConvertSep28kLabels(const std::string &path) {
  const CsvTable t = ReadCsv(path);
  static const std::map<std::string, Label> kColumns = {
      {"Block", Label::kBlock},
      {"Prolongation", Label::kProlongation},
      {"SoundRep", Label::kSoundRep},
      {"WordRep", Label::kWordRep},
      {"Interjection", Label::kInterjection},
      {"NoStutteredWords", Label::kNoDysfluency},
      {"NaturalPause", Label::kNaturalPause},
      {"DifficultToUnderstand", Label::kUnintelligible},
      {"Unsure", Label::kUnsure},
      {"NoSpeech", Label::kNoSpeech},
      {"PoorAudioQuality", Label::kPoorAudioQuality},
      {"Music", Label::kMusic},
  };
  const size_t c_show = t.Column("Show", path), c_ep = t.Column("EpId", path), c_clip = t.Column("ClipId", path);
  const size_t c_start = t.Column("Start", path), c_stop = t.Column("Stop", path);
  std::vector<std::pair<size_t, Label>> present;
  for (const auto &[col, label] : kColumns)
    if (t.HasColumn(col)) present.emplace_back(t.Column(col, path), label);
  if (present.size() < kNumEventTypes) throw InputError(path + ": not a SEP-28k label file");

  std::vector<ClipAnnotation> anns;
  std::unordered_set<std::string> seen;
  for (size_t i = 0; i < t.rows.size(); ++i) {
    const auto &f = t.rows[i];
    const std::string ctx = path + ":" + std::to_string(t.line_numbers[i]);
    ClipAnnotation a;
    a.source_id = f[c_show] + "_" + f[c_ep];
    a.clip_id = ParseNumber<int64_t>(f[c_clip], ctx);
    a.start_sample = ParseNumber<int64_t>(f[c_start], ctx);
    a.stop_sample = ParseNumber<int64_t>(f[c_stop], ctx);
    a.n_annotators = 3;
    for (const auto &[col, label] : present) {
      const int c = ParseNumber<int>(f[col], ctx);
      if (c < 0 || c > 3) throw InputError(ctx + ": count out of range");
      a.counts[static_cast<size_t>(label)] = c;
    }
    if (!seen.insert(a.key()).second) throw InputError(ctx + ": duplicate clip id " + a.key());
    anns.push_back(std::move(a));
  }
  return anns;
}

// ---------------------------------------------------------------------------
// Statistics.

/// Percentage of clips (0-100) on which a majority applied each label.
inline std::array<double, kNumLabels> LabelDistribution(std::span<const ClipAnnotation> anns) {
  if (anns.empty()) throw Error("LabelDistribution: no annotations");
  std::array<double, kNumLabels> pct{};
  for (size_t l = 0; l < kNumLabels; ++l) {
    size_t hits = 0;
    for (const auto &a : anns) hits += IsMajority(a.counts[l], a.n_annotators) ? 1 : 0;
    pct[l] = 100.0 * static_cast<double>(hits) / static_cast<double>(anns.size());
  }
  return pct;
}

/// Fleiss' kappa for one label, treating each rater's decision as binary
/// (applied / not applied).
inline double FleissKappa(std::span<const ClipAnnotation> anns, Label label) {
  if (anns.size() < 2) throw Error("FleissKappa: need at least two clips");
  const int n = anns.front().n_annotators;
  if (n < 2) throw Error("FleissKappa: need at least two annotators per clip");
  const size_t li = static_cast<size_t>(label);
  double sum_agreement = 0.0, applied_total = 0.0;
  for (const auto &a : anns) {
    if (a.n_annotators != n) throw Error("FleissKappa: clips disagree on the number of annotators");
    const double yes = a.counts[li], no = n - yes;
    sum_agreement += (yes * yes + no * no - n) / (static_cast<double>(n) * (n - 1));
    applied_total += yes;
  }
  const double N = static_cast<double>(anns.size());
  const double p_bar = sum_agreement / N;
  const double p_yes = applied_total / (N * n);
  const double p_e = p_yes * p_yes + (1.0 - p_yes) * (1.0 - p_yes);
  if (p_e >= 1.0) return 1.0;
  return (p_bar - p_e) / (1.0 - p_e);
}

// ---------------------------------------------------------------------------
// Splits.

enum class Split { kTrain, kVal, kTest };

inline const char *SplitName(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split ParseSplit(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw InputError("unknown split '" + std::string(s) + "'");
}

/// Sizes are counted in clips, or in speakers when `speaker_of` is given.
struct SplitSpec {
  size_t n_train = 0, n_val = 0, n_test = 0;
  bool by_speaker = false;
};

struct SplitAssignment {
  std::string key;
  Split split = Split::kTrain;
  bool operator==(const SplitAssignment &) const = default;
};

/// Assigns splits deterministically for `seed`. Clips not drawn into any
/// split are omitted. In speaker mode every clip of a drawn speaker lands in
/// that speaker's split.
inline std::vector<SplitAssignment> AssignSplits(std::span<const std::string> keys, const SplitSpec &spec,
                                                 uint64_t seed,
                                                 const std::unordered_map<std::string, std::string> *speaker_of =
                                                     nullptr) {
  if (spec.by_speaker && !speaker_of) throw InputError("AssignSplits: speaker map required in speaker mode");
  std::vector<std::string> units;
  if (spec.by_speaker) {
    std::set<std::string> speakers;
    for (const auto &k : keys) {
      auto it = speaker_of->find(k);
      if (it == speaker_of->end()) throw InputError("AssignSplits: no speaker for clip " + k);
      speakers.insert(it->second);
    }
    units.assign(speakers.begin(), speakers.end());
  } else {
    units.assign(keys.begin(), keys.end());
    std::sort(units.begin(), units.end());
    if (std::adjacent_find(units.begin(), units.end()) != units.end())
      throw InputError("AssignSplits: duplicate clip ids");
  }
  const size_t wanted = spec.n_train + spec.n_val + spec.n_test;
  if (wanted > units.size())
    throw InputError("AssignSplits: requested " + std::to_string(wanted) + " " +
                     (spec.by_speaker ? "speakers" : "clips") + " but only " + std::to_string(units.size()) +
                     " available");
  Rng rng(seed);
  rng.Shuffle(units);
  std::unordered_map<std::string, Split> unit_split;
  for (size_t i = 0; i < wanted; ++i)
    unit_split[units[i]] = i < spec.n_train ? Split::kTrain : i < spec.n_train + spec.n_val ? Split::kVal : Split::kTest;

  std::vector<SplitAssignment> out;
  for (const auto &k : keys) {
    const std::string &unit = spec.by_speaker ? speaker_of->at(k) : k;
    auto it = unit_split.find(unit);
    if (it != unit_split.end()) out.push_back({k, it->second});
  }
  return out;
}

inline std::string FormatSplits(std::span<const SplitAssignment> splits) {
  std::string out = "clip_id,split\n";
  for (const auto &s : splits) out += s.key + "," + SplitName(s.split) + "\n";
  return out;
}

inline std::vector<SplitAssignment> ReadSplits(const std::string &path) {
  const CsvTable t = ReadCsv(path);
  const size_t c_id = t.Column("clip_id", path), c_split = t.Column("split", path);
  std::vector<SplitAssignment> out;
  for (const auto &f : t.rows) out.push_back({f[c_id], ParseSplit(f[c_split])});
  return out;
}

}  // namespace sepkit

#endif  // SEPKIT_ANNOTATIONS_HPP_
