// sepkit/metrics.hpp

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

// Detection metrics: precision/recall/F1, weighted (balanced) accuracy and
// equal error rate, per event type and for the "Any" label.

#ifndef SEPKIT_METRICS_HPP_
#define SEPKIT_METRICS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sepkit/annotations.hpp"
#include "sepkit/util.hpp"

namespace sepkit {

constexpr size_t kNumReportLabels = kNumEventTypes + 1;  // five types + Any
constexpr size_t kAnyIndex = kNumEventTypes;

constexpr std::array<const char *, kNumReportLabels> kScoreColumns = {"block",   "prolongation", "soundrep",
                                                                      "wordrep", "interjection", "any"};
constexpr std::array<const char *, kNumReportLabels> kShortLabels = {"Bl", "Pro", "Snd", "Wd", "Int", "Any"};

inline double Precision(int64_t tp, int64_t fp) { return tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0; }
inline double Recall(int64_t tp, int64_t fn) { return tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0; }

/// Harmonic mean of precision and recall. Empty inputs (no positives, no
/// predictions) score 1; otherwise tp == 0 scores 0.
inline double F1(int64_t tp, int64_t fp, int64_t fn) {
  if (tp < 0 || fp < 0 || fn < 0) throw Error("F1: negative count");
  if (tp == 0) return fp == 0 && fn == 0 ? 1.0 : 0.0;
  return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
}

/// Balanced accuracy, (TPR + TNR) / 2.
inline double WeightedAccuracy(int64_t tp, int64_t fp, int64_t tn, int64_t fn) {
  if (tp + fn == 0 || tn + fp == 0) throw Error("WeightedAccuracy: both classes must be present");
  return 0.5 * (static_cast<double>(tp) / (tp + fn) + static_cast<double>(tn) / (tn + fp));
}

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Equal error rate. With a decision "positive iff score >= t", the false
/// acceptance rate FAR(t) is the fraction of negatives >= t and the false
/// rejection rate FRR(t) the fraction of positives < t. Thresholds are swept
/// over the distinct scores plus one point above the maximum; the crossing
/// is linearly interpolated between the two thresholds where FAR - FRR
/// changes sign, or taken exactly at the lowest threshold where they meet.
inline EerResult Eer(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) throw Error("Eer: need at least one positive and one negative");
  std::vector<double> pos(positives.begin(), positives.end()), neg(negatives.begin(), negatives.end());
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> thresholds;
  thresholds.reserve(pos.size() + neg.size() + 1);
  std::merge(pos.begin(), pos.end(), neg.begin(), neg.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::nextafter(thresholds.back(), std::numeric_limits<double>::infinity()));

  const double np = static_cast<double>(pos.size()), nn = static_cast<double>(neg.size());
  double prev_far = 0, prev_frr = 0, prev_t = 0;
  for (size_t i = 0; i < thresholds.size(); ++i) {
    const double t = thresholds[i];
    const double far = static_cast<double>(neg.end() - std::lower_bound(neg.begin(), neg.end(), t)) / nn;
    const double frr = static_cast<double>(std::lower_bound(pos.begin(), pos.end(), t) - pos.begin()) / np;
    const double diff = far - frr;
    if (diff == 0.0) return {far, t};
    if (diff < 0.0) {
      // The first threshold always has FRR = 0 and FAR = 1, so i > 0 here.
      const double prev_diff = prev_far - prev_frr;
      const double alpha = prev_diff / (prev_diff - diff);
      return {prev_far + alpha * (far - prev_far), prev_t + alpha * (t - prev_t)};
    }
    prev_far = far;
    prev_frr = frr;
    prev_t = t;
  }
  return {prev_far, prev_t};  // unreachable: the sentinel has FAR 0, FRR 1
}

// ---------------------------------------------------------------------------

struct ScoredClip {
  std::string clip_id;
  std::array<double, kNumReportLabels> score{};
  std::array<int, kNumReportLabels> truth{};
};

struct LabelMetrics {
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;
  double wa = std::numeric_limits<double>::quiet_NaN();
  double eer = std::numeric_limits<double>::quiet_NaN();
  double eer_threshold = std::numeric_limits<double>::quiet_NaN();
  bool has_eer = false;  // false when one class is absent
  double threshold = 0.5;
};

struct EvalReport {
  size_t clips = 0;
  std::array<LabelMetrics, kNumReportLabels> labels;

  const LabelMetrics &any() const { return labels[kAnyIndex]; }
};

inline LabelMetrics EvaluateLabel(std::span<const double> scores, std::span<const int> truth, double threshold) {
  LabelMetrics m;
  m.threshold = threshold;
  std::vector<double> pos, neg;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (truth[i]) {
      pos.push_back(scores[i]);
      predicted ? ++m.tp : ++m.fn;
    } else {
      neg.push_back(scores[i]);
      predicted ? ++m.fp : ++m.tn;
    }
  }
  m.precision = Precision(m.tp, m.fp);
  m.recall = Recall(m.tp, m.fn);
  m.f1 = F1(m.tp, m.fp, m.fn);
  if (!pos.empty() && !neg.empty()) {
    m.wa = WeightedAccuracy(m.tp, m.fp, m.tn, m.fn);
    const EerResult e = Eer(pos, neg);
    m.eer = e.eer;
    m.eer_threshold = e.threshold;
    m.has_eer = true;
  }
  return m;
}

/// Hard decisions at `threshold` for P/R/F1/WA; EER from the raw scores.
inline EvalReport Evaluate(std::span<const ScoredClip> scored, double threshold = 0.5) {
  if (scored.empty()) throw Error("Evaluate: no clips");
  EvalReport r;
  r.clips = scored.size();
  std::vector<double> s(scored.size());
  std::vector<int> y(scored.size());
  for (size_t l = 0; l < kNumReportLabels; ++l) {
    for (size_t i = 0; i < scored.size(); ++i) {
      if (!std::isfinite(scored[i].score[l]) || scored[i].score[l] < 0.0 || scored[i].score[l] > 1.0)
        throw InputError("Evaluate: score out of [0, 1] for clip " + scored[i].clip_id);
      s[i] = scored[i].score[l];
      y[i] = scored[i].truth[l] ? 1 : 0;
    }
    r.labels[l] = EvaluateLabel(s, y, threshold);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Scores file: clip_id,block,prolongation,soundrep,wordrep,interjection,any

struct ClipScores {
  std::string clip_id;
  std::array<double, kNumReportLabels> score{};
};

inline std::string FormatScores(std::span<const ClipScores> rows) {
  std::string out = "clip_id";
  for (const char *c : kScoreColumns) out += std::string(",") + c;
  out += "\n";
  for (const auto &r : rows) {
    out += r.clip_id;
    for (double v : r.score) out += "," + FormatDouble(v);
    out += "\n";
  }
  return out;
}

inline std::vector<ClipScores> ReadScores(const std::string &path) {
  const CsvTable t = ReadCsv(path);
  const size_t c_id = t.Column("clip_id", path);
  std::array<size_t, kNumReportLabels> cols{};
  for (size_t l = 0; l < kNumReportLabels; ++l) cols[l] = t.Column(kScoreColumns[l], path);
  std::vector<ClipScores> rows;
  for (size_t i = 0; i < t.rows.size(); ++i) {
    const std::string ctx = path + ":" + std::to_string(t.line_numbers[i]);
    ClipScores r;
    r.clip_id = t.rows[i][c_id];
    for (size_t l = 0; l < kNumReportLabels; ++l) {
      r.score[l] = ParseNumber<double>(t.rows[i][cols[l]], ctx);
      if (!(r.score[l] >= 0.0 && r.score[l] <= 1.0)) throw InputError(ctx + ": score outside [0, 1]");
    }
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Comparison tables mirroring the per-configuration result tables.

enum class TableKind {
  kSummary,  // WA, F1, EER of the Any label
  kPerType,  // F1 per event type plus Any
};

struct ReportRow {
  std::string config;
  EvalReport report;
};

struct TableColumn {
  std::string name;
  double (*get)(const EvalReport &);
};

inline std::vector<TableColumn> TableColumns(TableKind kind) {
  if (kind == TableKind::kSummary)
    return {{"WA", [](const EvalReport &r) { return r.any().wa; }},
            {"F1", [](const EvalReport &r) { return r.any().f1; }},
            {"EER", [](const EvalReport &r) { return r.any().eer; }}};
  return {{"Bl", [](const EvalReport &r) { return r.labels[0].f1; }},
          {"Pro", [](const EvalReport &r) { return r.labels[1].f1; }},
          {"Snd", [](const EvalReport &r) { return r.labels[2].f1; }},
          {"Wd", [](const EvalReport &r) { return r.labels[3].f1; }},
          {"Int", [](const EvalReport &r) { return r.labels[4].f1; }},
          {"Any", [](const EvalReport &r) { return r.labels[5].f1; }}};
}

/// Sort key: empty keeps input order, "config" sorts by name, otherwise a
/// column name sorts descending by that value.
inline std::vector<ReportRow> SortRows(std::vector<ReportRow> rows, TableKind kind, const std::string &key) {
  if (key.empty()) return rows;
  if (key == "config") {
    std::stable_sort(rows.begin(), rows.end(), [](const auto &a, const auto &b) { return a.config < b.config; });
    return rows;
  }
  for (const auto &col : TableColumns(kind)) {
    if (col.name != key) continue;
    std::stable_sort(rows.begin(), rows.end(),
                     [&](const auto &a, const auto &b) { return col.get(a.report) > col.get(b.report); });
    return rows;
  }
  throw InputError("unknown sort key '" + key + "'");
}

inline std::string FormatTableCsv(std::span<const ReportRow> rows, TableKind kind) {
  const auto cols = TableColumns(kind);
  std::string out = "config";
  for (const auto &c : cols) out += "," + c.name;
  out += "\n";
  for (const auto &r : rows) {
    out += r.config;
    for (const auto &c : cols) out += "," + FormatDouble(c.get(r.report));
    out += "\n";
  }
  return out;
}

/// Aligned text; values are shown as percentages with one decimal.
inline std::string FormatTableText(std::span<const ReportRow> rows, TableKind kind) {
  if (rows.empty()) throw Error("FormatTableText: no rows");
  const auto cols = TableColumns(kind);
  size_t name_w = 6;
  for (const auto &r : rows) name_w = std::max(name_w, r.config.size());
  std::ostringstream os;
  auto pad = [](const std::string &s, size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  os << pad("Config", name_w);
  for (const auto &c : cols) os << " | " << std::string(6 - std::min<size_t>(6, c.name.size()), ' ') << c.name;
  os << "\n" << std::string(name_w, '-');
  for (size_t i = 0; i < cols.size(); ++i) os << "-+-------";
  os << "\n";
  for (const auto &r : rows) {
    os << pad(r.config, name_w);
    for (const auto &c : cols) {
      const double v = c.get(r.report);
      std::string cell = std::isnan(v) ? "n/a" : FormatFixed(100.0 * v, 1);
      os << " | " << std::string(6 - std::min<size_t>(6, cell.size()), ' ') << cell;
    }
    os << "\n";
  }
  return os.str();
}

/// Full per-label report as CSV: label,tp,fp,tn,fn,precision,recall,f1,wa,eer,eer_threshold,threshold
inline std::string FormatReportCsv(const EvalReport &r) {
  std::string out = "label,tp,fp,tn,fn,precision,recall,f1,wa,eer,eer_threshold,threshold\n";
  for (size_t l = 0; l < kNumReportLabels; ++l) {
    const auto &m = r.labels[l];
    out += std::string(kScoreColumns[l]) + "," + std::to_string(m.tp) + "," + std::to_string(m.fp) + "," +
           std::to_string(m.tn) + "," + std::to_string(m.fn) + "," + FormatDouble(m.precision) + "," +
           FormatDouble(m.recall) + "," + FormatDouble(m.f1) + "," + (std::isnan(m.wa) ? "nan" : FormatDouble(m.wa)) +
           "," + (m.has_eer ? FormatDouble(m.eer) : "nan") + "," +
           (m.has_eer ? FormatDouble(m.eer_threshold) : "nan") + "," + FormatDouble(m.threshold) + "\n";
  }
  return out;
}

}  // namespace sepkit

#endif  // SEPKIT_METRICS_HPP_
