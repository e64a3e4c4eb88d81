// sepkit/training.hpp

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

// Mini-batch training with Adam and early stopping on validation "Any" F1.

#ifndef SEPKIT_TRAINING_HPP_
#define SEPKIT_TRAINING_HPP_

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sepkit/annotations.hpp"
#include "sepkit/features.hpp"
#include "sepkit/losses.hpp"
#include "sepkit/metrics.hpp"
#include "sepkit/nn/adam.hpp"
#include "sepkit/nn/checkpoint.hpp"
#include "sepkit/nn/model.hpp"
#include "sepkit/util.hpp"

namespace sepkit {

struct Example {
  std::string key;
  FeatureBundle features;
  ClipTargets targets;
};

// ---------------------------------------------------------------------------
// Per-stream, per-dimension z-normalization.

class Normalizer {
 public:
  struct Stats {
    StreamName name;
    std::vector<double> mean, stddev;
  };

  Normalizer() = default;

  /// Statistics over every frame of the given examples.
  static Normalizer Fit(std::span<const Example *const> examples, std::span<const StreamName> streams) {
    if (examples.empty()) throw Error("Normalizer: no training examples");
    Normalizer n;
    for (StreamName name : streams) {
      const size_t dims = StreamDims(name);
      std::vector<double> sum(dims, 0.0), sq(dims, 0.0);
      double count = 0;
      for (const Example *ex : examples) {
        const FeatureStream *s = ex->features.find(name);
        if (!s) throw InputError("clip " + ex->key + " lacks stream " + StreamLabel(name));
        for (size_t t = 0; t < s->frames; ++t)
          for (size_t d = 0; d < dims; ++d) {
            const double v = s->at(t, d);
            sum[d] += v;
            sq[d] += v * v;
          }
        count += static_cast<double>(s->frames);
      }
      Stats st{name, std::vector<double>(dims), std::vector<double>(dims)};
      for (size_t d = 0; d < dims; ++d) {
        st.mean[d] = sum[d] / count;
        const double var = std::max(0.0, sq[d] / count - st.mean[d] * st.mean[d]);
        // Constant dimensions are centered but not scaled.
        st.stddev[d] = var > 1e-12 ? std::sqrt(var) : 1.0;
      }
      n.stats_.push_back(std::move(st));
    }
    return n;
  }

  const Stats &stats(StreamName name) const {
    for (const auto &s : stats_)
      if (s.name == name) return s;
    throw Error("Normalizer: no statistics for stream " + StreamLabel(name));
  }
  const std::vector<Stats> &all() const { return stats_; }

  std::vector<nn::NamedTensor> ToTensors() const {
    std::vector<nn::NamedTensor> out;
    for (const auto &s : stats_) {
      const int64_t d = static_cast<int64_t>(s.mean.size());
      out.push_back({"norm." + StreamLabel(s.name) + ".mean", {d}, {s.mean.begin(), s.mean.end()}});
      out.push_back({"norm." + StreamLabel(s.name) + ".std", {d}, {s.stddev.begin(), s.stddev.end()}});
    }
    return out;
  }

  static Normalizer FromCheckpoint(const nn::Checkpoint &ck) {
    Normalizer n;
    for (StreamName name : ck.model.config().streams) {
      const auto *m = ck.find_extra("norm." + StreamLabel(name) + ".mean");
      const auto *s = ck.find_extra("norm." + StreamLabel(name) + ".std");
      if (!m || !s) throw InputError("checkpoint lacks normalization statistics for " + StreamLabel(name));
      n.stats_.push_back({name, {m->data.begin(), m->data.end()}, {s->data.begin(), s->data.end()}});
    }
    return n;
  }

 private:
  std::vector<Stats> stats_;
};

/// Packs examples into the time-major batch layout, normalized and truncated
/// to the shortest clip in the batch.
template <class S>
nn::BatchInput<S> MakeBatch(std::span<const Example *const> batch, const Normalizer &norm,
                            std::span<const StreamName> streams) {
  if (batch.empty()) throw Error("MakeBatch: empty batch");
  nn::BatchInput<S> in;
  size_t frames = batch.front()->features.frames();
  for (const Example *ex : batch) frames = std::min(frames, ex->features.frames());
  if (frames == 0) throw Error("MakeBatch: clip without frames");
  const int B = static_cast<int>(batch.size());
  in.shape = {static_cast<int>(frames), B};
  for (StreamName name : streams) {
    const auto &st = norm.stats(name);
    const size_t dims = StreamDims(name);
    nn::Mat<S> x(in.shape.rows(), static_cast<Eigen::Index>(dims));
    for (int b = 0; b < B; ++b) {
      const FeatureStream *s = batch[b]->features.find(name);
      if (!s) throw InputError("architecture/stream mismatch: clip " + batch[b]->key + " lacks stream " +
                               StreamLabel(name));
      for (size_t t = 0; t < frames; ++t)
        for (size_t d = 0; d < dims; ++d)
          x(static_cast<Eigen::Index>(t) * B + b, static_cast<Eigen::Index>(d)) =
              static_cast<S>((s->at(t, d) - st.mean[d]) / st.stddev[d]);
    }
    in.streams.push_back(std::move(x));
  }
  return in;
}

inline BatchTargets MakeTargets(std::span<const Example *const> batch) {
  BatchTargets t;
  for (const Example *ex : batch) t.push_back(ex->targets);
  return t;
}

/// Eval-mode scores. Clips are grouped by frame count so no clip is
/// truncated to fit its batch; results come back in input order.
template <class S>
std::vector<ScoredClip> Predict(nn::Model<S> &model, const Normalizer &norm, std::span<const Example *const> examples,
                                size_t batch_size = 256) {
  std::map<size_t, std::vector<size_t>> by_frames;
  for (size_t i = 0; i < examples.size(); ++i) by_frames[examples[i]->features.frames()].push_back(i);
  std::vector<ScoredClip> out(examples.size());
  const auto &streams = model.config().streams;
  for (const auto &[frames, idx] : by_frames) {
    for (size_t start = 0; start < idx.size(); start += batch_size) {
      const size_t end = std::min(idx.size(), start + batch_size);
      std::vector<const Example *> batch;
      for (size_t j = start; j < end; ++j) batch.push_back(examples[idx[j]]);
      const auto outputs = model.Forward(MakeBatch<S>(batch, norm, streams), nn::Mode::kEval);
      for (size_t j = start; j < end; ++j) {
        const Example &ex = *examples[idx[j]];
        ScoredClip &sc = out[idx[j]];
        sc.clip_id = ex.key;
        const Eigen::Index b = static_cast<Eigen::Index>(j - start);
        for (size_t l = 0; l < kNumEventTypes; ++l) {
          sc.score[l] = static_cast<double>(outputs.types(b, static_cast<Eigen::Index>(l)));
          sc.truth[l] = ex.targets.hard[l];
        }
        sc.score[kAnyIndex] = static_cast<double>(outputs.any(b, 0));
        sc.truth[kAnyIndex] = ex.targets.any;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct TrainConfig {
  nn::ArchConfig arch;
  LossConfig loss;
  nn::AdamConfig adam;
  int batch_size = 256;
  int max_epochs = 100;
  int patience = 5;  // 0 disables early stopping
  double threshold = 0.5;
  bool auto_class_weights = true;  // inverse frequency of Any on the train split
  uint64_t seed = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0, any_term = 0, type_term = 0;
  double val_f1_any = 0, val_eer_any = 0;
  double seconds = 0;
};

inline nlohmann::ordered_json EpochLogJson(const EpochLog &e) {
  nlohmann::ordered_json j;
  j["epoch"] = e.epoch;
  j["train_loss"] = e.train_loss;
  j["terms"] = {{"any", e.any_term}, {"types", e.type_term}};
  j["val_f1_any"] = e.val_f1_any;
  if (std::isnan(e.val_eer_any)) j["val_eer_any"] = nullptr;
  else j["val_eer_any"] = e.val_eer_any;
  j["seconds"] = e.seconds;
  return j;
}

template <class S = float>
struct TrainResult {
  nn::Model<S> best;
  nn::Model<S> last;
  Normalizer norm;
  LossConfig loss;  // with resolved class weights
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_score = -1.0;
};

/// Any-branch weights w = N / (2 * count) per class.
inline std::pair<double, double> InverseFrequencyWeights(std::span<const Example *const> train) {
  double pos = 0;
  for (const Example *ex : train) pos += ex->targets.any;
  const double n = static_cast<double>(train.size());
  if (pos == 0 || pos == n) return {1.0, 1.0};
  return {n / (2.0 * pos), n / (2.0 * (n - pos))};
}

/// Trains from scratch; returns the checkpoint with the best validation "Any"
/// F1 (earliest epoch on ties). `on_epoch` is called after every epoch.
template <class S = float>
TrainResult<S> Train(std::span<const Example *const> train, std::span<const Example *const> val,
                         const TrainConfig &cfg, const std::function<void(const EpochLog &)> &on_epoch = {}) {
  if (train.empty() || val.empty()) throw InputError("Train: train and validation splits must be non-empty");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.patience < 0) throw Error("Train: invalid configuration");
  TrainResult<S> result;
  result.norm = Normalizer::Fit(train, cfg.arch.streams);
  result.loss = cfg.loss;
  if (cfg.auto_class_weights) std::tie(result.loss.w_pos, result.loss.w_neg) = InverseFrequencyWeights(train);

  Rng rng(cfg.seed);
  nn::Model<S> model(cfg.arch, rng.NextU64());
  nn::Adam<S> adam(model, cfg.adam);
  result.best = model;
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  int since_best = 0;
  nn::ForwardTrace<S> trace;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.Shuffle(order);
    EpochLog log;
    log.epoch = epoch;
    double seen = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<const Example *> batch;
      for (size_t j = start; j < end; ++j) batch.push_back(train[order[j]]);
      // A trailing single-clip batch cannot feed batchnorm or the CCC term.
      if (batch.size() < 2 && order.size() >= 2) continue;
      const auto input = MakeBatch<S>(batch, result.norm, cfg.arch.streams);
      const BatchTargets targets = MakeTargets(batch);
      model.ZeroGrad();
      const auto out = model.Forward(input, nn::Mode::kTrain, &trace);
      const auto loss = TotalLoss<S>(out.any, out.types, targets, result.loss);
      if (!std::isfinite(loss.total)) throw Error("Train: non-finite loss at epoch " + std::to_string(epoch));
      model.Backward(trace, loss.d_any, loss.d_types, /*input_grads=*/false);
      adam.Step(model);
      const double w = static_cast<double>(batch.size());
      log.train_loss += w * loss.total;
      log.any_term += w * loss.any_term;
      log.type_term += w * loss.type_term;
      seen += w;
    }
    if (seen > 0) {
      log.train_loss /= seen;
      log.any_term /= seen;
      log.type_term /= seen;
    }
    const auto scored = Predict(model, result.norm, val);
    const EvalReport report = Evaluate(scored, cfg.threshold);
    log.val_f1_any = report.any().f1;
    log.val_eer_any = report.any().eer;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (log.val_f1_any > result.best_score) {
      result.best_score = log.val_f1_any;
      result.best_epoch = epoch;
      result.best = model;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  result.last = std::move(model);
  return result;
}

/// Metadata stamped into checkpoints.
inline std::string TrainMetadata(const TrainConfig &cfg, const LossConfig &resolved, int best_epoch) {
  std::ostringstream os;
  os << "arch=" << nn::ArchName(cfg.arch.arch) << "\n";
  os << "streams=";
  for (size_t i = 0; i < cfg.arch.streams.size(); ++i) os << (i ? "," : "") << StreamLabel(cfg.arch.streams[i]);
  os << "\nloss=" << LossModeName(resolved.mode) << "\nfocal_gamma=" << FormatDouble(resolved.focal_gamma)
     << "\nw_pos=" << FormatDouble(resolved.w_pos) << "\nw_neg=" << FormatDouble(resolved.w_neg)
     << "\ntask_mix=" << FormatDouble(resolved.task_mix) << "\nstl_label=" << resolved.stl_label
     << "\nlr=" << FormatDouble(cfg.adam.lr) << "\nbatch_size=" << cfg.batch_size
     << "\nmax_epochs=" << cfg.max_epochs << "\npatience=" << cfg.patience << "\nseed=" << cfg.seed
     << "\nbest_epoch=" << best_epoch << "\n";
  return os.str();
}

}  // namespace sepkit

#endif  // SEPKIT_TRAINING_HPP_
