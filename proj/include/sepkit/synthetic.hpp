// sepkit/synthetic.hpp

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

// Synthetic feature bundles with planted dysfluency patterns, for testing
// the learning machinery without an audio corpus.
//
// Background "speech" is a syllable-rate modulated log-mel spectrogram with a
// wandering pitch contour and occasional short pauses. Each event type, when
// present, is written over one or more intervals of the clip:
//
//   block          energy gap of 25-40 frames, unvoiced and deeper than a
//                  natural pause
//   prolongation   one spectrum and pitch held for 40-60 frames, with a
//                  10-band region boosted by 3 log units
//   sound rep.     4-5 bursts of 5 frames separated by 4-frame gaps
//   word rep.      one 12-frame "word" said three times with 5-frame gaps
//   interjection   flat, low, strongly voiced pitch for 30-45 frames; the
//                  spectrogram stays ordinary speech, so only the pitch
//                  stream reveals it
//
// Clip i depends only on (seed, i), so a prefix of a larger set equals the
// smaller set generated with the same seed.

#ifndef SEPKIT_SYNTHETIC_HPP_
#define SEPKIT_SYNTHETIC_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "sepkit/annotations.hpp"
#include "sepkit/features.hpp"
#include "sepkit/util.hpp"

namespace sepkit {

struct SynthConfig {
  size_t n_clips = 2000;
  size_t frames = 298;
  double event_prob = 0.12;  // per event type, independently
  int max_instances = 3;     // a present type is planted 1..max_instances times
  std::vector<StreamName> streams = {StreamName::kMfb, StreamName::kF0};
  uint64_t seed = 0;
  std::string source_id = "synth";
};

struct SynthClip {
  ClipAnnotation annotation;
  FeatureBundle features;
};

namespace detail {

struct SynthEvent {
  size_t type;
  size_t start, length;
};

class SynthClipBuilder {
 public:
  SynthClipBuilder(size_t frames, Rng &rng) : T_(frames), rng_(rng) {
    base_level_ = rng_.Uniform(-1.0, 1.0);
    tilt_ = rng_.Uniform(0.04, 0.1);
    f0_mean_ = rng_.Uniform(90.0, 220.0);
    syl_period_ = rng_.Uniform(14.0, 24.0);
    syl_phase_ = rng_.Uniform(0.0, 2.0 * std::numbers::pi);
    pitch_period_ = rng_.Uniform(30.0, 60.0);
    pitch_phase_ = rng_.Uniform(0.0, 2.0 * std::numbers::pi);
    mfb_.assign(T_ * kMel, 0.0);
    f0_.assign(T_, 0.0);
    voicing_.assign(T_, 0.0);
    double shape_phase = rng_.Uniform(0.0, 2.0 * std::numbers::pi);
    for (size_t t = 0; t < T_; ++t) {
      shape_phase += rng_.Normal() * 0.15;
      SpeechFrame(t, shape_phase);
    }
    // Natural pauses of 10-16 frames: longer than the gaps inside
    // repetitions, shorter than a block.
    const int n_pauses = static_cast<int>(rng_.Below(3));
    for (int p = 0; p < n_pauses; ++p) {
      const size_t len = 10 + rng_.Below(7);
      const size_t s = rng_.Below(T_ - len);
      for (size_t t = s; t < s + len; ++t) Silence(t);
    }
  }

  void Plant(const SynthEvent &e) {
    const size_t s = e.start, L = e.length;
    switch (e.type) {
      case 0:  // block
        for (size_t t = s; t < s + L; ++t) Silence(t, -9.0);
        break;
      case 1: {  // prolongation
        std::array<double, kMel> held;
        const size_t band = rng_.Below(kMel - 10);
        for (size_t d = 0; d < kMel; ++d)
          held[d] = mfb_[s * kMel + d] + (d >= band && d < band + 10 ? 3.0 : 0.0);
        const double f = f0_mean_ * rng_.Uniform(0.9, 1.1);
        for (size_t t = s; t < s + L; ++t) {
          for (size_t d = 0; d < kMel; ++d) mfb_[t * kMel + d] = held[d] + 0.1 * rng_.Normal();
          f0_[t] = f + 0.3 * rng_.Normal();
          voicing_[t] = 0.9 + 0.05 * rng_.Uniform();
        }
        break;
      }
      case 2: {  // sound repetition
        std::array<double, kMel> burst;
        for (size_t d = 0; d < kMel; ++d) burst[d] = Level(d) + 2.5 + 0.5 * rng_.Normal();
        const double f = f0_mean_ * rng_.Uniform(0.9, 1.2);
        for (size_t t = s, k = 0; t < s + L; ++t, ++k) {
          if (k % 9 < 5) {
            for (size_t d = 0; d < kMel; ++d) mfb_[t * kMel + d] = burst[d] + 0.2 * rng_.Normal();
            f0_[t] = f * (1.0 + 0.02 * rng_.Normal());
            voicing_[t] = 0.8 + 0.1 * rng_.Uniform();
          } else {
            Silence(t);
          }
        }
        break;
      }
      case 3: {  // word repetition
        std::vector<double> word(12 * kMel), wf0(12);
        for (size_t k = 0; k < 12; ++k) {
          for (size_t d = 0; d < kMel; ++d) word[k * kMel + d] = mfb_[(s + k) * kMel + d];
          wf0[k] = f0_mean_ * (1.0 + 0.1 * std::sin(static_cast<double>(k) / 2.0));
        }
        for (size_t t = s, k = 0; t < s + L; ++t, ++k) {
          const size_t w = k % 17;
          if (w < 12) {
            for (size_t d = 0; d < kMel; ++d) mfb_[t * kMel + d] = word[w * kMel + d] + 0.1 * rng_.Normal();
            f0_[t] = wf0[w];
            voicing_[t] = 0.85;
          } else {
            Silence(t);
          }
        }
        break;
      }
      case 4: {  // interjection: pitch stream only
        const double f = f0_mean_ * 0.65;
        for (size_t t = s; t < s + L; ++t) {
          f0_[t] = f + 0.2 * rng_.Normal();
          voicing_[t] = 0.97 + 0.02 * rng_.Uniform();
        }
        break;
      }
      default:
        throw Error("SynthClipBuilder: unknown event type");
    }
  }

  FeatureStream Mfb() const {
    FeatureStream s = FeatureStream::Zeros(StreamName::kMfb, T_);
    for (size_t i = 0; i < mfb_.size(); ++i) s.data[i] = static_cast<float>(mfb_[i]);
    return s;
  }

  FeatureStream F0() const {
    FeatureStream s = FeatureStream::Zeros(StreamName::kF0, T_);
    for (size_t t = 0; t < T_; ++t) {
      s.at(t, 0) = static_cast<float>(f0_[t]);
      s.at(t, 1) = t == 0 ? 0.0f : static_cast<float>(f0_[t] - f0_[t - 1]);
      s.at(t, 2) = static_cast<float>(voicing_[t]);
    }
    return s;
  }

  // Stand-in for an externally computed stream: smooth noise unrelated to
  // the labels.
  FeatureStream Noise(StreamName name) {
    FeatureStream s = FeatureStream::Zeros(name, T_);
    std::vector<double> state(s.dims, 0.0);
    for (size_t t = 0; t < T_; ++t)
      for (size_t d = 0; d < s.dims; ++d) {
        state[d] = 0.9 * state[d] + 0.3 * rng_.Normal();
        s.at(t, d) = static_cast<float>(state[d]);
      }
    return s;
  }

 private:
  static constexpr size_t kMel = 40;

  double Level(size_t d) const { return base_level_ - tilt_ * static_cast<double>(d); }

  void SpeechFrame(size_t t, double shape_phase) {
    const double tt = static_cast<double>(t);
    const double env = std::pow(std::sin(std::numbers::pi * tt / syl_period_ + syl_phase_), 2.0);
    for (size_t d = 0; d < kMel; ++d) {
      const double shape = 1.0 + 0.6 * std::sin(2.0 * std::numbers::pi * static_cast<double>(d) / 10.0 + shape_phase);
      mfb_[t * kMel + d] = Level(d) + 2.0 * env * shape + 0.4 * rng_.Normal();
    }
    const double f = f0_mean_ * (1.0 + 0.15 * std::sin(2.0 * std::numbers::pi * tt / pitch_period_ + pitch_phase_));
    const bool voiced = env > 0.15;
    f0_[t] = voiced ? f * (1.0 + 0.04 * rng_.Normal()) : 0.0;
    voicing_[t] = voiced ? rng_.Uniform(0.55, 1.0) : rng_.Uniform(0.0, 0.4);
  }

  void Silence(size_t t, double depth = -6.0) {
    for (size_t d = 0; d < kMel; ++d) mfb_[t * kMel + d] = Level(d) + depth + 0.3 * rng_.Normal();
    f0_[t] = 0.0;
    voicing_[t] = rng_.Uniform(0.0, 0.1);
  }

  size_t T_;
  Rng &rng_;
  double base_level_, tilt_, f0_mean_, syl_period_, syl_phase_, pitch_period_, pitch_phase_;
  std::vector<double> mfb_, f0_, voicing_;
};

inline size_t DrawEventLength(size_t type, Rng &rng) {
  switch (type) {
    case 0: return 25 + rng.Below(16);
    case 1: return 40 + rng.Below(21);
    case 2: return 9 * (4 + rng.Below(2)) - 4;
    case 3: return 3 * 17 - 5;
    default: return 30 + rng.Below(16);
  }
}

}  // namespace detail

/// Generates one clip. Exposed so callers can stream clips without holding
/// a whole dataset.
inline SynthClip GenerateSynthClip(const SynthConfig &cfg, size_t index) {
  Rng rng(cfg.seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<uint64_t>(index) + 1)));
  if (cfg.max_instances < 1) throw Error("GenerateSynthClip: max_instances must be positive");
  std::vector<detail::SynthEvent> events;
  std::array<bool, kNumEventTypes> present{};
  for (size_t type = 0; type < kNumEventTypes; ++type) {
    present[type] = rng.Bernoulli(cfg.event_prob);
    if (!present[type]) continue;
    const size_t n = 1 + rng.Below(static_cast<uint64_t>(cfg.max_instances));
    for (size_t k = 0; k < n; ++k) events.push_back({type, 0, detail::DrawEventLength(type, rng)});
  }
  rng.Shuffle(events);

  // Place events in random order with random gaps. Extra instances that do
  // not fit are dropped; the first instance of each type always fits.
  size_t used = 0;
  {
    std::vector<bool> keep(events.size(), false);
    std::array<bool, kNumEventTypes> kept{};
    for (int pass = 0; pass < 2; ++pass)
      for (size_t i = 0; i < events.size(); ++i) {
        const auto &e = events[i];
        if (keep[i] || (pass == 0 && kept[e.type]) || used + e.length > cfg.frames) continue;
        keep[i] = kept[e.type] = true;
        used += e.length;
      }
    if (kept != present) throw Error("GenerateSynthClip: clip too short for the planted events");
    std::vector<detail::SynthEvent> fitted;
    for (size_t i = 0; i < events.size(); ++i)
      if (keep[i]) fitted.push_back(events[i]);
    events = std::move(fitted);
  }
  std::vector<size_t> cuts(events.size());
  for (auto &c : cuts) c = rng.Below(cfg.frames - used + 1);
  std::sort(cuts.begin(), cuts.end());
  size_t offset = 0;
  for (size_t k = 0; k < events.size(); ++k) {
    events[k].start = cuts[k] + offset;
    offset += events[k].length;
  }

  detail::SynthClipBuilder builder(cfg.frames, rng);
  for (const auto &e : events) builder.Plant(e);

  SynthClip clip;
  ClipAnnotation &a = clip.annotation;
  a.source_id = cfg.source_id;
  a.clip_id = static_cast<int64_t>(index);
  a.start_sample = static_cast<int64_t>(index) * 48000;
  a.stop_sample = a.start_sample + 48000;
  a.n_annotators = 3;
  // Soft annotator agreement: present events get 2 or 3 votes, absent ones
  // 0 or 1, so the majority rule recovers exactly the planted set.
  for (size_t type = 0; type < kNumEventTypes; ++type)
    a.counts[type] = present[type] ? 2 + static_cast<int>(rng.Below(2)) : static_cast<int>(rng.Below(2));
  a.counts[static_cast<size_t>(Label::kNoDysfluency)] = events.empty() ? 3 : 0;

  clip.features.clip_ref = a.key();
  for (StreamName name : kAllStreams) {
    if (std::find(cfg.streams.begin(), cfg.streams.end(), name) == cfg.streams.end()) continue;
    switch (name) {
      case StreamName::kMfb: clip.features.streams.push_back(builder.Mfb()); break;
      case StreamName::kF0: clip.features.streams.push_back(builder.F0()); break;
      default: clip.features.streams.push_back(builder.Noise(name)); break;
    }
  }
  return clip;
}

inline std::vector<SynthClip> GenerateSynthetic(const SynthConfig &cfg) {
  std::vector<SynthClip> out;
  out.reserve(cfg.n_clips);
  for (size_t i = 0; i < cfg.n_clips; ++i) out.push_back(GenerateSynthClip(cfg, i));
  return out;
}

}  // namespace sepkit

#endif  // SEPKIT_SYNTHETIC_HPP_
