// sepkit/audio_ingest.hpp

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

// Audio ingestion: WAV decoding to canonical 16 kHz mono, frame-energy voice
// activity detection, and extraction of fixed-length clips around
// speech/pause boundaries.

#ifndef SEPKIT_AUDIO_INGEST_HPP_
#define SEPKIT_AUDIO_INGEST_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sepkit/util.hpp"
#include "sepkit/wav.hpp"

namespace sepkit {

constexpr int32_t kCanonicalRate = 16000;

struct AudioBuffer {
  std::vector<float> samples;
  int32_t sample_rate = kCanonicalRate;
  int32_t channel_count = 1;

  size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

enum class SegmentKind { kSpeech, kPause };

struct SpeechSegment {
  int64_t start_sample = 0;
  int64_t end_sample = 0;  // exclusive
  SegmentKind kind = SegmentKind::kPause;

  int64_t length() const { return end_sample - start_sample; }
  bool operator==(const SpeechSegment &) const = default;
};

struct AudioClip {
  AudioBuffer buffer;
  std::string source_id;
  int64_t clip_id = 0;
  int64_t start_sample = 0;

  int64_t stop_sample() const { return start_sample + static_cast<int64_t>(buffer.size()); }
  /// File stem and global key, `<source_id>_<clip_id>`.
  std::string key() const { return source_id + "_" + std::to_string(clip_id); }
};

/// Mixes to mono, resamples to 16 kHz, and clips to [-1, 1].
inline AudioBuffer ToCanonical(const WavData &wav) {
  const size_t frames = wav.frames();
  std::vector<float> mono(frames);
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int32_t c = 0; c < wav.channels; ++c) acc += wav.interleaved[i * wav.channels + c];
    mono[i] = static_cast<float>(std::clamp(acc / wav.channels, -1.0, 1.0));
  }
  AudioBuffer buf;
  if (wav.sample_rate == kCanonicalRate) {
    buf.samples = std::move(mono);
  } else {
    buf.samples = SincResampler(wav.sample_rate, kCanonicalRate).Resample(mono);
  }
  if (buf.samples.empty()) throw InputError("zero-length audio after resampling");
  return buf;
}

inline AudioBuffer LoadWav(const std::string &path) { return ToCanonical(ReadWav(path)); }

// ---------------------------------------------------------------------------
// Voice activity detection.

struct VadConfig {
  int frame_samples = 160;       // 10 ms at 16 kHz
  double enter_dbfs = -35.0;     // pause -> speech when smoothed level rises above
  double exit_dbfs = -40.0;      // speech -> pause when it falls below
  int smooth_frames = 3;         // centered moving average of frame RMS
  double min_duration = 0.200;   // seconds; shorter runs are absorbed by neighbors
};

/// Per-frame RMS over non-overlapping frames; the final partial frame uses the
/// samples it has.
inline std::vector<double> FrameRms(std::span<const float> samples, int frame_samples) {
  const size_t n = samples.size();
  const size_t frames = (n + frame_samples - 1) / frame_samples;
  std::vector<double> rms(frames);
  for (size_t f = 0; f < frames; ++f) {
    const size_t lo = f * frame_samples, hi = std::min(n, lo + frame_samples);
    double acc = 0.0;
    for (size_t i = lo; i < hi; ++i) acc += static_cast<double>(samples[i]) * samples[i];
    rms[f] = std::sqrt(acc / static_cast<double>(hi - lo));
  }
  return rms;
}

inline std::vector<SpeechSegment> DetectSegments(const AudioBuffer &audio, const VadConfig &cfg = {}) {
  if (audio.samples.empty()) throw Error("DetectSegments: empty audio");
  if (cfg.frame_samples <= 0 || cfg.smooth_frames <= 0 || cfg.min_duration < 0)
    throw Error("DetectSegments: invalid configuration");
  const std::vector<double> rms = FrameRms(audio.samples, cfg.frame_samples);
  const int64_t frames = static_cast<int64_t>(rms.size());
  const int64_t half = cfg.smooth_frames / 2;

  // Hysteresis labelling of smoothed frame levels.
  std::vector<char> speech(frames, 0);
  bool active = false;
  for (int64_t f = 0; f < frames; ++f) {
    const int64_t lo = std::max<int64_t>(0, f - half), hi = std::min(frames - 1, f + half);
    double acc = 0.0;
    for (int64_t j = lo; j <= hi; ++j) acc += rms[j];
    const double db = 20.0 * std::log10(acc / static_cast<double>(hi - lo + 1) + 1e-12);
    if (!active && db > cfg.enter_dbfs) active = true;
    else if (active && db < cfg.exit_dbfs) active = false;
    speech[f] = active ? 1 : 0;
  }

  struct Run { int64_t begin, end; bool speech; };
  std::vector<Run> runs;
  for (int64_t f = 0; f < frames; ++f) {
    if (runs.empty() || runs.back().speech != static_cast<bool>(speech[f]))
      runs.push_back({f, f + 1, static_cast<bool>(speech[f])});
    else
      runs.back().end = f + 1;
  }

  // Repeatedly absorb the shortest too-short run into its neighbors.
  const int64_t min_frames = static_cast<int64_t>(
      std::ceil(cfg.min_duration * audio.sample_rate / cfg.frame_samples - 1e-9));
  while (runs.size() > 1) {
    size_t shortest = 0;
    for (size_t i = 1; i < runs.size(); ++i)
      if (runs[i].end - runs[i].begin < runs[shortest].end - runs[shortest].begin) shortest = i;
    if (runs[shortest].end - runs[shortest].begin >= min_frames) break;
    std::vector<Run> merged;
    runs[shortest].speech = !runs[shortest].speech;
    for (const Run &r : runs) {
      if (!merged.empty() && merged.back().speech == r.speech) merged.back().end = r.end;
      else merged.push_back(r);
    }
    runs = std::move(merged);
  }

  const int64_t n = static_cast<int64_t>(audio.samples.size());
  std::vector<SpeechSegment> segments;
  segments.reserve(runs.size());
  for (const Run &r : runs) {
    segments.push_back({r.begin * cfg.frame_samples, std::min(n, r.end * cfg.frame_samples),
                        r.speech ? SegmentKind::kSpeech : SegmentKind::kPause});
  }
  return segments;
}

// ---------------------------------------------------------------------------
// Clip extraction.

struct ClipConfig {
  double clip_len = 3.0;        // seconds
  double jitter = 1.5;          // seconds, uniform in [-jitter, +jitter]
  int max_clips_per_source = 250;
};

struct ClipExtraction {
  std::vector<AudioClip> clips;
  std::string diagnostic;  // non-empty when nothing could be extracted
};

inline int64_t ClipSamples(const ClipConfig &cfg, int32_t rate = kCanonicalRate) {
  return static_cast<int64_t>(std::llround(cfg.clip_len * rate));
}

/// Speech/pause boundaries of a segmentation, in sample indices.
inline std::vector<int64_t> Breakpoints(std::span<const SpeechSegment> segments) {
  std::vector<int64_t> points;
  for (size_t i = 1; i < segments.size(); ++i)
    if (segments[i].kind != segments[i - 1].kind) points.push_back(segments[i].start_sample);
  return points;
}

/// Indices of `count` of `total` candidates spread evenly across the range.
inline std::vector<size_t> EvenSelection(size_t total, size_t count) {
  std::vector<size_t> idx;
  if (count >= total) {
    for (size_t i = 0; i < total; ++i) idx.push_back(i);
    return idx;
  }
  for (size_t i = 0; i < count; ++i) idx.push_back((2 * i + 1) * total / (2 * count));
  return idx;
}

inline ClipExtraction ExtractClips(const AudioBuffer &audio, std::span<const SpeechSegment> segments,
                                   const ClipConfig &cfg, const std::string &source_id,
                                   uint64_t rng_seed) {
  ClipExtraction result;
  const int64_t n = static_cast<int64_t>(audio.samples.size());
  const int64_t len = ClipSamples(cfg, audio.sample_rate);
  if (len <= 0) throw Error("ExtractClips: clip length must be positive");
  if (cfg.jitter < 0 || cfg.max_clips_per_source < 0) throw Error("ExtractClips: invalid configuration");
  if (n < len) {
    std::ostringstream os;
    os << source_id << ": audio is " << audio.duration() << " s, shorter than clip length "
       << cfg.clip_len << " s";
    result.diagnostic = os.str();
    return result;
  }
  int64_t covered = 0;
  for (const auto &s : segments) {
    if (s.start_sample != covered || s.end_sample <= s.start_sample)
      throw Error("ExtractClips: segmentation has gaps, overlaps or empty segments");
    covered = s.end_sample;
  }
  if (covered != n) throw Error("ExtractClips: segmentation does not cover the audio");

  const std::vector<int64_t> points = Breakpoints(segments);
  if (points.empty()) {
    result.diagnostic = source_id + ": no speech/pause boundaries found";
    return result;
  }
  Rng rng(rng_seed);
  const auto chosen = EvenSelection(points.size(), static_cast<size_t>(cfg.max_clips_per_source));
  for (size_t i = 0; i < chosen.size(); ++i) {
    const double offset = cfg.jitter > 0 ? rng.Uniform(-cfg.jitter, cfg.jitter) : 0.0;
    const int64_t center = points[chosen[i]] + std::llround(offset * audio.sample_rate);
    const int64_t start = std::clamp<int64_t>(center - len / 2, 0, n - len);
    AudioClip clip;
    clip.source_id = source_id;
    clip.clip_id = static_cast<int64_t>(i);
    clip.start_sample = start;
    clip.buffer.sample_rate = audio.sample_rate;
    clip.buffer.samples.assign(audio.samples.begin() + start, audio.samples.begin() + start + len);
    result.clips.push_back(std::move(clip));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Clip manifest: source_id,clip_id,start_sample,stop_sample,path

struct ManifestRow {
  std::string source_id;
  int64_t clip_id = 0;
  int64_t start_sample = 0;
  int64_t stop_sample = 0;
  std::string path;

  std::string key() const { return source_id + "_" + std::to_string(clip_id); }
  bool operator==(const ManifestRow &) const = default;
};

inline std::string FormatManifest(std::span<const ManifestRow> rows) {
  std::string out = "source_id,clip_id,start_sample,stop_sample,path\n";
  for (const auto &r : rows)
    out += r.source_id + "," + std::to_string(r.clip_id) + "," + std::to_string(r.start_sample) + "," +
           std::to_string(r.stop_sample) + "," + r.path + "\n";
  return out;
}

inline std::vector<ManifestRow> ReadManifest(const std::string &path) {
  const CsvTable t = ReadCsv(path);
  const size_t c_src = t.Column("source_id", path), c_id = t.Column("clip_id", path),
               c_start = t.Column("start_sample", path), c_stop = t.Column("stop_sample", path),
               c_path = t.Column("path", path);
  std::vector<ManifestRow> rows;
  for (size_t i = 0; i < t.rows.size(); ++i) {
    const auto &f = t.rows[i];
    const std::string ctx = path + ":" + std::to_string(t.line_numbers[i]);
    rows.push_back({f[c_src], ParseNumber<int64_t>(f[c_id], ctx), ParseNumber<int64_t>(f[c_start], ctx),
                    ParseNumber<int64_t>(f[c_stop], ctx), f[c_path]});
  }
  return rows;
}

}  // namespace sepkit

#endif  // SEPKIT_AUDIO_INGEST_HPP_
