// sepkit/features.hpp

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

#ifndef SEPKIT_FEATURES_HPP_
#define SEPKIT_FEATURES_HPP_

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sepkit/audio_ingest.hpp"
#include "sepkit/util.hpp"

namespace sepkit {

enum class StreamName : uint16_t { kMfb = 0, kF0 = 1, kAtv = 2, kPhone = 3 };

constexpr std::array<StreamName, 4> kAllStreams = {StreamName::kMfb, StreamName::kF0, StreamName::kAtv,
                                                   StreamName::kPhone};

constexpr size_t StreamDims(StreamName name) {
  switch (name) {
    case StreamName::kMfb: return 40;
    case StreamName::kF0: return 3;
    case StreamName::kAtv: return 8;
    case StreamName::kPhone: return 41;
  }
  return 0;
}

inline std::string StreamLabel(StreamName name) {
  switch (name) {
    case StreamName::kMfb: return "mfb";
    case StreamName::kF0: return "f0";
    case StreamName::kAtv: return "atv";
    case StreamName::kPhone: return "phone";
  }
  return "?";
}

inline StreamName ParseStreamName(const std::string &s) {
  for (StreamName n : kAllStreams)
    if (StreamLabel(n) == s) return n;
  throw InputError("unknown feature stream '" + s + "' (expected mfb, f0, atv or phone)");
}

inline std::optional<StreamName> StreamFromCode(uint16_t code) {
  if (code > 3) return std::nullopt;
  return static_cast<StreamName>(code);
}

constexpr double kFrameRate = 100.0;

/// A named frames x dims feature matrix, row-major.
struct FeatureStream {
  StreamName name = StreamName::kMfb;
  size_t frames = 0;
  size_t dims = 0;
  double frame_rate = kFrameRate;
  std::vector<float> data;

  float at(size_t t, size_t d) const { return data[t * dims + d]; }
  float &at(size_t t, size_t d) { return data[t * dims + d]; }
  std::span<const float> row(size_t t) const { return {data.data() + t * dims, dims}; }

  static FeatureStream Zeros(StreamName name, size_t frames) {
    FeatureStream s;
    s.name = name;
    s.frames = frames;
    s.dims = StreamDims(name);
    s.data.assign(frames * s.dims, 0.0f);
    return s;
  }
};

/// Streams of one clip sharing a frame count, in canonical MFB, F0, ATV,
/// PHONE order.
struct FeatureBundle {
  std::string clip_ref;
  std::vector<FeatureStream> streams;

  size_t frames() const { return streams.empty() ? 0 : streams.front().frames; }
  size_t total_dims() const {
    size_t d = 0;
    for (const auto &s : streams) d += s.dims;
    return d;
  }
  const FeatureStream *find(StreamName name) const {
    for (const auto &s : streams)
      if (s.name == name) return &s;
    return nullptr;
  }
  std::vector<StreamName> names() const {
    std::vector<StreamName> n;
    for (const auto &s : streams) n.push_back(s.name);
    return n;
  }
};

// ---------------------------------------------------------------------------
// Framing shared by all computed streams: 25 ms windows every 10 ms.

struct FramingConfig {
  int window = 400;
  int hop = 160;
};

inline size_t NumFrames(size_t num_samples, const FramingConfig &f = {}) {
  if (num_samples < static_cast<size_t>(f.window)) return 0;
  return (num_samples - f.window) / f.hop + 1;
}

// ---------------------------------------------------------------------------
// Log mel filterbank.

inline double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MfbConfig {
  FramingConfig framing;
  int fft_size = 512;
  int num_bins = 40;
  double low_hz = 0.0;
  double high_hz = 8000.0;
  double log_floor = 1e-10;
  int32_t sample_rate = kCanonicalRate;
};

/// Triangular filters, equally spaced on the HTK mel scale, applied to the
/// one-sided power spectrum.
class MelBanks {
 public:
  explicit MelBanks(const MfbConfig &cfg) : num_fft_bins_(cfg.fft_size / 2 + 1) {
    const double mel_lo = HzToMel(cfg.low_hz), mel_hi = HzToMel(cfg.high_hz);
    const double step = (mel_hi - mel_lo) / (cfg.num_bins + 1);
    weights_.assign(static_cast<size_t>(cfg.num_bins), std::vector<double>(num_fft_bins_, 0.0));
    centers_hz_.resize(cfg.num_bins);
    for (int b = 0; b < cfg.num_bins; ++b) {
      const double left = mel_lo + b * step, center = left + step, right = center + step;
      centers_hz_[b] = MelToHz(center);
      for (size_t k = 0; k < num_fft_bins_; ++k) {
        const double mel = HzToMel(static_cast<double>(k) * cfg.sample_rate / cfg.fft_size);
        if (mel > left && mel < center) weights_[b][k] = (mel - left) / (center - left);
        else if (mel >= center && mel < right) weights_[b][k] = (right - mel) / (right - center);
      }
    }
  }

  size_t size() const { return weights_.size(); }
  const std::vector<double> &filter(size_t b) const { return weights_[b]; }
  double center_hz(size_t b) const { return centers_hz_[b]; }

 private:
  size_t num_fft_bins_;
  std::vector<std::vector<double>> weights_;
  std::vector<double> centers_hz_;
};

namespace detail {

// FFTW planning is not thread-safe; execution on a private plan is.
inline std::mutex &FftwPlannerMutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::lock_guard<std::mutex> lock(FftwPlannerMutex());
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(FftwPlannerMutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft &) = delete;
  RealFft &operator=(const RealFft &) = delete;

  double *input() { return in_; }
  // Power spectrum of the current input, n/2+1 bins.
  void PowerSpectrum(std::vector<double> &power) {
    fftw_execute(plan_);
    power.resize(n_ / 2 + 1);
    for (int k = 0; k <= n_ / 2; ++k) power[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  int n_;
  double *in_ = nullptr;
  fftw_complex *out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace detail

/// Log mel energies in double precision, frames x num_bins.
inline std::vector<double> LogMelEnergies(std::span<const float> samples, const MfbConfig &cfg = {}) {
  const size_t frames = NumFrames(samples.size(), cfg.framing);
  const int win = cfg.framing.window;
  if (win > cfg.fft_size) throw Error("LogMelEnergies: window longer than FFT");
  const MelBanks banks(cfg);
  std::vector<double> window(win);
  for (int i = 0; i < win; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (win - 1));

  detail::RealFft fft(cfg.fft_size);
  std::vector<double> power;
  std::vector<double> out(frames * banks.size());
  for (size_t t = 0; t < frames; ++t) {
    double *in = fft.input();
    const size_t start = t * cfg.framing.hop;
    for (int i = 0; i < win; ++i) in[i] = window[i] * samples[start + i];
    for (int i = win; i < cfg.fft_size; ++i) in[i] = 0.0;
    fft.PowerSpectrum(power);
    for (size_t b = 0; b < banks.size(); ++b) {
      const auto &w = banks.filter(b);
      double e = 0.0;
      for (size_t k = 0; k < power.size(); ++k) e += w[k] * power[k];
      out[t * banks.size() + b] = std::log(e + cfg.log_floor);
    }
  }
  return out;
}

inline FeatureStream MelFilterbank(const AudioClip &clip, const MfbConfig &cfg = {}) {
  if (clip.buffer.sample_rate != cfg.sample_rate)
    throw Error("MelFilterbank: clip must be at " + std::to_string(cfg.sample_rate) + " Hz");
  if (cfg.num_bins != static_cast<int>(StreamDims(StreamName::kMfb)))
    throw Error("MelFilterbank: the MFB stream is 40-dimensional");
  const std::vector<double> e = LogMelEnergies(clip.buffer.samples, cfg);
  FeatureStream s;
  s.name = StreamName::kMfb;
  s.dims = static_cast<size_t>(cfg.num_bins);
  s.frames = e.size() / s.dims;
  s.data.assign(e.begin(), e.end());
  return s;
}

// ---------------------------------------------------------------------------
// Pitch: normalized cross-correlation over a fixed 25 ms product span,
// searched between min_hz and max_hz.

struct F0Config {
  FramingConfig framing;
  double min_hz = 60.0;
  double max_hz = 400.0;
  double voicing_threshold = 0.45;
  double energy_floor = 1e-8;
  int32_t sample_rate = kCanonicalRate;
};

struct PitchEstimate {
  double f0 = 0.0;       // Hz, 0 when unvoiced
  double voicing = 0.0;  // peak normalized correlation clipped to [0, 1]
};

/// Estimates pitch for the analysis span starting at `start`; samples past
/// the end of the signal are treated as zero.
inline PitchEstimate EstimatePitch(std::span<const float> x, size_t start, const F0Config &cfg) {
  const int span = cfg.framing.window;
  const int lag_min = static_cast<int>(std::floor(cfg.sample_rate / cfg.max_hz));
  const int lag_max = static_cast<int>(std::ceil(cfg.sample_rate / cfg.min_hz));
  auto sample = [&](size_t i) -> double { return i < x.size() ? x[i] : 0.0; };

  double e0 = 0.0;
  for (int n = 0; n < span; ++n) e0 += sample(start + n) * sample(start + n);
  if (e0 < cfg.energy_floor) return {};

  // Sliding energy of the lagged span.
  std::vector<double> r(lag_max + 2, 0.0);
  double e_lag = 0.0;
  for (int n = 0; n < span; ++n) e_lag += sample(start + lag_min - 1 + n) * sample(start + lag_min - 1 + n);
  for (int lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
    if (lag > lag_min - 1) {
      const double out = sample(start + lag - 1), in = sample(start + lag - 1 + span);
      e_lag += in * in - out * out;
    }
    double cross = 0.0;
    for (int n = 0; n < span; ++n) cross += sample(start + n) * sample(start + lag + n);
    const double denom = std::sqrt(e0 * std::max(e_lag, 0.0));
    r[lag] = denom > cfg.energy_floor ? cross / denom : 0.0;
  }

  double best = 0.0;
  for (int lag = lag_min; lag <= lag_max; ++lag) best = std::max(best, r[lag]);
  if (best <= 0.0) return {};
  // Shortest lag whose local peak is close to the global maximum; avoids
  // halving the pitch on strongly periodic signals.
  int chosen = -1;
  for (int lag = lag_min; lag <= lag_max; ++lag) {
    if (r[lag] >= 0.9 * best && r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1]) {
      chosen = lag;
      break;
    }
  }
  if (chosen < 0) return {};
  double refined = chosen;
  const double a = r[chosen - 1], b = r[chosen], c = r[chosen + 1];
  const double curvature = a - 2.0 * b + c;
  if (curvature < 0.0) refined += std::clamp(0.5 * (a - c) / curvature, -0.5, 0.5);

  PitchEstimate est;
  est.voicing = std::clamp(r[chosen], 0.0, 1.0);
  if (est.voicing >= cfg.voicing_threshold) est.f0 = cfg.sample_rate / refined;
  return est;
}

/// [f0, delta f0, voicing] per frame, on the same frame grid as the MFB
/// stream.
inline FeatureStream PitchFeatures(const AudioClip &clip, const F0Config &cfg = {}) {
  if (clip.buffer.sample_rate != cfg.sample_rate)
    throw Error("PitchFeatures: clip must be at " + std::to_string(cfg.sample_rate) + " Hz");
  const auto &x = clip.buffer.samples;
  FeatureStream s = FeatureStream::Zeros(StreamName::kF0, NumFrames(x.size(), cfg.framing));
  double prev = 0.0;
  for (size_t t = 0; t < s.frames; ++t) {
    const PitchEstimate est = EstimatePitch(x, t * cfg.framing.hop, cfg);
    // On a 1/1024 Hz grid every f0 below 16 kHz and every difference of two
    // such values is exact in float, so the deltas sum to f0[T-1] - f0[0]
    // without rounding.
    const float f0 = static_cast<float>(std::round(est.f0 * 1024.0) / 1024.0);
    s.at(t, 0) = f0;
    s.at(t, 1) = t == 0 ? 0.0f : f0 - static_cast<float>(prev);
    s.at(t, 2) = static_cast<float>(est.voicing);
    prev = f0;
  }
  return s;
}

// ---------------------------------------------------------------------------

/// Combines streams into canonical order, truncating all to the shortest.
inline FeatureBundle Bundle(std::vector<FeatureStream> streams, std::string clip_ref = {}) {
  if (streams.empty()) throw Error("Bundle: no streams");
  std::sort(streams.begin(), streams.end(),
            [](const FeatureStream &a, const FeatureStream &b) { return a.name < b.name; });
  for (size_t i = 1; i < streams.size(); ++i)
    if (streams[i].name == streams[i - 1].name)
      throw Error("Bundle: duplicate stream '" + StreamLabel(streams[i].name) + "'");
  size_t frames = streams.front().frames;
  for (const auto &s : streams) frames = std::min(frames, s.frames);
  for (auto &s : streams) {
    s.data.resize(frames * s.dims);
    s.frames = frames;
  }
  FeatureBundle b;
  b.clip_ref = std::move(clip_ref);
  b.streams = std::move(streams);
  return b;
}

}  // namespace sepkit

#endif  // SEPKIT_FEATURES_HPP_
