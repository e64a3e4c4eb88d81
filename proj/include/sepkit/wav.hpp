// sepkit/wav.hpp

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

#ifndef SEPKIT_WAV_HPP_
#define SEPKIT_WAV_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sepkit/util.hpp"

namespace sepkit {

/// Decoded RIFF payload before any channel mixing or rate conversion.
struct WavData {
  int32_t sample_rate = 0;
  int32_t channels = 0;
  std::vector<float> interleaved;  // scaled to [-1, 1]

  size_t frames() const { return channels > 0 ? interleaved.size() / channels : 0; }
};

namespace detail {

constexpr uint16_t kWaveFormatPcm = 1;
constexpr uint16_t kWaveFormatFloat = 3;
constexpr uint16_t kWaveFormatExtensible = 0xFFFE;

inline bool TagIs(const char tag[4], const char *want) { return std::memcmp(tag, want, 4) == 0; }

inline float DecodeSample(const unsigned char *p, uint16_t bits, bool is_float) {
  if (is_float) {
    float f;
    std::memcpy(&f, p, 4);
    if (!std::isfinite(f)) return 0.0f;
    return std::clamp(f, -1.0f, 1.0f);
  }
  switch (bits) {
    case 8: return (static_cast<int>(p[0]) - 128) / 128.0f;
    case 16: {
      int16_t v;
      std::memcpy(&v, p, 2);
      return v / 32768.0f;
    }
    case 24: {
      int32_t v = (static_cast<int32_t>(p[2]) << 24) | (static_cast<int32_t>(p[1]) << 16) |
                  (static_cast<int32_t>(p[0]) << 8);
      return static_cast<float>((v >> 8) / 8388608.0);
    }
    case 32: {
      int32_t v;
      std::memcpy(&v, p, 4);
      return static_cast<float>(v / 2147483648.0);
    }
  }
  return 0.0f;
}

}  // namespace detail

/// Reads an integer-PCM (8/16/24/32-bit) or 32-bit float RIFF WAV file.
inline WavData ReadWav(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  char riff[4], wave[4];
  in.read(riff, 4);
  ReadPod<uint32_t>(in, "RIFF size");
  in.read(wave, 4);
  if (!in || !detail::TagIs(riff, "RIFF") || !detail::TagIs(wave, "WAVE"))
    throw InputError(path + ": not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<unsigned char> payload;
  bool have_data = false;
  while (in && !have_data) {
    char tag[4];
    in.read(tag, 4);
    if (!in) break;
    const uint32_t size = ReadPod<uint32_t>(in, "chunk size");
    if (detail::TagIs(tag, "fmt ")) {
      if (size < 16) throw InputError(path + ": malformed fmt chunk");
      format = ReadPod<uint16_t>(in, "format");
      channels = ReadPod<uint16_t>(in, "channels");
      rate = ReadPod<uint32_t>(in, "sample rate");
      ReadPod<uint32_t>(in, "byte rate");
      ReadPod<uint16_t>(in, "block align");
      bits = ReadPod<uint16_t>(in, "bits per sample");
      uint32_t consumed = 16;
      if (format == detail::kWaveFormatExtensible && size >= 40) {
        ReadPod<uint16_t>(in, "cb size");
        ReadPod<uint16_t>(in, "valid bits");
        ReadPod<uint32_t>(in, "channel mask");
        format = ReadPod<uint16_t>(in, "sub format");
        consumed += 10;
      }
      in.seekg(size - consumed + (size & 1), std::ios::cur);
      have_fmt = true;
    } else if (detail::TagIs(tag, "data")) {
      if (!have_fmt) throw InputError(path + ": data chunk before fmt chunk");
      payload.resize(size);
      in.read(reinterpret_cast<char *>(payload.data()), size);
      // Tolerate a truncated final chunk (common with streamed recorders).
      payload.resize(static_cast<size_t>(in.gcount()));
      have_data = true;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || !have_data) throw InputError(path + ": missing fmt or data chunk");

  const bool is_float = format == detail::kWaveFormatFloat;
  if (format != detail::kWaveFormatPcm && !is_float)
    throw InputError(path + ": unsupported codec (format tag " + std::to_string(format) + ")");
  if (is_float ? bits != 32 : (bits != 8 && bits != 16 && bits != 24 && bits != 32))
    throw InputError(path + ": unsupported bit depth " + std::to_string(bits));
  if (channels == 0 || rate == 0) throw InputError(path + ": zero channels or sample rate");

  const size_t bytes_per_sample = bits / 8;
  const size_t frame_bytes = bytes_per_sample * channels;
  const size_t frames = payload.size() / frame_bytes;
  if (frames == 0) throw InputError(path + ": zero-length audio");

  WavData wav;
  wav.sample_rate = static_cast<int32_t>(rate);
  wav.channels = channels;
  wav.interleaved.resize(frames * channels);
  for (size_t i = 0; i < wav.interleaved.size(); ++i)
    wav.interleaved[i] = detail::DecodeSample(&payload[i * bytes_per_sample], bits, is_float);
  return wav;
}

/// Writes mono 16-bit PCM. Samples outside [-1, 1] are clipped.
inline void WriteWav16(const std::string &path, std::span<const float> samples, int32_t sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  WritePod<uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  WritePod<uint32_t>(out, 16);
  WritePod<uint16_t>(out, detail::kWaveFormatPcm);
  WritePod<uint16_t>(out, 1);
  WritePod<uint32_t>(out, static_cast<uint32_t>(sample_rate));
  WritePod<uint32_t>(out, static_cast<uint32_t>(sample_rate) * 2);
  WritePod<uint16_t>(out, 2);
  WritePod<uint16_t>(out, 16);
  out.write("data", 4);
  WritePod<uint32_t>(out, data_bytes);
  for (float s : samples) {
    const double scaled = std::round(static_cast<double>(s) * 32768.0);
    WritePod<int16_t>(out, static_cast<int16_t>(std::clamp(scaled, -32768.0, 32767.0)));
  }
  if (!out) throw Error("write failed: " + path);
}

// Band-limited rate conversion by a Hann-windowed sinc, evaluated with one
// precomputed filter per output phase of the rational ratio out/in.
class SincResampler {
 public:
  SincResampler(int32_t rate_in, int32_t rate_out, int num_zeros = 16)
      : rate_in_(rate_in), rate_out_(rate_out) {
    if (rate_in <= 0 || rate_out <= 0) throw Error("SincResampler: rates must be positive");
    const int64_t g = std::gcd<int64_t, int64_t>(rate_in, rate_out);
    in_period_ = rate_in / g;
    out_period_ = rate_out / g;
    const double cutoff = 0.99 * 0.5 * std::min(rate_in, rate_out);
    const double half_width = num_zeros / (2.0 * cutoff);
    first_.resize(out_period_);
    weights_.resize(out_period_);
    for (int64_t p = 0; p < out_period_; ++p) {
      const double t = static_cast<double>(p) / rate_out;
      const int64_t lo = static_cast<int64_t>(std::ceil((t - half_width) * rate_in));
      const int64_t hi = static_cast<int64_t>(std::floor((t + half_width) * rate_in));
      first_[p] = lo;
      for (int64_t k = lo; k <= hi; ++k) {
        const double delta = t - static_cast<double>(k) / rate_in;
        double w = 0.0;
        if (std::abs(delta) < half_width) {
          const double window = 0.5 * (1.0 + std::cos(M_PI * delta / half_width));
          const double sinc = delta == 0.0 ? 2.0 * cutoff
                                           : std::sin(2.0 * M_PI * cutoff * delta) / (M_PI * delta);
          w = window * sinc / rate_in;
        }
        weights_[p].push_back(w);
      }
    }
  }

  std::vector<float> Resample(std::span<const float> input) const {
    if (rate_in_ == rate_out_) return {input.begin(), input.end()};
    const int64_t n_in = static_cast<int64_t>(input.size());
    const int64_t n_out = n_in * rate_out_ / rate_in_;
    std::vector<float> out(static_cast<size_t>(n_out));
    for (int64_t n = 0; n < n_out; ++n) {
      const int64_t q = n / out_period_, p = n % out_period_;
      const int64_t base = q * in_period_ + first_[p];
      const auto &w = weights_[p];
      double acc = 0.0;
      for (size_t j = 0; j < w.size(); ++j) {
        const int64_t k = base + static_cast<int64_t>(j);
        if (k >= 0 && k < n_in) acc += w[j] * input[static_cast<size_t>(k)];
      }
      out[static_cast<size_t>(n)] = static_cast<float>(std::clamp(acc, -1.0, 1.0));
    }
    return out;
  }

 private:
  int32_t rate_in_, rate_out_;
  int64_t in_period_ = 1, out_period_ = 1;
  std::vector<int64_t> first_;
  std::vector<std::vector<double>> weights_;
};

}  // namespace sepkit

#endif  // SEPKIT_WAV_HPP_
