// sepkit/feature_io.hpp

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

// Frame-feature files. Layout, all little-endian:
//   "SEPF" | u16 version (1) | u16 name code | u32 dims | u32 frames |
//   f32 frame_rate | frames*dims f32, row-major

#ifndef SEPKIT_FEATURE_IO_HPP_
#define SEPKIT_FEATURE_IO_HPP_

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "sepkit/features.hpp"
#include "sepkit/util.hpp"

namespace sepkit {

constexpr uint16_t kSepfVersion = 1;

inline void WriteFeatureStream(std::ostream &os, const FeatureStream &s) {
  os.write("SEPF", 4);
  WritePod<uint16_t>(os, kSepfVersion);
  WritePod<uint16_t>(os, static_cast<uint16_t>(s.name));
  WritePod<uint32_t>(os, static_cast<uint32_t>(s.dims));
  WritePod<uint32_t>(os, static_cast<uint32_t>(s.frames));
  WritePod<float>(os, static_cast<float>(s.frame_rate));
  os.write(reinterpret_cast<const char *>(s.data.data()),
           static_cast<std::streamsize>(s.data.size() * sizeof(float)));
}

inline void WriteFeatureFile(const std::string &path, const FeatureStream &s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  WriteFeatureStream(out, s);
  if (!out) throw Error("write failed: " + path);
}

/// Parses a stream as stored, without dimension or rate normalization.
inline FeatureStream ReadFeatureStream(std::istream &is, const std::string &source) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SEPF", 4) != 0) throw InputError(source + ": bad magic");
  const auto version = ReadPod<uint16_t>(is, "version");
  if (version != kSepfVersion) throw InputError(source + ": unsupported version " + std::to_string(version));
  const auto code = ReadPod<uint16_t>(is, "name code");
  const auto name = StreamFromCode(code);
  if (!name) throw InputError(source + ": unknown stream code " + std::to_string(code));
  FeatureStream s;
  s.name = *name;
  s.dims = ReadPod<uint32_t>(is, "dims");
  s.frames = ReadPod<uint32_t>(is, "frames");
  s.frame_rate = ReadPod<float>(is, "frame rate");
  if (!(s.frame_rate > 0.0) || !std::isfinite(s.frame_rate))
    throw InputError(source + ": invalid frame rate");
  s.data.resize(s.frames * s.dims);
  is.read(reinterpret_cast<char *>(s.data.data()), static_cast<std::streamsize>(s.data.size() * sizeof(float)));
  if (!is) throw InputError(source + ": truncated feature data");
  for (float v : s.data)
    if (!std::isfinite(v)) throw InputError(source + ": non-finite value");
  return s;
}

inline FeatureStream ReadFeatureFile(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return ReadFeatureStream(in, path);
}

/// Nearest-frame mapping onto the 100 Hz grid: output frame i takes input
/// frame round(i * rate / 100), clamped to the last frame.
inline FeatureStream ResampleFrames(const FeatureStream &s, double target_rate = kFrameRate) {
  if (s.frame_rate == target_rate) return s;
  FeatureStream out;
  out.name = s.name;
  out.dims = s.dims;
  out.frame_rate = target_rate;
  out.frames = static_cast<size_t>(std::llround(s.frames * target_rate / s.frame_rate));
  out.data.resize(out.frames * out.dims);
  for (size_t i = 0; i < out.frames; ++i) {
    size_t src = static_cast<size_t>(std::llround(i * s.frame_rate / target_rate));
    if (src >= s.frames) src = s.frames - 1;
    std::copy_n(s.data.begin() + src * s.dims, s.dims, out.data.begin() + i * out.dims);
  }
  return out;
}

/// Loads an externally computed stream (ATV, PHONE, or any other) and aligns
/// it to 100 Hz.
inline FeatureStream LoadExternalStream(const std::string &path, StreamName expected) {
  FeatureStream s = ReadFeatureFile(path);
  if (s.name != expected)
    throw InputError(path + ": stream name mismatch (file holds " + StreamLabel(s.name) + ", expected " +
                     StreamLabel(expected) + ")");
  if (s.dims != StreamDims(expected))
    throw InputError(path + ": dimension mismatch (" + std::to_string(s.dims) + " dims, " +
                     StreamLabel(expected) + " requires " + std::to_string(StreamDims(expected)) + ")");
  if (s.frames == 0) throw InputError(path + ": empty stream");
  return ResampleFrames(s);
}

/// Canonical file name for a clip's stream: `<clip_key>.<stream>.sepf`.
inline std::string FeatureFileName(const std::string &clip_key, StreamName name) {
  return clip_key + "." + StreamLabel(name) + ".sepf";
}

}  // namespace sepkit

#endif  // SEPKIT_FEATURE_IO_HPP_
