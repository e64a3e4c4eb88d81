// sepkit/nn/checkpoint.hpp

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

// Model checkpoints, little-endian:
//
//   "SEPM" | u16 version | u8 arch (0 lstm, 1 convlstm)
//   hyperparameters: u32 hidden | u32 conv_channels | u32 embed |
//                    u32 n_streams | n_streams x u16 stream code |
//                    u32 metadata length | metadata (UTF-8 key=value lines)
//   u32 n_tensors, then per tensor:
//     u32 name length | name (UTF-8) | u32 rank | rank x u32 dims | f32 data
//
// Tensors are the model parameters, then its buffers, then any extra tensors
// supplied by the caller (for example input normalization statistics).

#ifndef SEPKIT_NN_CHECKPOINT_HPP_
#define SEPKIT_NN_CHECKPOINT_HPP_

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sepkit/nn/model.hpp"
#include "sepkit/util.hpp"

namespace sepkit::nn {

constexpr uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> data;
};

struct Checkpoint {
  Model<float> model;
  std::string metadata;
  std::vector<NamedTensor> extra;

  const NamedTensor *find_extra(const std::string &name) const {
    for (const auto &t : extra)
      if (t.name == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void WriteTensor(std::ostream &os, const std::string &name, const std::vector<int64_t> &shape,
                        const float *data, size_t count) {
  WritePod<uint32_t>(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  WritePod<uint32_t>(os, static_cast<uint32_t>(shape.size()));
  for (int64_t d : shape) WritePod<uint32_t>(os, static_cast<uint32_t>(d));
  os.write(reinterpret_cast<const char *>(data), static_cast<std::streamsize>(count * sizeof(float)));
}

inline NamedTensor ReadTensor(std::istream &is, const std::string &source) {
  NamedTensor t;
  const auto len = ReadPod<uint32_t>(is, "tensor name length");
  if (len > 4096) throw InputError(source + ": implausible tensor name length");
  t.name.resize(len);
  is.read(t.name.data(), len);
  const auto rank = ReadPod<uint32_t>(is, "tensor rank");
  if (rank > 8) throw InputError(source + ": implausible tensor rank");
  size_t count = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    t.shape.push_back(ReadPod<uint32_t>(is, "tensor dim"));
    count *= static_cast<size_t>(t.shape.back());
  }
  t.data.resize(count);
  is.read(reinterpret_cast<char *>(t.data.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (!is) throw InputError(source + ": truncated tensor " + t.name);
  return t;
}

}  // namespace detail

inline void SaveCheckpoint(const std::string &path, const Model<float> &model, const std::string &metadata = {},
                           const std::vector<NamedTensor> &extra = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  const ArchConfig &cfg = model.config();
  out.write("SEPM", 4);
  WritePod<uint16_t>(out, kCheckpointVersion);
  WritePod<uint8_t>(out, static_cast<uint8_t>(cfg.arch));
  WritePod<uint32_t>(out, static_cast<uint32_t>(cfg.hidden));
  WritePod<uint32_t>(out, static_cast<uint32_t>(cfg.conv_channels));
  WritePod<uint32_t>(out, static_cast<uint32_t>(cfg.embed));
  WritePod<uint32_t>(out, static_cast<uint32_t>(cfg.streams.size()));
  for (StreamName s : cfg.streams) WritePod<uint16_t>(out, static_cast<uint16_t>(s));
  WritePod<uint32_t>(out, static_cast<uint32_t>(metadata.size()));
  out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));

  const size_t n = model.params().size() + model.buffers().size() + extra.size();
  WritePod<uint32_t>(out, static_cast<uint32_t>(n));
  for (const auto *group : {&model.params(), &model.buffers()})
    for (const auto &p : *group) detail::WriteTensor(out, p.name, p.shape, p.value.data(), p.value.size());
  for (const auto &t : extra) detail::WriteTensor(out, t.name, t.shape, t.data.data(), t.data.size());
  if (!out) throw Error("write failed: " + path);
}

inline Checkpoint LoadCheckpoint(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SEPM", 4) != 0) throw InputError(path + ": not a model checkpoint");
  if (ReadPod<uint16_t>(in, "version") != kCheckpointVersion) throw InputError(path + ": unsupported version");
  ArchConfig cfg;
  const auto arch = ReadPod<uint8_t>(in, "arch");
  if (arch > 1) throw InputError(path + ": unknown architecture tag");
  cfg.arch = static_cast<Arch>(arch);
  cfg.hidden = static_cast<int>(ReadPod<uint32_t>(in, "hidden"));
  cfg.conv_channels = static_cast<int>(ReadPod<uint32_t>(in, "conv channels"));
  cfg.embed = static_cast<int>(ReadPod<uint32_t>(in, "embed"));
  const auto n_streams = ReadPod<uint32_t>(in, "stream count");
  if (n_streams == 0 || n_streams > 4) throw InputError(path + ": bad stream count");
  cfg.streams.clear();
  for (uint32_t i = 0; i < n_streams; ++i) {
    const auto name = StreamFromCode(ReadPod<uint16_t>(in, "stream code"));
    if (!name) throw InputError(path + ": unknown stream code");
    cfg.streams.push_back(*name);
  }
  Checkpoint ck;
  const auto meta_len = ReadPod<uint32_t>(in, "metadata length");
  ck.metadata.resize(meta_len);
  in.read(ck.metadata.data(), meta_len);
  ck.model.AdoptLayout(cfg);

  std::map<std::string, Parameter<float> *> slots;
  for (auto &p : ck.model.params()) slots[p.name] = &p;
  for (auto &p : ck.model.buffers()) slots[p.name] = &p;
  const auto n = ReadPod<uint32_t>(in, "tensor count");
  for (uint32_t i = 0; i < n; ++i) {
    NamedTensor t = detail::ReadTensor(in, path);
    auto it = slots.find(t.name);
    if (it == slots.end()) {
      ck.extra.push_back(std::move(t));
      continue;
    }
    Parameter<float> &p = *it->second;
    if (t.shape != p.shape) throw InputError(path + ": shape mismatch for " + t.name);
    std::copy(t.data.begin(), t.data.end(), p.value.data());
    slots.erase(it);
  }
  if (!slots.empty()) throw InputError(path + ": missing tensor " + slots.begin()->first);
  ck.model.Touch();
  return ck;
}

}  // namespace sepkit::nn

#endif  // SEPKIT_NN_CHECKPOINT_HPP_
