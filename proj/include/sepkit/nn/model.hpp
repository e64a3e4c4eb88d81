// sepkit/nn/model.hpp

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

// The two clip classifiers.
//
//   lstm:      concat(streams) -> LSTM -> {any head, type heads}
//   convlstm:  per stream conv1d -> batchnorm -> sigmoid(gate) scaling,
//              concat(channels) -> LSTM -> ReLU embedding -> {any, types}
//
// Both heads end in a sigmoid; the any head has one output, the type head
// one output per event type.

#ifndef SEPKIT_NN_MODEL_HPP_
#define SEPKIT_NN_MODEL_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sepkit/annotations.hpp"
#include "sepkit/features.hpp"
#include "sepkit/nn/layers.hpp"
#include "sepkit/util.hpp"

namespace sepkit::nn {

enum class Arch : uint8_t { kLstm = 0, kConvLstm = 1 };

inline std::string ArchName(Arch a) { return a == Arch::kLstm ? "lstm" : "convlstm"; }

inline Arch ParseArch(const std::string &s) {
  if (s == "lstm") return Arch::kLstm;
  if (s == "convlstm") return Arch::kConvLstm;
  throw InputError("unknown architecture '" + s + "' (expected lstm or convlstm)");
}

struct ArchConfig {
  Arch arch = Arch::kConvLstm;
  std::vector<StreamName> streams = {StreamName::kMfb};
  int hidden = 64;
  int conv_channels = 64;
  int embed = 64;

  static int KernelFor(StreamName s) { return s == StreamName::kMfb ? 3 : 5; }
  int input_dims() const {
    if (arch == Arch::kConvLstm) return conv_channels * static_cast<int>(streams.size());
    int d = 0;
    for (auto s : streams) d += static_cast<int>(StreamDims(s));
    return d;
  }
  bool operator==(const ArchConfig &) const = default;
};

template <class S>
struct Parameter {
  std::string name;
  std::vector<int64_t> shape;  // logical shape; value is stored 2-D
  Mat<S> value;
  Mat<S> grad;
};

/// Per-stream inputs for one batch: each (T*B) x dims, time-major rows.
template <class S>
struct BatchInput {
  SeqShape shape;
  std::vector<Mat<S>> streams;
};

template <class S>
struct Outputs {
  Mat<S> any;    // B x 1 probabilities
  Mat<S> types;  // B x 5 probabilities
};

template <class S>
struct ForwardTrace {
  Mode mode = Mode::kEval;
  uint64_t version = 0;
  SeqShape shape;
  std::vector<Conv1dTrace<S>> conv;
  std::vector<BatchNormTrace<S>> bn;
  std::vector<Mat<S>> normed;  // batchnorm outputs before gating
  std::vector<S> gate;         // sigmoid(gate logit) per stream
  LstmTrace<S> lstm;
  Mat<S> lstm_in;
  Mat<S> final_hidden;
  Mat<S> embed;  // post-ReLU
  Outputs<S> out;
};

template <class S>
class Model {
 public:
  Model() = default;

  explicit Model(const ArchConfig &cfg, uint64_t seed = 0) : cfg_(cfg) {
    if (cfg.streams.empty()) throw Error("Model: no input streams");
    for (size_t i = 1; i < cfg.streams.size(); ++i)
      if (!(cfg.streams[i - 1] < cfg.streams[i])) throw Error("Model: streams must be unique and in canonical order");
    Build();
    Initialize(seed);
  }

  const ArchConfig &config() const { return cfg_; }
  std::vector<Parameter<S>> &params() { return params_; }
  const std::vector<Parameter<S>> &params() const { return params_; }
  std::vector<Parameter<S>> &buffers() { return buffers_; }
  const std::vector<Parameter<S>> &buffers() const { return buffers_; }

  Parameter<S> &param(const std::string &name) { return params_[Index(name)]; }
  const Parameter<S> &param(const std::string &name) const { return params_[Index(name)]; }

  size_t num_parameters() const {
    size_t n = 0;
    for (const auto &p : params_) n += static_cast<size_t>(p.value.size());
    return n;
  }

  void ZeroGrad() {
    for (auto &p : params_) p.grad.setZero();
  }

  /// Any structural change to parameters invalidates earlier traces.
  void Touch() { ++version_; }
  uint64_t version() const { return version_; }

  Outputs<S> Forward(const BatchInput<S> &in, Mode mode, ForwardTrace<S> *trace = nullptr,
                     bool update_running = true) {
    DenormalGuard ftz;
    CheckInput(in);
    ForwardTrace<S> local;
    ForwardTrace<S> &tr = trace ? *trace : local;
    tr = ForwardTrace<S>{};
    tr.mode = mode;
    tr.version = version_;
    tr.shape = in.shape;

    if (cfg_.arch == Arch::kLstm) {
      if (in.streams.size() == 1) {
        tr.lstm_in = in.streams.front();
      } else {
        tr.lstm_in.resize(in.shape.rows(), cfg_.input_dims());
        int col = 0;
        for (const auto &x : in.streams) {
          tr.lstm_in.middleCols(col, x.cols()) = x;
          col += static_cast<int>(x.cols());
        }
      }
    } else {
      const size_t n = cfg_.streams.size();
      tr.conv.resize(n);
      tr.bn.resize(n);
      tr.normed.resize(n);
      tr.gate.resize(n);
      tr.lstm_in.resize(in.shape.rows(), cfg_.input_dims());
      for (size_t s = 0; s < n; ++s) {
        const StreamIdx &ix = stream_idx_[s];
        const Mat<S> y = Conv1dForward<S>(in.streams[s], in.shape, params_[ix.conv_w].value, nullptr,
                                          ArchConfig::KernelFor(cfg_.streams[s]), &tr.conv[s]);
        Mat<S> rm = buffers_[ix.running_mean].value, rv = buffers_[ix.running_var].value;
        tr.normed[s] = BatchNormForward<S>(y, params_[ix.bn_gamma].value, params_[ix.bn_beta].value, mode, rm, rv,
                                           update_running, &tr.bn[s]);
        if (mode == Mode::kTrain && update_running) {
          buffers_[ix.running_mean].value = rm;
          buffers_[ix.running_var].value = rv;
        }
        tr.gate[s] = Sigmoid(params_[ix.gate].value(0, 0));
        tr.lstm_in.middleCols(static_cast<Eigen::Index>(s) * cfg_.conv_channels, cfg_.conv_channels) =
            tr.gate[s] * tr.normed[s];
      }
    }

    tr.final_hidden = LstmForward<S>(tr.lstm_in, in.shape, params_[lstm_wx_].value, params_[lstm_wh_].value,
                                     params_[lstm_b_].value, &tr.lstm);
    const Mat<S> *features = &tr.final_hidden;
    if (cfg_.arch == Arch::kConvLstm) {
      tr.embed = LinearForward<S>(tr.final_hidden, params_[embed_w_].value, params_[embed_b_].value)
                     .cwiseMax(S(0));
      features = &tr.embed;
    }
    tr.out.any = SigmoidArray(LinearForward<S>(*features, params_[any_w_].value, params_[any_b_].value));
    tr.out.types = SigmoidArray(LinearForward<S>(*features, params_[types_w_].value, params_[types_b_].value));
    if (trace) return tr.out;
    return std::move(tr.out);
  }

  /// Accumulates parameter gradients given dL/d(probability) for both heads.
  /// Returns dL/d(input) per stream, or nothing when `input_grads` is false.
  std::vector<Mat<S>> Backward(const ForwardTrace<S> &tr, const Mat<S> &d_any, const Mat<S> &d_types,
                               bool input_grads = true) {
    DenormalGuard ftz;
    if (tr.version != version_) throw Error("Model::Backward: stale trace");
    const Mat<S> g_any = (d_any.array() * tr.out.any.array() * (S(1) - tr.out.any.array())).matrix();
    const Mat<S> g_types = (d_types.array() * tr.out.types.array() * (S(1) - tr.out.types.array())).matrix();
    const Mat<S> &features = cfg_.arch == Arch::kConvLstm ? tr.embed : tr.final_hidden;
    Mat<S> d_features = LinearBackward<S>(g_any, features, params_[any_w_].value, params_[any_w_].grad, RowGrad(any_b_));
    d_features += LinearBackward<S>(g_types, features, params_[types_w_].value, params_[types_w_].grad,
                                    RowGrad(types_b_));
    Mat<S> d_hidden;
    if (cfg_.arch == Arch::kConvLstm) {
      const Mat<S> d_pre = (d_features.array() * (tr.embed.array() > S(0)).template cast<S>()).matrix();
      d_hidden = LinearBackward<S>(d_pre, tr.final_hidden, params_[embed_w_].value, params_[embed_w_].grad,
                                   RowGrad(embed_b_));
    } else {
      d_hidden = std::move(d_features);
    }
    const bool need_dx = input_grads || cfg_.arch == Arch::kConvLstm;
    const Mat<S> d_lstm_in =
        LstmBackward<S>(d_hidden, tr.lstm, tr.lstm_in, params_[lstm_wx_].value, params_[lstm_wh_].value,
                        params_[lstm_wx_].grad, params_[lstm_wh_].grad, RowGrad(lstm_b_), need_dx);
    std::vector<Mat<S>> d_inputs;
    if (cfg_.arch == Arch::kLstm) {
      if (!input_grads) return d_inputs;
      int col = 0;
      for (StreamName s : cfg_.streams) {
        const int d = static_cast<int>(StreamDims(s));
        d_inputs.push_back(d_lstm_in.middleCols(col, d));
        col += d;
      }
      return d_inputs;
    }
    for (size_t s = 0; s < cfg_.streams.size(); ++s) {
      const StreamIdx &ix = stream_idx_[s];
      const Mat<S> d_gated = d_lstm_in.middleCols(static_cast<Eigen::Index>(s) * cfg_.conv_channels, cfg_.conv_channels);
      const S g = tr.gate[s];
      params_[ix.gate].grad(0, 0) += g * (S(1) - g) * (d_gated.array() * tr.normed[s].array()).sum();
      const Mat<S> d_normed = g * d_gated;
      const Mat<S> d_conv = BatchNormBackward<S>(d_normed, tr.bn[s], params_[ix.bn_gamma].value,
                                                 RowGrad(ix.bn_gamma), RowGrad(ix.bn_beta));
      d_inputs.push_back(Conv1dBackward<S>(d_conv, tr.conv[s], params_[ix.conv_w].value, params_[ix.conv_w].grad,
                                           nullptr, input_grads));
    }
    return d_inputs;
  }

  // Builds a model with the same layout from another precision.
  template <class T>
  Model<T> Cast() const {
    Model<T> m;
    m.AdoptLayout(cfg_);
    for (size_t i = 0; i < params_.size(); ++i) m.params()[i].value = params_[i].value.template cast<T>();
    for (size_t i = 0; i < buffers_.size(); ++i) m.buffers()[i].value = buffers_[i].value.template cast<T>();
    return m;
  }

  /// Allocates parameters for `cfg` without initializing values.
  void AdoptLayout(const ArchConfig &cfg) {
    cfg_ = cfg;
    Build();
  }

 private:
  struct StreamIdx {
    size_t conv_w = 0, bn_gamma = 0, bn_beta = 0, gate = 0, running_mean = 0, running_var = 0;
  };

  Mat<S> &RowGrad(size_t i) { return params_[i].grad; }

  size_t Index(const std::string &name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("Model: no parameter named '" + name + "'");
    return it->second;
  }

  size_t Add(const std::string &name, std::vector<int64_t> shape, int64_t rows, int64_t cols) {
    Parameter<S> p;
    p.name = name;
    p.shape = std::move(shape);
    p.value = Mat<S>::Zero(rows, cols);
    p.grad = Mat<S>::Zero(rows, cols);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  size_t AddBuffer(const std::string &name, int64_t cols, S fill) {
    Parameter<S> p;
    p.name = name;
    p.shape = {cols};
    p.value = Mat<S>::Constant(1, cols, fill);
    buffers_.push_back(std::move(p));
    return buffers_.size() - 1;
  }

  void Build() {
    params_.clear();
    buffers_.clear();
    index_.clear();
    stream_idx_.clear();
    const int H = cfg_.hidden, C = cfg_.conv_channels;
    if (H <= 0 || C <= 0 || cfg_.embed <= 0) throw Error("Model: layer widths must be positive");
    if (cfg_.arch == Arch::kConvLstm) {
      for (StreamName s : cfg_.streams) {
        const std::string tag = StreamLabel(s);
        const int k = ArchConfig::KernelFor(s), D = static_cast<int>(StreamDims(s));
        StreamIdx ix;
        ix.conv_w = Add("conv." + tag + ".w", {k, D, C}, int64_t{k} * D, C);
        ix.bn_gamma = Add("bn." + tag + ".gamma", {C}, 1, C);
        ix.bn_beta = Add("bn." + tag + ".beta", {C}, 1, C);
        ix.gate = Add("gate." + tag, {1}, 1, 1);
        ix.running_mean = AddBuffer("bn." + tag + ".running_mean", C, S(0));
        ix.running_var = AddBuffer("bn." + tag + ".running_var", C, S(1));
        stream_idx_.push_back(ix);
      }
    }
    const int I = cfg_.input_dims();
    lstm_wx_ = Add("lstm.wx", {I, 4 * H}, I, 4 * H);
    lstm_wh_ = Add("lstm.wh", {H, 4 * H}, H, 4 * H);
    lstm_b_ = Add("lstm.b", {4 * H}, 1, 4 * H);
    int head_in = H;
    if (cfg_.arch == Arch::kConvLstm) {
      embed_w_ = Add("embed.w", {H, cfg_.embed}, H, cfg_.embed);
      embed_b_ = Add("embed.b", {cfg_.embed}, 1, cfg_.embed);
      head_in = cfg_.embed;
    }
    any_w_ = Add("head_any.w", {head_in, 1}, head_in, 1);
    any_b_ = Add("head_any.b", {1}, 1, 1);
    types_w_ = Add("head_types.w", {head_in, int64_t{kNumEventTypes}}, head_in, kNumEventTypes);
    types_b_ = Add("head_types.b", {int64_t{kNumEventTypes}}, 1, kNumEventTypes);
    ++version_;
  }

  static void XavierFill(Mat<S> &w, double fan_in, double fan_out, Rng &rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(rng.Uniform(-limit, limit));
  }

  void Initialize(uint64_t seed) {
    Rng rng(seed);
    const int H = cfg_.hidden;
    for (size_t s = 0; s < stream_idx_.size(); ++s) {
      const StreamIdx &ix = stream_idx_[s];
      const int k = ArchConfig::KernelFor(cfg_.streams[s]);
      const double D = static_cast<double>(StreamDims(cfg_.streams[s]));
      XavierFill(params_[ix.conv_w].value, k * D, cfg_.conv_channels, rng);
      params_[ix.bn_gamma].value.setOnes();
    }
    // Each gate block of the LSTM is initialized as its own I x H matrix.
    XavierFill(params_[lstm_wx_].value, cfg_.input_dims(), H, rng);
    XavierFill(params_[lstm_wh_].value, H, H, rng);
    params_[lstm_b_].value.middleCols(H, H).setOnes();
    if (cfg_.arch == Arch::kConvLstm) XavierFill(params_[embed_w_].value, H, cfg_.embed, rng);
    XavierFill(params_[any_w_].value, params_[any_w_].value.rows(), 1, rng);
    XavierFill(params_[types_w_].value, params_[types_w_].value.rows(), kNumEventTypes, rng);
    ++version_;
  }

  void CheckInput(const BatchInput<S> &in) const {
    if (in.streams.size() != cfg_.streams.size())
      throw InputError("architecture/stream mismatch: model expects " + std::to_string(cfg_.streams.size()) +
                       " streams, got " + std::to_string(in.streams.size()));
    if (in.shape.batch < 1 || in.shape.frames < 1) throw Error("Model: empty batch");
    for (size_t s = 0; s < in.streams.size(); ++s) {
      if (in.streams[s].rows() != in.shape.rows() ||
          in.streams[s].cols() != static_cast<Eigen::Index>(StreamDims(cfg_.streams[s])))
        throw InputError("architecture/stream mismatch: stream " + StreamLabel(cfg_.streams[s]) +
                         " has the wrong shape");
    }
  }

  template <class T>
  friend class Model;

  ArchConfig cfg_;
  std::vector<Parameter<S>> params_;
  std::vector<Parameter<S>> buffers_;
  std::map<std::string, size_t> index_;
  std::vector<StreamIdx> stream_idx_;
  size_t lstm_wx_ = 0, lstm_wh_ = 0, lstm_b_ = 0, embed_w_ = 0, embed_b_ = 0;
  size_t any_w_ = 0, any_b_ = 0, types_w_ = 0, types_b_ = 0;
  uint64_t version_ = 0;
};

}  // namespace sepkit::nn

#endif  // SEPKIT_NN_MODEL_HPP_
