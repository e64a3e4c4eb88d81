// sepkit/nn/layers.hpp

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

// Layers with hand-written backward passes.
//
// Sequence batches are stored as one (T*B) x D row-major matrix whose row
// t*B + b holds frame t of clip b, so a time shift is a shift by B rows and
// every per-frame projection is a single GEMM.

#ifndef SEPKIT_NN_LAYERS_HPP_
#define SEPKIT_NN_LAYERS_HPP_

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

#include "sepkit/util.hpp"

namespace sepkit::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

struct SeqShape {
  int frames = 0;  // T
  int batch = 0;   // B
  int rows() const { return frames * batch; }
};

// Sets flush-to-zero and denormals-are-zero for the current thread while in
// scope. Gradients that decay through hundreds of forget gates otherwise end
// up in the denormal range, where x86 arithmetic is two orders of magnitude
// slower.
class DenormalGuard {
 public:
#if defined(__SSE__)
  DenormalGuard() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~DenormalGuard() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
 public:
  DenormalGuard(const DenormalGuard &) = delete;
  DenormalGuard &operator=(const DenormalGuard &) = delete;
};

template <class S>
S Sigmoid(S x) {
  // Branches keep exp() from overflowing for large |x|.
  if (x >= 0) return S(1) / (S(1) + std::exp(-x));
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <class Derived>
auto SigmoidArray(const Eigen::MatrixBase<Derived> &x) {
  return x.array().logistic().matrix();
}

// ---------------------------------------------------------------------------
// Temporal convolution with zero "same" padding. The kernel is stored as a
// (k*D) x C matrix whose row j*D + d holds kernel[j][d][:].

template <class S>
struct Conv1dTrace {
  SeqShape shape;
  int kernel = 0;
  Mat<S> cols;  // (T*B) x (k*D) im2col view of the input
};

template <class S>
Mat<S> Conv1dForward(const Mat<S> &x, SeqShape shape, const Mat<S> &weight, const Mat<S> *bias, int kernel,
                     Conv1dTrace<S> *trace) {
  const int D = static_cast<int>(x.cols()), B = shape.batch, T = shape.frames;
  if (kernel <= 0 || kernel % 2 == 0) throw Error("Conv1d: kernel size must be odd");
  if (x.rows() != shape.rows() || weight.rows() != kernel * D)
    throw Error("Conv1d: shape mismatch");
  if (bias && bias->cols() != weight.cols()) throw Error("Conv1d: bias shape mismatch");
  const int half = kernel / 2;
  Mat<S> cols = Mat<S>::Zero(shape.rows(), kernel * D);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < kernel; ++j) {
      const int src = t + j - half;
      if (src < 0 || src >= T) continue;
      cols.block(t * B, j * D, B, D) = x.middleRows(src * B, B);
    }
  }
  Mat<S> y = cols * weight;
  if (bias) y.rowwise() += bias->row(0);
  if (trace) {
    trace->shape = shape;
    trace->kernel = kernel;
    trace->cols = std::move(cols);
  }
  return y;
}

/// Accumulates into dweight/dbias; returns dL/dx (empty if `input_grad` is
/// false).
template <class S>
Mat<S> Conv1dBackward(const Mat<S> &dy, const Conv1dTrace<S> &trace, const Mat<S> &weight, Mat<S> &dweight,
                      Mat<S> *dbias, bool input_grad = true) {
  dweight.noalias() += trace.cols.transpose() * dy;
  if (dbias) dbias->row(0) += dy.colwise().sum();
  if (!input_grad) return {};
  const Mat<S> dcols = dy * weight.transpose();
  const int B = trace.shape.batch, T = trace.shape.frames, k = trace.kernel;
  const int D = static_cast<int>(weight.rows()) / k, half = k / 2;
  Mat<S> dx = Mat<S>::Zero(trace.shape.rows(), D);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < k; ++j) {
      const int src = t + j - half;
      if (src < 0 || src >= T) continue;
      dx.middleRows(src * B, B) += dcols.block(t * B, j * D, B, D);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization over every row (clips and frames) per channel.

enum class Mode { kTrain, kEval };

struct BatchNormConfig {
  double epsilon = 1e-5;
  double momentum = 0.9;  // weight of the old running statistic
};

template <class S>
struct BatchNormTrace {
  Mode mode = Mode::kEval;
  Mat<S> xhat;
  RowVec<S> inv_std;
};

template <class S>
Mat<S> BatchNormForward(const Mat<S> &x, const Mat<S> &gamma, const Mat<S> &beta, Mode mode,
                        Mat<S> &running_mean, Mat<S> &running_var, bool update_running,
                        BatchNormTrace<S> *trace, const BatchNormConfig &cfg = {}) {
  const Eigen::Index n = x.rows();
  const S eps = static_cast<S>(cfg.epsilon);
  RowVec<S> mean, var;
  if (mode == Mode::kTrain) {
    if (n < 2) throw Error("BatchNorm: train mode needs more than one element per channel");
    mean = x.colwise().mean();
    var = (x.rowwise() - mean).array().square().colwise().mean().matrix();
    if (update_running) {
      const S m = static_cast<S>(cfg.momentum);
      const S unbiased = static_cast<S>(n) / static_cast<S>(n - 1);
      running_mean.row(0) = m * running_mean.row(0) + (S(1) - m) * mean;
      running_var.row(0) = m * running_var.row(0) + (S(1) - m) * unbiased * var;
    }
  } else {
    mean = running_mean.row(0);
    var = running_var.row(0);
  }
  const RowVec<S> inv_std = (var.array() + eps).rsqrt().matrix();
  Mat<S> xhat = ((x.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
  Mat<S> y = (xhat.array().rowwise() * gamma.row(0).array()).matrix();
  y.rowwise() += beta.row(0);
  if (trace) {
    trace->mode = mode;
    trace->xhat = std::move(xhat);
    trace->inv_std = inv_std;
  }
  return y;
}

template <class S>
Mat<S> BatchNormBackward(const Mat<S> &dy, const BatchNormTrace<S> &trace, const Mat<S> &gamma,
                         Mat<S> &dgamma, Mat<S> &dbeta) {
  dgamma.row(0) += (dy.array() * trace.xhat.array()).colwise().sum().matrix();
  dbeta.row(0) += dy.colwise().sum();
  const Mat<S> dxhat = (dy.array().rowwise() * gamma.row(0).array()).matrix();
  if (trace.mode == Mode::kEval) return (dxhat.array().rowwise() * trace.inv_std.array()).matrix();
  const S n = static_cast<S>(dy.rows());
  const RowVec<S> sum_dxhat = dxhat.colwise().sum();
  const RowVec<S> sum_dxhat_xhat = (dxhat.array() * trace.xhat.array()).colwise().sum().matrix();
  Mat<S> dx = (n * dxhat.array()).matrix();
  dx.rowwise() -= sum_dxhat;
  dx -= (trace.xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
  return (dx.array().rowwise() * (trace.inv_std.array() / n)).matrix();
}

// ---------------------------------------------------------------------------
// Single-layer unidirectional LSTM returning the final hidden state. Gate
// blocks in the 4H-wide weights are ordered input, forget, candidate, output.

template <class S>
struct LstmTrace {
  SeqShape shape;
  Mat<S> gates;   // (T*B) x 4H, post-activation
  Mat<S> cells;   // (T*B) x H
  Mat<S> tanh_c;  // (T*B) x H
  Mat<S> hidden;  // (T*B) x H
};

template <class S>
Mat<S> LstmForward(const Mat<S> &x, SeqShape shape, const Mat<S> &wx, const Mat<S> &wh, const Mat<S> &b,
                   LstmTrace<S> *trace) {
  const int H = static_cast<int>(wh.rows()), B = shape.batch, T = shape.frames;
  if (T < 1) throw Error("LSTM: need at least one frame");
  if (x.rows() != shape.rows() || wx.rows() != x.cols() || wx.cols() != 4 * H || wh.cols() != 4 * H ||
      b.cols() != 4 * H)
    throw Error("LSTM: shape mismatch");
  Mat<S> gates = x * wx;
  gates.rowwise() += b.row(0);
  Mat<S> cells(shape.rows(), H), tanh_c(shape.rows(), H), hidden(shape.rows(), H);
  Mat<S> h = Mat<S>::Zero(B, H), c = Mat<S>::Zero(B, H);
  for (int t = 0; t < T; ++t) {
    auto a = gates.middleRows(t * B, B);
    a.noalias() += h * wh;
    a.leftCols(2 * H) = SigmoidArray(a.leftCols(2 * H));
    a.middleCols(2 * H, H) = a.middleCols(2 * H, H).array().tanh().matrix();
    a.rightCols(H) = SigmoidArray(a.rightCols(H));
    auto c_t = cells.middleRows(t * B, B);
    auto tc = tanh_c.middleRows(t * B, B);
    c_t = (a.middleCols(H, H).array() * c.array() + a.leftCols(H).array() * a.middleCols(2 * H, H).array()).matrix();
    tc = c_t.array().tanh().matrix();
    hidden.middleRows(t * B, B) = (a.rightCols(H).array() * tc.array()).matrix();
    c = c_t;
    h = hidden.middleRows(t * B, B);
  }
  if (trace) {
    trace->shape = shape;
    trace->gates = std::move(gates);
    trace->cells = std::move(cells);
    trace->tanh_c = std::move(tanh_c);
    trace->hidden = std::move(hidden);
  }
  return h;
}

/// Backpropagation through time from dL/dh_T. `x` is the forward input.
/// Returns dL/dx, or an empty matrix when `input_grad` is false.
template <class S>
Mat<S> LstmBackward(const Mat<S> &dh_final, const LstmTrace<S> &tr, const Mat<S> &x, const Mat<S> &wx,
                    const Mat<S> &wh, Mat<S> &dwx, Mat<S> &dwh, Mat<S> &db, bool input_grad = true) {
  const int H = static_cast<int>(wh.rows()), B = tr.shape.batch, T = tr.shape.frames;
  Mat<S> dpre(tr.shape.rows(), 4 * H);
  Mat<S> dh = dh_final, dc = Mat<S>::Zero(B, H);
  for (int t = T - 1; t >= 0; --t) {
    const auto g = tr.gates.middleRows(t * B, B).array();
    const auto i = g.leftCols(H), f = g.middleCols(H, H), cand = g.middleCols(2 * H, H), o = g.rightCols(H);
    const auto tc = tr.tanh_c.middleRows(t * B, B).array();
    dc.array() += dh.array() * o * (S(1) - tc.square());
    auto d = dpre.middleRows(t * B, B).array();
    d.rightCols(H) = dh.array() * tc * o * (S(1) - o);
    if (t > 0) {
      const auto c_prev = tr.cells.middleRows((t - 1) * B, B).array();
      d.middleCols(H, H) = dc.array() * c_prev * f * (S(1) - f);
    } else {
      d.middleCols(H, H).setZero();
    }
    d.leftCols(H) = dc.array() * cand * i * (S(1) - i);
    d.middleCols(2 * H, H) = dc.array() * i * (S(1) - cand.square());
    dc.array() *= f;
    dh.noalias() = dpre.middleRows(t * B, B) * wh.transpose();
  }
  if (T > 1) {
    const Eigen::Index n = static_cast<Eigen::Index>(T - 1) * B;
    dwh.noalias() += tr.hidden.topRows(n).transpose() * dpre.bottomRows(n);
  }
  dwx.noalias() += x.transpose() * dpre;
  db.row(0) += dpre.colwise().sum();
  if (!input_grad) return {};
  return dpre * wx.transpose();
}

// ---------------------------------------------------------------------------

template <class S>
Mat<S> LinearForward(const Mat<S> &x, const Mat<S> &w, const Mat<S> &b) {
  if (x.cols() != w.rows() || b.cols() != w.cols()) throw Error("Linear: shape mismatch");
  Mat<S> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

template <class S>
Mat<S> LinearBackward(const Mat<S> &dy, const Mat<S> &x, const Mat<S> &w, Mat<S> &dw, Mat<S> &db) {
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  return dy * w.transpose();
}

}  // namespace sepkit::nn

#endif  // SEPKIT_NN_LAYERS_HPP_
