// sepkit/losses.hpp

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

// Training objectives. Every loss returns its value together with the
// gradient with respect to the predicted probabilities.

#ifndef SEPKIT_LOSSES_HPP_
#define SEPKIT_LOSSES_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "sepkit/annotations.hpp"
#include "sepkit/nn/layers.hpp"
#include "sepkit/util.hpp"

namespace sepkit {

constexpr double kProbClip = 1e-7;

inline double ClipProb(double p) { return std::clamp(p, kProbClip, 1.0 - kProbClip); }
inline bool InsideClip(double p) { return p > kProbClip && p < 1.0 - kProbClip; }

inline double BinaryXent(double p, int y) {
  const double q = ClipProb(p);
  return -(y ? std::log(q) : std::log(1.0 - q));
}

// d/dp; zero where the probability is clipped.
inline double BinaryXentGrad(double p, int y) {
  if (!InsideClip(p)) return 0.0;
  return y ? -1.0 / p : 1.0 / (1.0 - p);
}

inline double FocalWeightedXent(double p, int y, double gamma, double w_pos, double w_neg) {
  const double q = ClipProb(p);
  const double pt = y ? q : 1.0 - q;
  const double w = y ? w_pos : w_neg;
  return -w * std::pow(1.0 - pt, gamma) * std::log(pt);
}

inline double FocalWeightedXentGrad(double p, int y, double gamma, double w_pos, double w_neg) {
  if (!InsideClip(p)) return 0.0;
  const double pt = y ? p : 1.0 - p;
  const double w = y ? w_pos : w_neg;
  // d/dpt of -(1-pt)^g log pt
  double d = -std::pow(1.0 - pt, gamma) / pt;
  if (gamma != 0.0) d += gamma * std::pow(1.0 - pt, gamma - 1.0) * std::log(pt);
  return w * d * (y ? 1.0 : -1.0);
}

/// Concordance correlation coefficient with population moments, and its
/// gradient with respect to x.
struct CccResult {
  double ccc = 0.0;
  std::vector<double> grad;  // dCCC/dx_i
};

inline CccResult Concordance(std::span<const double> x, std::span<const double> y) {
  const size_t n = x.size();
  if (n < 2 || y.size() != n) throw Error("Concordance: need two aligned vectors of length >= 2");
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, cov = 0;
  for (size_t i = 0; i < n; ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cov += (x[i] - mx) * (y[i] - my);
  }
  vx /= n;
  vy /= n;
  cov /= n;
  const double shift = (mx - my) * (mx - my);
  const double denom = vx + vy + shift;
  CccResult r;
  r.grad.assign(n, 0.0);
  if (denom < 1e-8) {
    r.ccc = shift < 1e-12 ? 1.0 : 0.0;
    return r;
  }
  const double num = 2.0 * cov;
  r.ccc = num / denom;
  for (size_t i = 0; i < n; ++i) {
    const double dnum = 2.0 * (y[i] - my) / n;
    const double dden = 2.0 * (x[i] - mx) / n + 2.0 * (mx - my) / n;
    r.grad[i] = (dnum * denom - num * dden) / (denom * denom);
  }
  return r;
}

// ---------------------------------------------------------------------------

enum class LossMode { kStl, kMtl, kImproved };

inline std::string LossModeName(LossMode m) {
  switch (m) {
    case LossMode::kStl: return "stl";
    case LossMode::kMtl: return "mtl";
    case LossMode::kImproved: return "improved";
  }
  return "?";
}

inline LossMode ParseLossMode(const std::string &s) {
  if (s == "stl") return LossMode::kStl;
  if (s == "mtl") return LossMode::kMtl;
  if (s == "improved") return LossMode::kImproved;
  throw InputError("unknown loss mode '" + s + "' (expected stl, mtl or improved)");
}

struct LossConfig {
  LossMode mode = LossMode::kImproved;
  double focal_gamma = 2.0;
  double w_pos = 1.0;     // any-branch class weights for the focal term
  double w_neg = 1.0;
  double task_mix = 0.5;  // weight of the any-branch term in improved mode
  int stl_label = -1;     // STL target: -1 = any branch, 0..4 = one type head
};

/// Targets for a batch, one row per clip.
struct BatchTargets {
  std::vector<int> any;
  std::vector<std::array<int, kNumEventTypes>> hard;
  std::vector<std::array<double, kNumEventTypes>> soft;

  size_t size() const { return any.size(); }
  void push_back(const ClipTargets &t) {
    any.push_back(t.any);
    hard.push_back(t.hard);
    soft.push_back(t.soft);
  }
};

template <class S>
struct LossValue {
  double total = 0.0;
  double any_term = 0.0;   // contribution of the any branch
  double type_term = 0.0;  // contribution of the type heads
  nn::Mat<S> d_any;        // B x 1, dL/dp
  nn::Mat<S> d_types;      // B x 5, dL/dp
};

/// Batch loss; per-clip terms are averaged over the batch.
template <class S>
LossValue<S> TotalLoss(const nn::Mat<S> &p_any, const nn::Mat<S> &p_types, const BatchTargets &tg,
                       const LossConfig &cfg) {
  const Eigen::Index B = p_any.rows();
  if (static_cast<size_t>(B) != tg.size() || p_types.rows() != B || p_types.cols() != kNumEventTypes)
    throw Error("TotalLoss: outputs and targets are not aligned");
  if (cfg.focal_gamma < 0 || cfg.w_pos <= 0 || cfg.w_neg <= 0 || cfg.task_mix < 0 || cfg.task_mix > 1)
    throw Error("TotalLoss: invalid loss configuration");
  LossValue<S> v;
  v.d_any = nn::Mat<S>::Zero(B, 1);
  v.d_types = nn::Mat<S>::Zero(B, kNumEventTypes);
  const double inv_b = 1.0 / static_cast<double>(B);

  switch (cfg.mode) {
    case LossMode::kStl: {
      if (cfg.stl_label < -1 || cfg.stl_label >= static_cast<int>(kNumEventTypes))
        throw Error("TotalLoss: STL label out of range");
      for (Eigen::Index b = 0; b < B; ++b) {
        if (cfg.stl_label < 0) {
          const double p = p_any(b, 0);
          v.any_term += inv_b * BinaryXent(p, tg.any[b]);
          v.d_any(b, 0) = static_cast<S>(inv_b * BinaryXentGrad(p, tg.any[b]));
        } else {
          const int l = cfg.stl_label;
          const double p = p_types(b, l);
          v.type_term += inv_b * BinaryXent(p, tg.hard[b][l]);
          v.d_types(b, l) = static_cast<S>(inv_b * BinaryXentGrad(p, tg.hard[b][l]));
        }
      }
      break;
    }
    case LossMode::kMtl: {
      const double per_label = inv_b / kNumEventTypes;
      for (Eigen::Index b = 0; b < B; ++b) {
        v.any_term += inv_b * BinaryXent(p_any(b, 0), tg.any[b]);
        v.d_any(b, 0) = static_cast<S>(inv_b * BinaryXentGrad(p_any(b, 0), tg.any[b]));
        for (size_t l = 0; l < kNumEventTypes; ++l) {
          const double p = p_types(b, l);
          v.type_term += per_label * BinaryXent(p, tg.hard[b][l]);
          v.d_types(b, l) = static_cast<S>(per_label * BinaryXentGrad(p, tg.hard[b][l]));
        }
      }
      break;
    }
    case LossMode::kImproved: {
      if (B < 2) throw Error("TotalLoss: the CCC term needs a batch of at least two clips");
      const double lam = cfg.task_mix;
      for (Eigen::Index b = 0; b < B; ++b) {
        const double p = p_any(b, 0);
        v.any_term += lam * inv_b * FocalWeightedXent(p, tg.any[b], cfg.focal_gamma, cfg.w_pos, cfg.w_neg);
        v.d_any(b, 0) = static_cast<S>(
            lam * inv_b * FocalWeightedXentGrad(p, tg.any[b], cfg.focal_gamma, cfg.w_pos, cfg.w_neg));
      }
      std::vector<double> x(B), y(B);
      for (size_t l = 0; l < kNumEventTypes; ++l) {
        for (Eigen::Index b = 0; b < B; ++b) {
          x[b] = p_types(b, l);
          y[b] = tg.soft[b][l];
        }
        const CccResult c = Concordance(x, y);
        v.type_term += (1.0 - lam) * (1.0 - c.ccc) / kNumEventTypes;
        for (Eigen::Index b = 0; b < B; ++b)
          v.d_types(b, l) = static_cast<S>(-(1.0 - lam) * c.grad[b] / kNumEventTypes);
      }
      break;
    }
  }
  v.total = v.any_term + v.type_term;
  return v;
}

/// Mean of (1 - CCC) over the five type labels.
inline double CccLoss(const nn::Mat<double> &pred, const nn::Mat<double> &target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw Error("CccLoss: shape mismatch");
  double loss = 0.0;
  std::vector<double> x(pred.rows()), y(pred.rows());
  for (Eigen::Index l = 0; l < pred.cols(); ++l) {
    for (Eigen::Index b = 0; b < pred.rows(); ++b) {
      x[b] = pred(b, l);
      y[b] = target(b, l);
    }
    loss += 1.0 - Concordance(x, y).ccc;
  }
  return loss / static_cast<double>(pred.cols());
}

}  // namespace sepkit

#endif  // SEPKIT_LOSSES_HPP_
