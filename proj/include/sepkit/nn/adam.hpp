// sepkit/nn/adam.hpp

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

#ifndef SEPKIT_NN_ADAM_HPP_
#define SEPKIT_NN_ADAM_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "sepkit/nn/model.hpp"

namespace sepkit::nn {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class S>
class Adam {
 public:
  Adam() = default;
  Adam(const Model<S> &model, const AdamConfig &cfg) : cfg_(cfg) {
    for (const auto &p : model.params()) {
      m_.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
    }
  }

  int64_t step() const { return step_; }
  const std::vector<Mat<S>> &first_moments() const { return m_; }
  const std::vector<Mat<S>> &second_moments() const { return v_; }

  /// Applies one bias-corrected update from the accumulated gradients. A
  /// non-finite gradient aborts the step before anything is modified.
  void Step(Model<S> &model) {
    auto &params = model.params();
    if (params.size() != m_.size()) throw Error("Adam: optimizer does not match the model");
    for (const auto &p : params) {
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())
        throw Error("Adam: gradient shape mismatch for " + p.name);
      if (!p.grad.allFinite()) throw Error("Adam: non-finite gradient in " + p.name + "; step aborted");
    }
    ++step_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    const S step_size = static_cast<S>(cfg_.lr / c1);
    const S inv_sqrt_c2 = static_cast<S>(1.0 / std::sqrt(c2));
    const S eps = static_cast<S>(cfg_.epsilon);
    for (size_t i = 0; i < params.size(); ++i) {
      auto g = params[i].grad.array();
      m_[i].array() = b1 * m_[i].array() + (S(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (S(1) - b2) * g.square();
      params[i].value.array() -= step_size * m_[i].array() / (v_[i].array().sqrt() * inv_sqrt_c2 + eps);
    }
    model.Touch();
  }

 private:
  AdamConfig cfg_;
  std::vector<Mat<S>> m_, v_;
  int64_t step_ = 0;
};

}  // namespace sepkit::nn

#endif  // SEPKIT_NN_ADAM_HPP_
