/* Copyright 2026 The specdraft Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include "specdraft/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace specdraft {

template <typename S>
struct NamedTensor {
  std::string name;
  Tensor<S> tensor;
};

template <typename S>
using ParamList = std::vector<NamedTensor<S>>;

// FNV-1a over parameter names, shapes and raw value bytes.
template <typename S>
std::uint64_t params_hash(const ParamList<S>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : params) {
    mix(p.name.data(), p.name.size());
    const Index r = p.tensor.rows(), c = p.tensor.cols();
    mix(&r, sizeof r);
    mix(&c, sizeof c);
    mix(p.tensor.value().data(), sizeof(S) * static_cast<std::size_t>(p.tensor.numel()));
  }
  return h;
}

template <typename S>
Index count_parameters(const ParamList<S>& params, bool trainable_only = true) {
  Index n = 0;
  for (const auto& p : params) {
    if (!trainable_only || p.tensor.requires_grad()) n += p.tensor.numel();
  }
  return n;
}

enum class OptimizerKind { sgd, adam };

struct OptimizerOptions {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // global gradient-norm clip; 0 disables

  void validate() const {
    if (!(learning_rate > 0)) throw std::invalid_argument("optimizer: learning_rate must be > 0");
    if (!(beta1 > 0 && beta1 < 1)) throw std::invalid_argument("optimizer: beta1 must lie in (0,1)");
    if (!(beta2 > 0 && beta2 < 1)) throw std::invalid_argument("optimizer: beta2 must lie in (0,1)");
    if (!(eps > 0)) throw std::invalid_argument("optimizer: eps must be > 0");
    if (clip_norm < 0) throw std::invalid_argument("optimizer: clip_norm must be >= 0");
  }
};

struct MissingGradError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// SGD or bias-corrected Adam over a fixed parameter list. Gradients are
// cleared after every step, so each step needs a fresh backward.
template <typename S>
class Optimizer {
 public:
  Optimizer(OptimizerOptions options, ParamList<S> params) : options_(options), params_(std::move(params)) {
    options_.validate();
    if (options_.kind == OptimizerKind::adam) {
      for (const auto& p : params_) {
        first_.push_back(RowMatrix<double>::Zero(p.tensor.rows(), p.tensor.cols()));
        second_.push_back(RowMatrix<double>::Zero(p.tensor.rows(), p.tensor.cols()));
      }
    }
  }

  const OptimizerOptions& options() const { return options_; }
  std::int64_t steps() const { return steps_; }
  void set_learning_rate(double lr) {
    if (!(lr > 0)) throw std::invalid_argument("optimizer: learning_rate must be > 0");
    options_.learning_rate = lr;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.clear_grad();
  }

  // Returns the pre-clip global gradient norm.
  double step() {
    std::string missing;
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) missing += (missing.empty() ? "" : ", ") + p.name;
    }
    if (!missing.empty()) throw MissingGradError("optimizer step: missing gradient for " + missing);

    double sq = 0;
    for (const auto& p : params_) sq += p.tensor.grad().template cast<double>().squaredNorm();
    const double norm = std::sqrt(sq);
    const double clip = (options_.clip_norm > 0 && norm > options_.clip_norm) ? options_.clip_norm / norm : 1.0;

    ++steps_;
    const double lr = options_.learning_rate;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& t = params_[i].tensor;
      RowMatrix<double> g = t.grad().template cast<double>() * clip;
      if (options_.kind == OptimizerKind::sgd) {
        t.mutable_value() -= (lr * g).template cast<S>();
      } else {
        const double b1 = options_.beta1, b2 = options_.beta2;
        first_[i] = b1 * first_[i] + (1 - b1) * g;
        second_[i] = b2 * second_[i] + (1 - b2) * g.cwiseProduct(g);
        const double c1 = 1 - std::pow(b1, static_cast<double>(steps_));
        const double c2 = 1 - std::pow(b2, static_cast<double>(steps_));
        RowMatrix<double> update =
            (first_[i].array() / c1) / ((second_[i].array() / c2).sqrt() + options_.eps) * lr;
        t.mutable_value() -= update.template cast<S>();
      }
      t.clear_grad();
    }
    return norm;
  }

 private:
  OptimizerOptions options_;
  ParamList<S> params_;
  std::vector<RowMatrix<double>> first_, second_;
  std::int64_t steps_ = 0;
};

}  // namespace specdraft
