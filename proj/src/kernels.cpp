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

#include "specdraft/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace specdraft::kernels {

void linear_rows(const float* x, Index n, const RowMatrix<float>& w, const float* bias, float* y) {
  const Index in = w.rows();
  const Index out = w.cols();
  constexpr Index kBlock = 4;
  for (Index r0 = 0; r0 < n; r0 += kBlock) {
    const Index nb = std::min(kBlock, n - r0);
    for (Index rr = 0; rr < nb; ++rr) {
      float* yr = y + (r0 + rr) * out;
      if (bias) {
        std::copy(bias, bias + out, yr);
      } else {
        std::fill(yr, yr + out, 0.0f);
      }
    }
    for (Index k = 0; k < in; ++k) {
      const float* wk = w.data() + k * out;
      for (Index rr = 0; rr < nb; ++rr) {
        const float a = x[(r0 + rr) * in + k];
        float* yr = y + (r0 + rr) * out;
        for (Index j = 0; j < out; ++j) yr[j] = std::fma(a, wk[j], yr[j]);
      }
    }
  }
}

float dot(const float* a, const float* b, Index n) {
  float lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  Index i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) lane[l] = std::fma(a[i + l], b[i + l], lane[l]);
  }
  float tail = 0;
  for (; i < n; ++i) tail = std::fma(a[i], b[i], tail);
  return (((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]))) + tail;
}

void axpy(float a, const float* x, float* y, Index n) {
  for (Index j = 0; j < n; ++j) y[j] = std::fma(a, x[j], y[j]);
}

void layer_norm_row(const float* x, Index n, const float* gain, const float* bias, float eps, float* y) {
  double mean = 0;
  for (Index i = 0; i < n; ++i) mean += x[i];
  mean /= static_cast<double>(n);
  double var = 0;
  for (Index i = 0; i < n; ++i) {
    const double c = x[i] - mean;
    var += c * c;
  }
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  for (Index i = 0; i < n; ++i) {
    y[i] = static_cast<float>((x[i] - mean) * inv) * gain[i] + bias[i];
  }
}

void silu_inplace(float* x, Index n) {
  for (Index i = 0; i < n; ++i) x[i] = x[i] / (1.0f + std::exp(-x[i]));
}

void softmax_inplace(float* x, Index n) {
  float mx = x[0];
  for (Index i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double total = 0;
  for (Index i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - mx);
    total += x[i];
  }
  const float inv = static_cast<float>(1.0 / total);
  for (Index i = 0; i < n; ++i) x[i] *= inv;
}

}  // namespace specdraft::kernels
