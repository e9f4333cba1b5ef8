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

#include "specdraft/optim.hpp"
#include "specdraft/rng.hpp"
#include "specdraft/tensor.hpp"

#include <string>

namespace specdraft {

// Dense layer y = x W (+ b), W stored input-major (in x out).
struct Linear {
  Tensor<float> weight;
  Tensor<float> bias;  // undefined when the layer has no bias

  static Linear init(Index in, Index out, bool with_bias, double stddev, Rng& rng);
  static Linear zeros(Index in, Index out, bool with_bias);
  void collect(const std::string& prefix, ParamList<float>& out) const;
  Tensor<float> operator()(const Tensor<float>& x) const;
  Index in_features() const { return weight.rows(); }
  Index out_features() const { return weight.cols(); }
};

// Pre-norm transformer layer: x + Attn(LN(x)), then x + FF(LN(x)) with a
// SiLU feedforward.
struct DecoderBlock {
  Tensor<float> ln1_gain, ln1_bias;
  Linear wq, wk, wv, wo;
  Tensor<float> ln2_gain, ln2_bias;
  Linear ff_in, ff_out;

  static DecoderBlock init(Index d_model, Index ff_width, double stddev, double out_stddev, Rng& rng);
  void collect(const std::string& prefix, ParamList<float>& out) const;

  // Rows are grouped into sequences of `group_len` with causal attention
  // inside each group.
  Tensor<float> forward(const Tensor<float>& x, Index n_heads, Index group_len) const;

  static Index param_count(Index d_model, Index ff_width);
};

// Keys and values for decoded positions of one layer.
struct LayerCache {
  RowMatrix<float> keys;
  RowMatrix<float> values;

  LayerCache(Index capacity, Index width) : keys(capacity, width), values(capacity, width) {}
  Index capacity() const { return keys.rows(); }
};

// Gradient-free step for `x.rows()` new positions starting at `start`;
// writes their keys/values into `cache` and updates `x` in place.
void block_decode(const DecoderBlock& block, Index n_heads, RowMatrix<float>& x, Index start, LayerCache& cache);

// Row-wise layer norm of a whole matrix via the decoding kernels.
RowMatrix<float> layer_norm_decode(const RowMatrix<float>& x, const Tensor<float>& gain, const Tensor<float>& bias);

// x W (+ b) via the decoding kernels.
RowMatrix<float> linear_decode(const RowMatrix<float>& x, const Linear& layer);

}  // namespace specdraft
