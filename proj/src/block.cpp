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

#include "specdraft/block.hpp"

#include "specdraft/kernels.hpp"
#include "specdraft/ops.hpp"

#include <cmath>
#include <vector>

namespace specdraft {

namespace {

RowMatrix<float> normal_matrix(Index rows, Index cols, double stddev, Rng& rng) {
  RowMatrix<float> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal(0.0, stddev));
  return m;
}

Tensor<float> param(RowMatrix<float> m) { return Tensor<float>::from(std::move(m), true); }

Tensor<float> ones_row(Index n) { return param(RowMatrix<float>::Ones(1, n)); }
Tensor<float> zeros_row(Index n) { return param(RowMatrix<float>::Zero(1, n)); }

}  // namespace

Linear Linear::init(Index in, Index out, bool with_bias, double stddev, Rng& rng) {
  Linear l;
  l.weight = param(normal_matrix(in, out, stddev, rng));
  if (with_bias) l.bias = zeros_row(out);
  return l;
}

Linear Linear::zeros(Index in, Index out, bool with_bias) {
  Linear l;
  l.weight = param(RowMatrix<float>::Zero(in, out));
  if (with_bias) l.bias = zeros_row(out);
  return l;
}

void Linear::collect(const std::string& prefix, ParamList<float>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

Tensor<float> Linear::operator()(const Tensor<float>& x) const {
  auto y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

DecoderBlock DecoderBlock::init(Index d_model, Index ff_width, double stddev, double out_stddev, Rng& rng) {
  DecoderBlock b;
  b.ln1_gain = ones_row(d_model);
  b.ln1_bias = zeros_row(d_model);
  b.wq = Linear::init(d_model, d_model, false, stddev, rng);
  b.wk = Linear::init(d_model, d_model, false, stddev, rng);
  b.wv = Linear::init(d_model, d_model, false, stddev, rng);
  b.wo = Linear::init(d_model, d_model, false, out_stddev, rng);
  b.ln2_gain = ones_row(d_model);
  b.ln2_bias = zeros_row(d_model);
  b.ff_in = Linear::init(d_model, ff_width, true, stddev, rng);
  b.ff_out = Linear::init(ff_width, d_model, true, out_stddev, rng);
  return b;
}

void DecoderBlock::collect(const std::string& prefix, ParamList<float>& out) const {
  out.push_back({prefix + ".ln1.gain", ln1_gain});
  out.push_back({prefix + ".ln1.bias", ln1_bias});
  wq.collect(prefix + ".attn.q", out);
  wk.collect(prefix + ".attn.k", out);
  wv.collect(prefix + ".attn.v", out);
  wo.collect(prefix + ".attn.o", out);
  out.push_back({prefix + ".ln2.gain", ln2_gain});
  out.push_back({prefix + ".ln2.bias", ln2_bias});
  ff_in.collect(prefix + ".ff.in", out);
  ff_out.collect(prefix + ".ff.out", out);
}

Index DecoderBlock::param_count(Index d, Index ff) { return 4 * d + 4 * d * d + 2 * d * ff + ff + d; }

Tensor<float> DecoderBlock::forward(const Tensor<float>& x, Index n_heads, Index group_len) const {
  auto h = layer_norm(x, ln1_gain, ln1_bias);
  auto attn = causal_attention(wq(h), wk(h), wv(h), n_heads, group_len);
  auto x1 = add(x, wo(attn));
  auto h2 = layer_norm(x1, ln2_gain, ln2_bias);
  return add(x1, ff_out(silu(ff_in(h2))));
}

RowMatrix<float> layer_norm_decode(const RowMatrix<float>& x, const Tensor<float>& gain, const Tensor<float>& bias) {
  RowMatrix<float> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    kernels::layer_norm_row(x.row(r).data(), x.cols(), gain.value().data(), bias.value().data(), 1e-5f,
                            y.row(r).data());
  }
  return y;
}

RowMatrix<float> linear_decode(const RowMatrix<float>& x, const Linear& layer) {
  RowMatrix<float> y(x.rows(), layer.out_features());
  kernels::linear_rows(x.data(), x.rows(), layer.weight.value(),
                       layer.bias.defined() ? layer.bias.value().data() : nullptr, y.data());
  return y;
}

void block_decode(const DecoderBlock& block, Index n_heads, RowMatrix<float>& x, Index start, LayerCache& cache) {
  const Index n = x.rows();
  const Index d = x.cols();
  const Index hd = d / n_heads;
  if (start + n > cache.capacity()) throw ShapeError("block_decode: cache capacity exceeded");
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  RowMatrix<float> h = layer_norm_decode(x, block.ln1_gain, block.ln1_bias);
  RowMatrix<float> q = linear_decode(h, block.wq);
  cache.keys.middleRows(start, n) = linear_decode(h, block.wk);
  cache.values.middleRows(start, n) = linear_decode(h, block.wv);

  RowMatrix<float> attn = RowMatrix<float>::Zero(n, d);
  std::vector<float> scores(static_cast<std::size_t>(start + n));
  for (Index r = 0; r < n; ++r) {
    const Index pos = start + r;
    for (Index head = 0; head < n_heads; ++head) {
      const float* qr = q.row(r).data() + head * hd;
      for (Index j = 0; j <= pos; ++j) {
        scores[static_cast<std::size_t>(j)] = kernels::dot(qr, cache.keys.row(j).data() + head * hd, hd) * scale;
      }
      kernels::softmax_inplace(scores.data(), pos + 1);
      float* out = attn.row(r).data() + head * hd;
      for (Index j = 0; j <= pos; ++j) {
        kernels::axpy(scores[static_cast<std::size_t>(j)], cache.values.row(j).data() + head * hd, out, hd);
      }
    }
  }
  x += linear_decode(attn, block.wo);
  RowMatrix<float> h2 = layer_norm_decode(x, block.ln2_gain, block.ln2_bias);
  RowMatrix<float> f = linear_decode(h2, block.ff_in);
  kernels::silu_inplace(f.data(), f.size());
  x += linear_decode(f, block.ff_out);
}

}  // namespace specdraft
