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

// Gradient-free float kernels for decoding.
//
// Every kernel computes each output row with a fixed operation order that
// does not depend on how many rows are processed together or on buffer
// alignment. This makes a multi-token verification pass bit-identical to
// the same tokens fed one at a time.

#pragma once

#include "specdraft/tensor.hpp"

namespace specdraft::kernels {

// y[r,:] = bias + sum_k x[r,k] * w.row(k), accumulated in k order with fma.
void linear_rows(const float* x, Index n, const RowMatrix<float>& w, const float* bias, float* y);

float dot(const float* a, const float* b, Index n);

// y += a * x
void axpy(float a, const float* x, float* y, Index n);

void layer_norm_row(const float* x, Index n, const float* gain, const float* bias, float eps, float* y);

void silu_inplace(float* x, Index n);

// Stable softmax written back in place.
void softmax_inplace(float* x, Index n);

}  // namespace specdraft::kernels
