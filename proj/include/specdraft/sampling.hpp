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

#include "specdraft/rng.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace specdraft {

struct InvalidDistribution : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Normalized probability vector over the vocabulary.
struct ProbDist {
  std::vector<double> probs;

  ProbDist() = default;
  explicit ProbDist(std::vector<double> p) : probs(std::move(p)) {}

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }

  // Throws InvalidDistribution unless entries are >= 0 and sum to 1 +- tol.
  void validate(double tol = 1e-6) const;

  static ProbDist uniform(std::size_t n) { return ProbDist(std::vector<double>(n, 1.0 / static_cast<double>(n))); }
};

// Softmax of float logits, computed in double.
ProbDist softmax_dist(std::span<const float> logits);

// Lowest index among maximal entries.
int argmax(const ProbDist& dist);

// Sample from `probs` (need not be exactly normalized) by inverse CDF with a
// single uniform draw. Zero-probability entries are never returned.
int sample_categorical(std::span<const double> probs, double u);

// temperature 0: argmax. temperature t > 0: sample from softmax(log(dist) / t).
int sample_token(const ProbDist& dist, double temperature, Rng& rng);

// The distribution sample_token draws from at temperature t (argmax one-hot at 0).
ProbDist tempered(const ProbDist& dist, double temperature);

}  // namespace specdraft
