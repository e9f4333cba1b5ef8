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

#include "specdraft/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace specdraft {

void ProbDist::validate(double tol) const {
  if (probs.empty()) throw InvalidDistribution("distribution is empty");
  double total = 0;
  for (double p : probs) {
    if (!(p >= 0) || !std::isfinite(p)) throw InvalidDistribution("distribution has a negative or non-finite entry");
    total += p;
  }
  if (std::abs(total - 1.0) > tol) {
    throw InvalidDistribution("distribution sums to " + std::to_string(total));
  }
}

ProbDist softmax_dist(std::span<const float> logits) {
  if (logits.empty()) throw InvalidDistribution("softmax of empty logits");
  double mx = logits[0];
  for (float v : logits) mx = std::max(mx, static_cast<double>(v));
  std::vector<double> p(logits.size());
  double total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - mx);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return ProbDist(std::move(p));
}

int argmax(const ProbDist& dist) {
  if (dist.probs.empty()) throw InvalidDistribution("argmax of empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.size(); ++i) {
    if (dist.probs[i] > dist.probs[best]) best = i;
  }
  return static_cast<int>(best);
}

int sample_categorical(std::span<const double> probs, double u) {
  double total = 0;
  for (double p : probs) total += p;
  if (!(total > 0)) throw InvalidDistribution("cannot sample from an all-zero distribution");
  const double target = u * total;
  double cum = 0;
  int last_nonzero = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0) continue;
    cum += probs[i];
    last_nonzero = static_cast<int>(i);
    if (target < cum) return last_nonzero;
  }
  return last_nonzero;
}

ProbDist tempered(const ProbDist& dist, double temperature) {
  if (temperature < 0) throw std::invalid_argument("temperature must be >= 0");
  if (temperature == 0) {
    std::vector<double> onehot(dist.size(), 0.0);
    onehot[static_cast<std::size_t>(argmax(dist))] = 1.0;
    return ProbDist(std::move(onehot));
  }
  if (temperature == 1) return dist;
  std::vector<double> logp(dist.size());
  double mx = -INFINITY;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    logp[i] = dist.probs[i] > 0 ? std::log(dist.probs[i]) / temperature : -INFINITY;
    mx = std::max(mx, logp[i]);
  }
  double total = 0;
  for (double& v : logp) {
    v = std::isinf(v) ? 0.0 : std::exp(v - mx);
    total += v;
  }
  for (double& v : logp) v /= total;
  return ProbDist(std::move(logp));
}

int sample_token(const ProbDist& dist, double temperature, Rng& rng) {
  if (temperature < 0) throw std::invalid_argument("temperature must be >= 0");
  if (temperature == 0) return argmax(dist);
  if (temperature == 1) return sample_categorical(dist.probs, rng.uniform());
  const ProbDist t = tempered(dist, temperature);
  return sample_categorical(t.probs, rng.uniform());
}

}  // namespace specdraft
