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

#include "specdraft/target.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace specdraft::testing_fixtures {

inline TargetConfig tiny_target_config() {
  TargetConfig c;
  c.d_model = 32;
  c.n_layers = 2;
  c.n_heads = 2;
  c.max_seq_len = 48;
  c.ff_mult = 2;
  return c;
}

inline TargetModel tiny_target(std::uint64_t seed) {
  TargetModel m = TargetModel::init(tiny_target_config(), seed);
  m.freeze();
  return m;
}

inline std::vector<std::uint8_t> periodic_corpus(std::size_t n) {
  const std::string unit = "the cat sat on the mat. the dog ate the log. ";
  std::vector<std::uint8_t> out;
  while (out.size() < n) out.insert(out.end(), unit.begin(), unit.end());
  out.resize(n);
  return out;
}

}  // namespace specdraft::testing_fixtures
