/*
 * Copyright 2026 The nbvkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <vector>

namespace nbv {

/// One supervised example: a grid snapshot (occupancy probabilities,
/// x-major, edge^3 values) labeled with the class of the optimal next view,
/// plus provenance.
struct Example {
  std::uint32_t object_id = 0;
  std::uint32_t run_id = 0;
  std::uint16_t iteration = 0;
  std::uint8_t label = 0;
  std::vector<float> grid;
};

}  // namespace nbv
