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

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace nbv {

/// Dense (channels, nx, ny, nz) tensor of 64-bit reals, row-major in that
/// axis order.
struct Tensor4 {
  int channels = 0, nx = 0, ny = 0, nz = 0;
  std::vector<double> data;

  Tensor4() = default;
  Tensor4(int c, int x, int y, int z)
      : channels(c), nx(x), ny(y), nz(z),
        data(static_cast<std::size_t>(c) * x * y * z, 0.0) {
    if (c < 1 || x < 1 || y < 1 || z < 1)
      throw std::invalid_argument("tensor dims must be >= 1");
  }

  std::size_t size() const { return data.size(); }
  std::size_t spatial_size() const {
    return static_cast<std::size_t>(nx) * ny * nz;
  }

  std::size_t index(int c, int x, int y, int z) const {
    return ((static_cast<std::size_t>(c) * nx + x) * ny + y) * nz + z;
  }
  double& at(int c, int x, int y, int z) { return data[index(c, x, y, z)]; }
  double at(int c, int x, int y, int z) const { return data[index(c, x, y, z)]; }

  bool same_shape(const Tensor4& o) const {
    return channels == o.channels && nx == o.nx && ny == o.ny && nz == o.nz;
  }
};

}  // namespace nbv
