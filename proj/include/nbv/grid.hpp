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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "nbv/cloud.hpp"
#include "nbv/common.hpp"
#include "nbv/mesh.hpp"

namespace nbv {

enum class VoxelState { Free, Unknown, Occupied };

inline const char* to_string(VoxelState s) {
  switch (s) {
    case VoxelState::Free: return "free";
    case VoxelState::Unknown: return "unknown";
    case VoxelState::Occupied: return "occupied";
  }
  return "?";
}

/// Uniform probabilistic occupancy grid in log-odds form. A fresh grid is
/// all-unknown (p = 0.5, log-odds 0). Updates integrate perceptions by ray
/// traversal; probabilities stay clamped to [p_min, p_max].
class OccupancyGrid {
 public:
  OccupancyGrid() = default;

  OccupancyGrid(std::array<int, 3> dims, Vec3 origin, double resolution)
      : dims_(dims), origin_(origin), resolution_(resolution) {
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
      throw std::invalid_argument("grid dims must be >= 1");
    if (resolution <= 0.0)
      throw std::invalid_argument("grid resolution must be > 0");
    logodds_.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0.0);
  }

  /// Cube centered on the origin, sized to contain the whole mesh with the
  /// given margin factor.
  static OccupancyGrid for_mesh(const TriangleMesh& mesh, int edge_voxels = 32,
                                double margin = 1.1) {
    const double half = mesh.half_extent() * margin;
    if (half <= 0.0) throw std::invalid_argument("mesh has no extent");
    const double edge = 2.0 * half;
    return OccupancyGrid({edge_voxels, edge_voxels, edge_voxels},
                         Vec3(-half, -half, -half), edge / edge_voxels);
  }

  const std::array<int, 3>& dims() const { return dims_; }
  const Vec3& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  std::size_t voxel_count() const { return logodds_.size(); }

  // Sensor model (log-odds of the standard occupancy mapping defaults).
  double hit_logodds = std::log(0.7 / 0.3);
  double miss_logodds = std::log(0.4 / 0.6);
  double clamp_min = std::log(0.12 / 0.88);
  double clamp_max = std::log(0.97 / 0.03);
  double state_epsilon = 0.01;

  std::size_t flat_index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(ix) * dims_[1] + iy) * dims_[2] + iz;
  }

  bool in_bounds(int ix, int iy, int iz) const {
    return ix >= 0 && ix < dims_[0] && iy >= 0 && iy < dims_[1] && iz >= 0 &&
           iz < dims_[2];
  }

  /// Voxel containing a point, or false when outside.
  bool voxel_of(const Vec3& p, std::array<int, 3>& out) const {
    for (int a = 0; a < 3; ++a) {
      const double f = std::floor((p[a] - origin_[a]) / resolution_);
      if (f < 0.0 || f >= dims_[a]) return false;
      out[a] = static_cast<int>(f);
    }
    return true;
  }

  double logodds_at(int ix, int iy, int iz) const {
    return logodds_[flat_index(ix, iy, iz)];
  }

  double probability_at(int ix, int iy, int iz) const {
    return 1.0 / (1.0 + std::exp(-logodds_at(ix, iy, iz)));
  }

  VoxelState classify(int ix, int iy, int iz) const {
    if (!in_bounds(ix, iy, iz))
      throw std::invalid_argument("voxel index out of bounds");
    const double p = probability_at(ix, iy, iz);
    if (p > 0.5 + state_epsilon) return VoxelState::Occupied;
    if (p < 0.5 - state_epsilon) return VoxelState::Free;
    return VoxelState::Unknown;
  }

  /// Integrates one perception taken from `sensor_origin`. For each point
  /// the voxels from the sensor to the point take the miss increment and
  /// the endpoint voxel the hit increment; within one perception every
  /// voxel is updated at most once per role and a hit wins over a miss.
  /// Rays to points outside the grid are clipped and get no endpoint update.
  void update(const PointCloud& perception, const Vec3& sensor_origin) {
    if (perception.empty()) return;
    std::vector<std::uint8_t> hit(logodds_.size(), 0);
    std::vector<std::uint8_t> miss(logodds_.size(), 0);

    for (const auto& point : perception.points) {
      std::array<int, 3> endpoint{};
      const bool endpoint_inside = voxel_of(point, endpoint);
      if (endpoint_inside) hit[flat_index(endpoint[0], endpoint[1], endpoint[2])] = 1;
      traverse_misses(sensor_origin, point, endpoint_inside ? &endpoint : nullptr,
                      miss);
    }

    for (std::size_t i = 0; i < logodds_.size(); ++i) {
      if (hit[i])
        logodds_[i] += hit_logodds;
      else if (miss[i])
        logodds_[i] += miss_logodds;
      else
        continue;
      logodds_[i] = std::clamp(logodds_[i], clamp_min, clamp_max);
    }
  }

  /// Dense occupancy probabilities, x-major row-major (x, then y, then z).
  std::vector<double> to_tensor() const {
    std::vector<double> probs(logodds_.size());
    for (std::size_t i = 0; i < logodds_.size(); ++i)
      probs[i] = 1.0 / (1.0 + std::exp(-logodds_[i]));
    return probs;
  }

  static OccupancyGrid from_tensor(const std::vector<double>& probs,
                                   std::array<int, 3> dims, Vec3 origin,
                                   double resolution) {
    OccupancyGrid grid(dims, origin, resolution);
    if (probs.size() != grid.logodds_.size())
      throw std::invalid_argument("tensor size does not match grid dims");
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
      grid.logodds_[i] = std::log(p / (1.0 - p));
    }
    return grid;
  }

  /// FNV-1a over the raw log-odds bytes; used for replay checks.
  std::uint64_t content_hash() const {
    return fnv1a64(logodds_.data(), logodds_.size() * sizeof(double));
  }

  const std::vector<double>& raw_logodds() const { return logodds_; }

 private:
  /// Amanatides-Woo traversal from the sensor to the point, clipped to the
  /// grid box. Marks traversed voxels (excluding the endpoint voxel) in
  /// `miss`.
  void traverse_misses(const Vec3& from, const Vec3& to,
                       const std::array<int, 3>* endpoint,
                       std::vector<std::uint8_t>& miss) {
    const Vec3 d = to - from;
    double t_entry = 0.0;
    double t_exit = 1.0;
    for (int a = 0; a < 3; ++a) {
      const double lo = origin_[a];
      const double hi = origin_[a] + dims_[a] * resolution_;
      if (std::abs(d[a]) < 1e-15) {
        if (from[a] < lo || from[a] >= hi) return;  // parallel and outside
        continue;
      }
      double t0 = (lo - from[a]) / d[a];
      double t1 = (hi - from[a]) / d[a];
      if (t0 > t1) std::swap(t0, t1);
      t_entry = std::max(t_entry, t0);
      t_exit = std::min(t_exit, t1);
    }
    if (t_entry >= t_exit) return;

    // Nudge inside the box to get a well-defined start voxel.
    const double t_eps = 1e-12;
    const Vec3 start = from + std::min(t_entry + t_eps, 1.0) * d;
    std::array<int, 3> cell{};
    for (int a = 0; a < 3; ++a) {
      const double f = std::floor((start[a] - origin_[a]) / resolution_);
      cell[a] = std::clamp(static_cast<int>(f), 0, dims_[a] - 1);
    }

    std::array<int, 3> step{};
    std::array<double, 3> t_max{};
    std::array<double, 3> t_delta{};
    for (int a = 0; a < 3; ++a) {
      if (d[a] > 0.0) {
        step[a] = 1;
        const double boundary = origin_[a] + (cell[a] + 1) * resolution_;
        t_max[a] = (boundary - from[a]) / d[a];
        t_delta[a] = resolution_ / d[a];
      } else if (d[a] < 0.0) {
        step[a] = -1;
        const double boundary = origin_[a] + cell[a] * resolution_;
        t_max[a] = (boundary - from[a]) / d[a];
        t_delta[a] = -resolution_ / d[a];
      } else {
        step[a] = 0;
        t_max[a] = std::numeric_limits<double>::infinity();
        t_delta[a] = std::numeric_limits<double>::infinity();
      }
    }

    double t = t_entry;
    while (t <= t_exit) {
      if (endpoint && cell == *endpoint) return;  // reached the hit voxel
      miss[flat_index(cell[0], cell[1], cell[2])] = 1;
      int axis = 0;
      if (t_max[1] < t_max[axis]) axis = 1;
      if (t_max[2] < t_max[axis]) axis = 2;
      t = t_max[axis];
      cell[axis] += step[axis];
      t_max[axis] += t_delta[axis];
      if (cell[axis] < 0 || cell[axis] >= dims_[axis]) return;  // left the box
    }
  }

  std::array<int, 3> dims_{};
  Vec3 origin_ = Vec3::Zero();
  double resolution_ = 0.0;
  std::vector<double> logodds_;
};

}  // namespace nbv
