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
#include <numeric>
#include <vector>

#include "nbv/cloud.hpp"

namespace nbv {

/// Immutable kd-tree over a point cloud. Built once, then safe for
/// concurrent queries. Matching is inclusive: a point at distance exactly r
/// counts as a neighbor, mirroring the linear-scan definition the tests
/// check against.
class SpatialIndex {
 public:
  SpatialIndex() = default;

  explicit SpatialIndex(const PointCloud& cloud) : points_(cloud.points) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!order_.empty()) build(0, static_cast<int>(order_.size()), 0);
  }

  std::size_t size() const { return points_.size(); }

  /// Indices (into the source cloud, ascending) of all points within r of p.
  std::vector<int> radius_query(const Vec3& p, double r) const {
    std::vector<int> hits;
    if (!order_.empty())
      collect(0, static_cast<int>(order_.size()), 0, p, r * r, &hits, nullptr);
    std::sort(hits.begin(), hits.end());
    return hits;
  }

  int count_within(const Vec3& p, double r) const {
    int count = 0;
    if (!order_.empty())
      collect(0, static_cast<int>(order_.size()), 0, p, r * r, nullptr, &count);
    return count;
  }

  bool has_neighbor(const Vec3& p, double r) const {
    if (order_.empty()) return false;
    return probe(0, static_cast<int>(order_.size()), 0, p, r * r);
  }

  const Vec3& point(int index) const { return points_[index]; }

 private:
  // Implicit balanced layout: the median of [lo, hi) sits at mid and splits
  // on axis = depth % 3.
  void build(int lo, int hi, int depth) {
    if (hi - lo <= 1) return;
    const int mid = (lo + hi) / 2;
    const int axis = depth % 3;
    std::nth_element(order_.begin() + lo, order_.begin() + mid,
                     order_.begin() + hi, [&](int a, int b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    build(lo, mid, depth + 1);
    build(mid + 1, hi, depth + 1);
  }

  void collect(int lo, int hi, int depth, const Vec3& p, double r2,
               std::vector<int>* hits, int* count) const {
    if (hi <= lo) return;
    const int mid = (lo + hi) / 2;
    const int idx = order_[mid];
    if ((points_[idx] - p).squaredNorm() <= r2) {
      if (hits) hits->push_back(idx);
      if (count) ++*count;
    }
    const int axis = depth % 3;
    const double delta = p[axis] - points_[idx][axis];
    if (delta <= 0.0 || delta * delta <= r2)
      collect(lo, mid, depth + 1, p, r2, hits, count);
    if (delta >= 0.0 || delta * delta <= r2)
      collect(mid + 1, hi, depth + 1, p, r2, hits, count);
  }

  bool probe(int lo, int hi, int depth, const Vec3& p, double r2) const {
    if (hi <= lo) return false;
    const int mid = (lo + hi) / 2;
    const int idx = order_[mid];
    if ((points_[idx] - p).squaredNorm() <= r2) return true;
    const int axis = depth % 3;
    const double delta = p[axis] - points_[idx][axis];
    if (delta <= 0.0 || delta * delta <= r2)
      if (probe(lo, mid, depth + 1, p, r2)) return true;
    if (delta >= 0.0 || delta * delta <= r2)
      if (probe(mid + 1, hi, depth + 1, p, r2)) return true;
    return false;
  }

  std::vector<Vec3> points_;
  std::vector<int> order_;
};

}  // namespace nbv
