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

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "nbv/cloud.hpp"
#include "nbv/kdtree.hpp"

namespace nbv {

/// Point-cloud comparison parameters. `gap` is the correspondence radius
/// shared by coverage and overlap; `leaf` the downsampling cell edge;
/// thresh1/thresh2 the overlap and feature-count gates of the oracle.
struct MetricConfig {
  double gap = 0.005;
  double thresh1 = 0.5;
  int thresh2 = 3;
  double leaf = 0.005;
  double curvature_tau = 0.04;

  /// Radius of the local neighborhood the feature detector analyzes.
  double feature_neighborhood() const { return 4.0 * gap; }

  void validate() const {
    if (gap <= 0.0) throw std::invalid_argument("gap must be > 0");
    if (thresh1 < 0.0 || thresh1 > 1.0)
      throw std::invalid_argument("thresh1 must be in [0,1]");
    if (thresh2 < 0) throw std::invalid_argument("thresh2 must be >= 0");
    if (leaf <= 0.0) throw std::invalid_argument("leaf must be > 0");
    if (curvature_tau <= 0.0 || curvature_tau > 1.0 / 3.0)
      throw std::invalid_argument("curvature_tau must be in (0, 1/3]");
  }
};

/// Fraction of `w_obj` points with at least one neighbor in the indexed
/// cloud within `gap`. The overload building its own index is the plain
/// entry point; hot paths reuse a prebuilt index.
inline double coverage(const SpatialIndex& a, const PointCloud& w_obj,
                       double gap) {
  if (w_obj.empty()) throw std::invalid_argument("w_obj must be nonempty");
  if (a.size() == 0) return 0.0;
  std::size_t covered = 0;
  for (const auto& p : w_obj.points)
    if (a.has_neighbor(p, gap)) ++covered;
  return static_cast<double>(covered) / static_cast<double>(w_obj.size());
}

inline double coverage(const PointCloud& a, const PointCloud& w_obj,
                       double gap) {
  if (w_obj.empty()) throw std::invalid_argument("w_obj must be nonempty");
  if (a.empty()) return 0.0;
  return coverage(SpatialIndex(a), w_obj, gap);
}

/// Fraction of the new perception's points matched in p_acu within `gap`.
inline double overlap(const PointCloud& z, const SpatialIndex& p_acu,
                      double gap) {
  if (z.empty()) throw std::invalid_argument("z must be nonempty");
  if (p_acu.size() == 0) return 0.0;
  std::size_t matched = 0;
  for (const auto& p : z.points)
    if (p_acu.has_neighbor(p, gap)) ++matched;
  return static_cast<double>(matched) / static_cast<double>(z.size());
}

inline double overlap(const PointCloud& z, const PointCloud& p_acu,
                      double gap) {
  if (z.empty()) throw std::invalid_argument("z must be nonempty");
  if (p_acu.empty()) return 0.0;
  return overlap(z, SpatialIndex(p_acu), gap);
}

/// The realization of z' intersected with P_acu: the subset of z with a
/// p_acu neighbor within gap, in z's order.
inline PointCloud overlap_region(const PointCloud& z, const SpatialIndex& p_acu,
                                 double gap) {
  if (z.empty()) throw std::invalid_argument("z must be nonempty");
  PointCloud region;
  if (p_acu.size() == 0) return region;
  for (const auto& p : z.points)
    if (p_acu.has_neighbor(p, gap)) region.points.push_back(p);
  return region;
}

inline PointCloud overlap_region(const PointCloud& z, const PointCloud& p_acu,
                                 double gap) {
  if (z.empty()) throw std::invalid_argument("z must be nonempty");
  if (p_acu.empty()) return {};
  return overlap_region(z, SpatialIndex(p_acu), gap);
}

/// Surface-variation keypoint count standing in for a range-image feature
/// detector. A point is a candidate when the smallest covariance eigenvalue
/// of its `neighborhood`-ball carries more than `curvature_tau` of the
/// trace; non-maxima within `neighborhood` are suppressed so the surviving
/// features are pairwise at least `neighborhood` apart. Points with fewer
/// than 4 neighbors are skipped.
inline int count_features(const PointCloud& region, double neighborhood,
                          double curvature_tau) {
  if (neighborhood <= 0.0)
    throw std::invalid_argument("neighborhood must be > 0");
  if (region.size() < 5) return 0;

  const SpatialIndex index(region);
  std::vector<std::pair<double, int>> candidates;  // (sigma, index)
  for (int i = 0; i < static_cast<int>(region.size()); ++i) {
    const auto neighbors = index.radius_query(region.points[i], neighborhood);
    if (static_cast<int>(neighbors.size()) < 5) continue;  // self + 4 others

    Vec3 mean = Vec3::Zero();
    for (int n : neighbors) mean += region.points[n];
    mean /= static_cast<double>(neighbors.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int n : neighbors) {
      const Vec3 d = region.points[n] - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(neighbors.size());

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const double trace = eig.eigenvalues().sum();
    if (trace <= 0.0) continue;
    const double sigma = eig.eigenvalues()(0) / trace;
    if (sigma > curvature_tau) candidates.emplace_back(sigma, i);
  }

  // Strongest first; index breaks ties so the result is deterministic.
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> kept;
  for (const auto& [sigma, i] : candidates) {
    bool suppressed = false;
    for (int k : kept) {
      if ((region.points[i] - region.points[k]).norm() < neighborhood) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return static_cast<int>(kept.size());
}

/// Voxel-hash downsampling: one centroid per occupied cubic cell of edge
/// `leaf`, cells anchored at the global origin, output sorted by cell index.
inline PointCloud downsize_filter(const PointCloud& cloud, double leaf) {
  if (leaf <= 0.0) throw std::invalid_argument("leaf must be > 0");
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  std::map<Key, std::pair<Vec3, std::size_t>> cells;
  for (const auto& p : cloud.points) {
    const Key key{static_cast<std::int64_t>(std::floor(p.x() / leaf)),
                  static_cast<std::int64_t>(std::floor(p.y() / leaf)),
                  static_cast<std::int64_t>(std::floor(p.z() / leaf))};
    auto& cell = cells[key];
    cell.first += p;
    cell.second += 1;
  }
  PointCloud out;
  out.points.reserve(cells.size());
  for (const auto& [key, cell] : cells)
    out.points.push_back(cell.first / static_cast<double>(cell.second));
  return out;
}

}  // namespace nbv
