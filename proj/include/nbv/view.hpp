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
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nbv/cloud.hpp"

namespace nbv {

/// A sensor pose on the view sphere. Orientation is stored as intrinsic
/// rotations about x, y, z in that order (alpha, then beta, then gamma);
/// the combined camera-to-world rotation is R = Rx(alpha)*Ry(beta)*Rz(gamma)
/// and the camera looks along its +z axis.
struct View {
  double x = 0, y = 0, z = 0;
  double alpha = 0, beta = 0, gamma = 0;
  int id = 0;

  Vec3 position() const { return {x, y, z}; }

  Eigen::Matrix3d rotation() const {
    const double ca = std::cos(alpha), sa = std::sin(alpha);
    const double cb = std::cos(beta), sb = std::sin(beta);
    const double cg = std::cos(gamma), sg = std::sin(gamma);
    Eigen::Matrix3d rx, ry, rz;
    rx << 1, 0, 0, 0, ca, -sa, 0, sa, ca;
    ry << cb, 0, sb, 0, 1, 0, -sb, 0, cb;
    rz << cg, -sg, 0, sg, cg, 0, 0, 0, 1;
    return rx * ry * rz;
  }

  /// World-frame direction of the optical axis (camera +z).
  Vec3 optical_axis() const { return rotation().col(2); }
};

enum class ViewSetKind { SearchSpace, ClassSet };

struct ViewSet {
  std::vector<View> views;
  double radius = 0.0;
  ViewSetKind kind = ViewSetKind::SearchSpace;

  std::size_t size() const { return views.size(); }
};

namespace detail {

/// Decomposes R = Rx(a)*Ry(b)*Rz(g). The b = +/-pi/2 gimbal case fixes
/// gamma = 0.
inline void euler_xyz_from_rotation(const Eigen::Matrix3d& r, double& a,
                                    double& b, double& g) {
  const double sb = std::clamp(r(0, 2), -1.0, 1.0);
  b = std::asin(sb);
  if (std::abs(std::cos(b)) > 1e-9) {
    a = std::atan2(-r(1, 2), r(2, 2));
    g = std::atan2(-r(0, 1), r(0, 0));
  } else {
    g = 0.0;
    a = std::atan2(r(2, 1), r(1, 1));
  }
}

}  // namespace detail

/// Builds the view whose camera sits at `position` with the optical axis
/// aimed at the global origin.
inline View make_view_at(const Vec3& position, int id) {
  const double dist = position.norm();
  if (dist <= 0.0)
    throw std::invalid_argument("view position must be away from the origin");
  const Vec3 z_cam = (-position).normalized();
  Vec3 up(0, 0, 1);
  if (std::abs(z_cam.z()) > 0.999) up = Vec3(0, 1, 0);
  const Vec3 x_cam = up.cross(z_cam).normalized();
  const Vec3 y_cam = z_cam.cross(x_cam);
  Eigen::Matrix3d r;
  r.col(0) = x_cam;
  r.col(1) = y_cam;
  r.col(2) = z_cam;

  View v;
  v.x = position.x();
  v.y = position.y();
  v.z = position.z();
  v.id = id;
  detail::euler_xyz_from_rotation(r, v.alpha, v.beta, v.gamma);
  return v;
}

/// Places `count` views at uniformly distributed directions on a sphere (or
/// its upper half) of the given radius using the Fibonacci spiral, each
/// oriented toward the origin. Deterministic for fixed inputs.
inline ViewSet generate_view_sphere(int count, double radius,
                                    bool hemisphere_only,
                                    ViewSetKind kind = ViewSetKind::SearchSpace) {
  if (count < 1) throw std::invalid_argument("view count must be >= 1");
  if (radius <= 0.0) throw std::invalid_argument("view radius must be > 0");

  const double golden_angle = 3.14159265358979323846 * (3.0 - std::sqrt(5.0));
  ViewSet set;
  set.radius = radius;
  set.kind = kind;
  set.views.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    // Uniform in z over (-1,1) for the full sphere, (0,1) for the upper half.
    const double frac = (static_cast<double>(i) + 0.5) / count;
    const double zdir = hemisphere_only ? 1.0 - frac : 1.0 - 2.0 * frac;
    const double rho = std::sqrt(std::max(0.0, 1.0 - zdir * zdir));
    const double theta = golden_angle * i;
    const Vec3 dir(rho * std::cos(theta), rho * std::sin(theta), zdir);
    set.views.push_back(make_view_at(radius * dir, i));
  }
  return set;
}

/// View-set CSV: header then one "id,x,y,z,alpha,beta,gamma" row per view.
inline void write_view_csv(const ViewSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "id,x,y,z,alpha,beta,gamma\n";
  char line[224];
  for (const auto& v : set.views) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  v.id, v.x, v.y, v.z, v.alpha, v.beta, v.gamma);
    out << line;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline ViewSet read_view_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("id,", 0) != 0)
    throw std::runtime_error(path + ": missing view CSV header");
  ViewSet set;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    View v;
    char comma = 0;
    if (!(ss >> v.id >> comma >> v.x >> comma >> v.y >> comma >> v.z >> comma >>
          v.alpha >> comma >> v.beta >> comma >> v.gamma))
      throw std::runtime_error(path + ": malformed view row");
    set.views.push_back(v);
    set.radius = std::max(set.radius, v.position().norm());
  }
  return set;
}

}  // namespace nbv
