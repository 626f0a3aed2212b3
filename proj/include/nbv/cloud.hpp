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

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbv {

using Vec3 = Eigen::Vector3d;

/// A set of 3D points in meters, global frame. Houses perceptions, the
/// accumulated model, and ground-truth surface samplings alike.
struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void append(const PointCloud& other) {
    points.insert(points.end(), other.points.begin(), other.points.end());
  }
};

inline bool cloud_is_finite(const PointCloud& cloud) {
  for (const auto& p : cloud.points) {
    if (!std::isfinite(p.x()) || !std::isfinite(p.y()) || !std::isfinite(p.z()))
      return false;
  }
  return true;
}

/// ASCII XYZ: one "x y z" triple per line, space separated, '\n' line ends.
inline void write_xyz(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  char line[96];
  for (const auto& p : cloud.points) {
    std::snprintf(line, sizeof(line), "%.17g %.17g %.17g\n", p.x(), p.y(),
                  p.z());
    out << line;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline PointCloud read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    double x = 0, y = 0, z = 0;
    if (!(ss >> x >> y >> z))
      throw std::runtime_error(path + ": malformed XYZ line " +
                               std::to_string(lineno));
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
      throw std::runtime_error(path + ": non-finite coordinate at line " +
                               std::to_string(lineno));
    cloud.points.emplace_back(x, y, z);
  }
  return cloud;
}

}  // namespace nbv
