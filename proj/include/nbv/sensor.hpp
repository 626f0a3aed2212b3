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

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "nbv/cloud.hpp"
#include "nbv/mesh.hpp"
#include "nbv/parallel.hpp"
#include "nbv/view.hpp"

namespace nbv {

struct CameraConfig {
  int width = 64;
  int height = 64;
  double fov_y = 45.0 * 3.14159265358979323846 / 180.0;
};

/// Range image: per-pixel distance along the ray in meters, row-major
/// (row * width + column). Misses carry +infinity.
struct DepthImage {
  static constexpr double kNoHit = std::numeric_limits<double>::infinity();

  int width = 0;
  int height = 0;
  double fov_y = 0.0;
  std::vector<double> depths;
  View view;

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (double d : depths)
      if (std::isfinite(d)) ++n;
    return n;
  }
};

namespace detail {

/// Moller-Trumbore, double sided. Returns the ray parameter t (> eps) of the
/// hit or kNoHit.
inline double ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& v0,
                           const Vec3& e1, const Vec3& e2) {
  constexpr double kParallelEps = 1e-12;
  const Vec3 pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < kParallelEps) return DepthImage::kNoHit;
  const double inv_det = 1.0 / det;
  const Vec3 tvec = origin - v0;
  const double u = tvec.dot(pvec) * inv_det;
  if (u < 0.0 || u > 1.0) return DepthImage::kNoHit;
  const Vec3 qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv_det;
  if (v < 0.0 || u + v > 1.0) return DepthImage::kNoHit;
  const double t = e2.dot(qvec) * inv_det;
  return t > 1e-9 ? t : DepthImage::kNoHit;
}

/// Unit ray direction in the camera frame for pixel (px, py): +x right,
/// +y down, +z forward, square pixels, principal point at image center.
inline Vec3 pixel_direction(int px, int py, int width, int height,
                            double fov_y) {
  const double focal = height / (2.0 * std::tan(fov_y / 2.0));
  const Vec3 d((px + 0.5 - width / 2.0) / focal,
               (py + 0.5 - height / 2.0) / focal, 1.0);
  return d.normalized();
}

}  // namespace detail

/// Nearest-hit ray cast through a pinhole camera at `view`.
inline DepthImage render_depth(const TriangleMesh& mesh, const View& view,
                               int width, int height, double fov_y) {
  if (mesh.empty()) throw std::invalid_argument("mesh has no triangles");
  if (width < 1 || height < 1)
    throw std::invalid_argument("image dimensions must be >= 1");

  // Precompute per-triangle bases once per render.
  struct Tri {
    Vec3 v0, e1, e2;
  };
  std::vector<Tri> tris;
  tris.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    tris.push_back(
        {a, mesh.vertices[t[1]] - a, mesh.vertices[t[2]] - a});
  }

  DepthImage image;
  image.width = width;
  image.height = height;
  image.fov_y = fov_y;
  image.view = view;
  image.depths.assign(static_cast<std::size_t>(width) * height,
                      DepthImage::kNoHit);

  const Vec3 origin = view.position();
  const Eigen::Matrix3d rot = view.rotation();
  const std::size_t pixels = image.depths.size();
  parallel_for(pixels, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int px = static_cast<int>(i) % width;
      const int py = static_cast<int>(i) / width;
      const Vec3 dir =
          rot * detail::pixel_direction(px, py, width, height, fov_y);
      double best = DepthImage::kNoHit;
      for (const auto& tri : tris) {
        const double t =
            detail::ray_triangle(origin, dir, tri.v0, tri.e1, tri.e2);
        if (t < best) best = t;
      }
      image.depths[i] = best;
    }
  });
  return image;
}

/// Back-projects every valid pixel to the camera frame and re-expresses it
/// in the global frame. Empty cloud when nothing was hit.
inline PointCloud depth_to_cloud(const DepthImage& image) {
  PointCloud cloud;
  const Vec3 origin = image.view.position();
  const Eigen::Matrix3d rot = image.view.rotation();
  for (int py = 0; py < image.height; ++py) {
    for (int px = 0; px < image.width; ++px) {
      const double d = image.depths[static_cast<std::size_t>(py) * image.width + px];
      if (!std::isfinite(d)) continue;
      const Vec3 cam = d * detail::pixel_direction(px, py, image.width,
                                                   image.height, image.fov_y);
      cloud.points.push_back(rot * cam + origin);
    }
  }
  return cloud;
}

}  // namespace nbv
