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
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nbv/cloud.hpp"
#include "nbv/rng.hpp"

namespace nbv {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }

  /// Largest |coordinate| over all vertices (L-inf half extent).
  double half_extent() const {
    double h = 0.0;
    for (const auto& v : vertices)
      h = std::max({h, std::abs(v.x()), std::abs(v.y()), std::abs(v.z())});
    return h;
  }

  void validate() const {
    const int n = static_cast<int>(vertices.size());
    for (const auto& t : triangles)
      for (int idx : t)
        if (idx < 0 || idx >= n)
          throw std::invalid_argument("triangle index out of range");
  }
};

enum class ObjectKind { Sphere, Box, LShape, Torus, Capsule, Composite };

inline const char* to_string(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::Sphere: return "sphere";
    case ObjectKind::Box: return "box";
    case ObjectKind::LShape: return "lshape";
    case ObjectKind::Torus: return "torus";
    case ObjectKind::Capsule: return "capsule";
    case ObjectKind::Composite: return "composite";
  }
  return "unknown";
}

inline ObjectKind object_kind_from_string(const std::string& name) {
  if (name == "sphere") return ObjectKind::Sphere;
  if (name == "box") return ObjectKind::Box;
  if (name == "lshape") return ObjectKind::LShape;
  if (name == "torus") return ObjectKind::Torus;
  if (name == "capsule") return ObjectKind::Capsule;
  if (name == "composite") return ObjectKind::Composite;
  throw std::invalid_argument("unknown object kind: " + name);
}

inline constexpr std::array<ObjectKind, 6> kAllObjectKinds = {
    ObjectKind::Sphere,   ObjectKind::Box,     ObjectKind::LShape,
    ObjectKind::Torus,    ObjectKind::Capsule, ObjectKind::Composite};

namespace detail {

/// Icosphere: unit icosahedron subdivided `levels` times, vertices projected
/// to the unit sphere. Watertight by construction.
inline TriangleMesh unit_icosphere(int levels) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh mesh;
  mesh.vertices = {{-1, t, 0}, {1, t, 0},   {-1, -t, 0}, {1, -t, 0},
                   {0, -1, t}, {0, 1, t},   {0, -1, -t}, {0, 1, -t},
                   {t, 0, -1}, {t, 0, 1},   {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : mesh.vertices) v.normalize();
  mesh.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10},
                    {0, 10, 11}, {1, 5, 9}, {5, 11, 4},  {11, 10, 2},
                    {10, 7, 6},  {7, 1, 8}, {3, 9, 4},   {3, 4, 2},
                    {3, 2, 6},   {3, 6, 8}, {3, 8, 9},   {4, 9, 5},
                    {2, 4, 11},  {6, 2, 10}, {8, 6, 7},  {9, 8, 1}};

  for (int level = 0; level < levels; ++level) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const Vec3 m = (mesh.vertices[a] + mesh.vertices[b]).normalized();
      const int idx = static_cast<int>(mesh.vertices.size());
      mesh.vertices.push_back(m);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(mesh.triangles.size() * 4);
    for (const auto& tri : mesh.triangles) {
      const int a = mid(tri[0], tri[1]);
      const int b = mid(tri[1], tri[2]);
      const int c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    mesh.triangles = std::move(next);
  }
  return mesh;
}

inline TriangleMesh make_box(const Vec3& half, const Vec3& center = Vec3::Zero()) {
  TriangleMesh mesh;
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.push_back(center + Vec3((i & 1) ? half.x() : -half.x(),
                                          (i & 2) ? half.y() : -half.y(),
                                          (i & 4) ? half.z() : -half.z()));
  }
  // Two triangles per face, outward winding.
  mesh.triangles = {{0, 2, 1}, {1, 2, 3},   // z-
                    {4, 5, 6}, {5, 7, 6},   // z+
                    {0, 1, 4}, {1, 5, 4},   // y-
                    {2, 6, 3}, {3, 6, 7},   // y+
                    {0, 4, 2}, {2, 4, 6},   // x-
                    {1, 3, 5}, {3, 7, 5}};  // x+
  return mesh;
}

inline void append_mesh(TriangleMesh& dst, const TriangleMesh& src) {
  const int base = static_cast<int>(dst.vertices.size());
  dst.vertices.insert(dst.vertices.end(), src.vertices.begin(),
                      src.vertices.end());
  for (const auto& t : src.triangles)
    dst.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
}

/// L cross-section extruded along z. The 6-vertex cap polygon is star-shaped
/// from its corner vertex, so a fan triangulation stays inside the outline.
inline TriangleMesh make_lshape(double width, double height, double bar,
                                double column, double depth) {
  const std::array<std::array<double, 2>, 6> poly = {{{0, 0},
                                                      {width, 0},
                                                      {width, bar},
                                                      {column, bar},
                                                      {column, height},
                                                      {0, height}}};
  // Center the solid on the origin.
  const double cx = width / 2, cy = height / 2, cz = 0.0;
  TriangleMesh mesh;
  for (int side = 0; side < 2; ++side) {
    const double z = (side == 0 ? -depth : depth) - cz;
    for (const auto& p : poly)
      mesh.vertices.emplace_back(p[0] - cx, p[1] - cy, z);
  }
  auto lo = [](int i) { return i; };
  auto hi = [](int i) { return 6 + i; };
  for (int i = 1; i + 1 < 6; ++i) {
    mesh.triangles.push_back({lo(0), lo(i + 1), lo(i)});  // bottom cap (z-)
    mesh.triangles.push_back({hi(0), hi(i), hi(i + 1)});  // top cap (z+)
  }
  for (int i = 0; i < 6; ++i) {
    const int j = (i + 1) % 6;
    mesh.triangles.push_back({lo(i), lo(j), hi(j)});
    mesh.triangles.push_back({lo(i), hi(j), hi(i)});
  }
  return mesh;
}

inline TriangleMesh make_torus(double ring_radius, double tube_radius, int nu,
                               int nv) {
  TriangleMesh mesh;
  for (int i = 0; i < nu; ++i) {
    const double u = 2.0 * 3.14159265358979323846 * i / nu;
    for (int j = 0; j < nv; ++j) {
      const double v = 2.0 * 3.14159265358979323846 * j / nv;
      const double w = ring_radius + tube_radius * std::cos(v);
      mesh.vertices.emplace_back(w * std::cos(u), w * std::sin(u),
                                 tube_radius * std::sin(v));
    }
  }
  auto at = [&](int i, int j) { return (i % nu) * nv + (j % nv); };
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nv; ++j) {
      mesh.triangles.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      mesh.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  }
  return mesh;
}

}  // namespace detail

/// Deterministic watertight mesh for (kind, seed, scale), centered at the
/// origin and bounded by `scale` in L-inf norm. The six kinds cover convex,
/// concave, holed, elongated, and multi-part geometry.
inline TriangleMesh generate_demo_object(ObjectKind kind, std::uint64_t seed,
                                         double scale = 0.2) {
  if (scale <= 0.0) throw std::invalid_argument("object scale must be > 0");
  Pcg32 rng(seed, 0x6f626a65u);  // one stream per mesh build
  TriangleMesh mesh;

  switch (kind) {
    case ObjectKind::Sphere: {
      mesh = detail::unit_icosphere(3);
      for (auto& v : mesh.vertices) v *= scale;
      break;
    }
    case ObjectKind::Box: {
      const Vec3 half(scale * (0.5 + 0.5 * rng.uniform()),
                      scale * (0.5 + 0.5 * rng.uniform()),
                      scale * (0.5 + 0.5 * rng.uniform()));
      mesh = detail::make_box(half);
      break;
    }
    case ObjectKind::LShape: {
      const double width = 2.0 * scale;
      const double height = scale * (1.4 + 0.6 * rng.uniform());
      const double bar = width * (0.3 + 0.15 * rng.uniform());
      const double column = width * (0.3 + 0.15 * rng.uniform());
      const double depth = scale * (0.35 + 0.25 * rng.uniform());
      mesh = detail::make_lshape(width, height, bar, column, depth);
      break;
    }
    case ObjectKind::Torus: {
      const double tube = scale * (0.2 + 0.15 * rng.uniform());
      mesh = detail::make_torus(scale - tube, tube, 48, 24);
      break;
    }
    case ObjectKind::Capsule: {
      // Icosphere with the two hemispheres pulled apart along z.
      const double radius = scale * (0.3 + 0.15 * rng.uniform());
      const double half_len = scale - radius;
      mesh = detail::unit_icosphere(3);
      for (auto& v : mesh.vertices) {
        v *= radius;
        if (v.z() > 0.0)
          v.z() += half_len;
        else if (v.z() < 0.0)
          v.z() -= half_len;
      }
      break;
    }
    case ObjectKind::Composite: {
      // Ball with two slab arms crossing through it.
      const double ball = scale * 0.55;
      const double arm = scale * (0.22 + 0.1 * rng.uniform());
      TriangleMesh sphere = detail::unit_icosphere(2);
      for (auto& v : sphere.vertices) v *= ball;
      mesh = sphere;
      detail::append_mesh(mesh, detail::make_box(Vec3(scale, arm, arm)));
      detail::append_mesh(mesh, detail::make_box(Vec3(arm, scale, arm)));
      break;
    }
  }
  mesh.validate();
  return mesh;
}

/// Ground-truth surface sampling: a barycentric lattice per triangle with a
/// lattice step no larger than `spacing` along every edge, which leaves no
/// surface point farther than `spacing` from a sample. Deterministic.
inline PointCloud sample_surface(const TriangleMesh& mesh, double spacing) {
  if (spacing <= 0.0) throw std::invalid_argument("spacing must be > 0");
  PointCloud cloud;
  for (const auto& tri : mesh.triangles) {
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    const double longest =
        std::max({(b - a).norm(), (c - a).norm(), (c - b).norm()});
    const int n = std::max(1, static_cast<int>(std::ceil(longest / spacing)));
    const Vec3 ab = (b - a) / n;
    const Vec3 ac = (c - a) / n;
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n - i; ++j)
        cloud.points.push_back(a + double(i) * ab + double(j) * ac);
  }
  return cloud;
}

/// ASCII PLY subset: vertex element with float x,y,z properties and face
/// element with vertex_indices lists.
inline void write_ply(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\n";
  out << "end_header\n";
  char line[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    out << line;
  }
  for (const auto& t : mesh.triangles)
    out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline TriangleMesh read_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  auto fail = [&](const std::string& why) {
    throw std::runtime_error(path + ": " + why);
  };

  if (!std::getline(in, line) || line != "ply") fail("not a PLY file");
  std::size_t n_vertices = 0, n_faces = 0;
  bool saw_format = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "comment") continue;
    if (tok == "format") {
      std::string kind;
      ss >> kind;
      if (kind != "ascii") fail("only ascii PLY is supported");
      saw_format = true;
    } else if (tok == "element") {
      std::string name;
      std::size_t count = 0;
      ss >> name >> count;
      if (name == "vertex")
        n_vertices = count;
      else if (name == "face")
        n_faces = count;
      else
        fail("unsupported element: " + name);
    } else if (tok == "property") {
      continue;  // the subset fixes the property layout
    } else if (tok == "end_header") {
      break;
    } else {
      fail("unexpected header line: " + line);
    }
  }
  if (!saw_format) fail("missing format line");

  TriangleMesh mesh;
  mesh.vertices.reserve(n_vertices);
  for (std::size_t i = 0; i < n_vertices; ++i) {
    if (!std::getline(in, line)) fail("truncated vertex list");
    std::istringstream ss(line);
    double x = 0, y = 0, z = 0;
    if (!(ss >> x >> y >> z)) fail("malformed vertex line");
    mesh.vertices.emplace_back(x, y, z);
  }
  for (std::size_t i = 0; i < n_faces; ++i) {
    if (!std::getline(in, line)) fail("truncated face list");
    std::istringstream ss(line);
    int count = 0, a = 0, b = 0, c = 0;
    if (!(ss >> count >> a >> b >> c) || count != 3)
      fail("only triangle faces are supported");
    mesh.triangles.push_back({a, b, c});
  }
  mesh.validate();
  return mesh;
}

}  // namespace nbv
