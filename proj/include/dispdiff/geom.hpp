#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace dispdiff {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x; y += o.y; z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x; y -= o.y; z -= o.z;
    return *this;
  }
  Vec3& operator*=(double s) {
    x *= s; y *= s; z *= s;
    return *this;
  }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Rotation about the world z-axis.
inline Vec3 rotate_z(const Vec3& v, double theta) {
  double c = std::cos(theta), s = std::sin(theta);
  return {c * v.x - s * v.y, s * v.x + c * v.y, v.z};
}

// Closest point on segment [a, b] to p.
inline Vec3 closest_point_on_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  Vec3 ab = b - a;
  double denom = ab.norm2();
  if (denom <= 0.0) return a;
  double t = (p - a).dot(ab) / denom;
  if (t < 0.0) t = 0.0;
  if (t > 1.0) t = 1.0;
  return a + ab * t;
}

// 2-D point-in-polygon by ray casting; points on an edge (within eps of a
// segment) count as inside. Polygons with fewer than 3 vertices contain
// nothing.
inline bool point_in_polygon_xy(const std::vector<double>& px, const std::vector<double>& py,
                                double qx, double qy, double eps = 1e-12) {
  std::size_t n = px.size();
  if (n < 3 || py.size() != n) return false;

  // boundary test first: distance to each edge
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    double ax = px[j], ay = py[j], bx = px[i], by = py[i];
    double abx = bx - ax, aby = by - ay;
    double denom = abx * abx + aby * aby;
    double t = denom > 0.0 ? ((qx - ax) * abx + (qy - ay) * aby) / denom : 0.0;
    if (t < 0.0) t = 0.0;
    if (t > 1.0) t = 1.0;
    double dx = qx - (ax + t * abx), dy = qy - (ay + t * aby);
    if (dx * dx + dy * dy <= eps * eps) return true;
  }

  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    bool straddles = (py[i] > qy) != (py[j] > qy);
    if (straddles) {
      double x_cross = px[j] + (px[i] - px[j]) * (qy - py[j]) / (py[i] - py[j]);
      if (qx < x_cross) inside = !inside;
    }
  }
  return inside;
}

}  // namespace dispdiff
