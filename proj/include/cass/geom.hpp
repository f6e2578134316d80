#pragma once

// Rigid-pose algebra and geometric metrics: Chamfer, earth mover's distance,
// rotation/translation error, oriented-box IoU, AABB extents.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "cass/core.hpp"
#include "cass/hungarian.hpp"

namespace cass {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr int kEmdExactCap = 256;

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
};

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z,
          a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(const Vec3& v) {
  double n = norm(v);
  check(n > 1e-12, "cannot normalize a near-zero vector");
  return v * (1.0 / n);
}

inline bool finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

// Unit quaternion (w, x, y, z). Stored canonicalized with w >= 0 so that q and
// -q, which encode the same rotation, compare equal.
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  Quat() = default;
  Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {
    double n = std::sqrt(w * w + x * x + y * y + z * z);
    check(std::isfinite(n) && n > 1e-12, "quaternion must have nonzero norm");
    double s = (w < 0.0 ? -1.0 : 1.0) / n;
    w *= s;
    x *= s;
    y *= s;
    z *= s;
  }

  static Quat from_axis_angle(const Vec3& axis, double radians) {
    Vec3 a = normalized(axis);
    double h = 0.5 * radians;
    double s = std::sin(h);
    return Quat(std::cos(h), a.x * s, a.y * s, a.z * s);
  }

  // For values already unit at storage precision (32-bit files): keeps the
  // exact components so a read-write cycle is byte-identical. Sign is still
  // canonicalized; files we wrote always have w >= 0 already.
  static Quat from_stored(double w, double x, double y, double z) {
    double n = std::sqrt(w * w + x * x + y * y + z * z);
    check(std::isfinite(n) && std::abs(n - 1.0) < 1e-4,
          "stored quaternion is not unit");
    Quat q;
    double s = w < 0.0 ? -1.0 : 1.0;
    q.w = w * s;
    q.x = x * s;
    q.y = y * s;
    q.z = z * s;
    return q;
  }

  Quat conjugate() const {
    Quat q;
    q.w = w;
    q.x = -x;
    q.y = -y;
    q.z = -z;
    return q;
  }
};

inline Quat operator*(const Quat& a, const Quat& b) {
  return Quat(a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
              a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
              a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
              a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w);
}

inline Vec3 rotate(const Quat& q, const Vec3& v) {
  // q v q* expanded via the cross-product form.
  Vec3 u{q.x, q.y, q.z};
  Vec3 c = cross(u, v);
  Vec3 cc = cross(u, c);
  return v + (c * (2.0 * q.w)) + cc * 2.0;
}

inline std::array<double, 9> to_matrix(const Quat& q) {
  double w = q.w, x = q.x, y = q.y, z = q.z;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
          2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)};
}

struct Pose {
  Quat q;
  Vec3 t;

  Pose() = default;
  Pose(const Quat& q_, const Vec3& t_) : q(q_), t(t_) {
    check(finite(t), "pose translation must be finite");
  }
};

inline Pose inverse(const Pose& p) {
  Quat qi = p.q.conjugate();
  return Pose(qi, rotate(qi, p.t) * -1.0);
}

// compose(a, b) applies b first, then a.
inline Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.q * b.q, rotate(a.q, b.t) + a.t);
}

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;  // empty, or one RGB triple in [0,1] per point
};

inline void validate(const PointCloud& c) {
  check(!c.points.empty(), "point cloud must be non-empty");
  check(c.colors.empty() || c.colors.size() == c.points.size(),
        "point cloud colors must match point count");
  for (const Vec3& p : c.points)
    if (!finite(p)) throw numeric_error("non-finite point coordinate");
}

inline PointCloud apply_pose(const Pose& pose, const PointCloud& cloud) {
  validate(cloud);
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const Vec3& p : cloud.points) out.points.push_back(rotate(pose.q, p) + pose.t);
  out.colors = cloud.colors;
  return out;
}

// Symmetric sum of means of unsquared nearest-neighbor distances. The same
// convention backs both the reconstruction loss and the reported CD metric.
inline double chamfer(const PointCloud& a, const PointCloud& b) {
  validate(a);
  validate(b);
  auto one_sided = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double total = 0.0;
    for (const Vec3& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : to) best = std::min(best, dot(p - q, p - q));
      total += std::sqrt(best);
    }
    return total / static_cast<double>(from.size());
  };
  return one_sided(a.points, b.points) + one_sided(b.points, a.points);
}

// Exact earth mover's distance: minimum over bijections of the mean matched
// Euclidean distance. Requires equal cardinality up to kEmdExactCap.
inline double emd(const PointCloud& a, const PointCloud& b) {
  validate(a);
  validate(b);
  check(a.points.size() == b.points.size(),
        "emd requires equal point counts");
  int n = static_cast<int>(a.points.size());
  check(n <= kEmdExactCap, "emd exact mode capped at 256 points");
  std::vector<double> cost(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost[i * static_cast<std::size_t>(n) + j] =
          norm(a.points[i] - b.points[j]);
  return solve_assignment(cost, n).cost / static_cast<double>(n);
}

// Geodesic rotation distance in degrees. With a symmetry axis (given in the
// canonical frame), rotation about that axis is quotiented out by comparing
// the two images of the axis instead.
inline double rotation_error(const Pose& pred, const Pose& gt,
                             const Vec3* symmetry_axis = nullptr) {
  if (symmetry_axis) {
    Vec3 u = rotate(pred.q, normalized(*symmetry_axis));
    Vec3 v = rotate(gt.q, normalized(*symmetry_axis));
    double c = std::clamp(dot(u, v), -1.0, 1.0);
    return std::acos(c) * 180.0 / kPi;
  }
  auto rp = to_matrix(pred.q);
  auto rg = to_matrix(gt.q);
  // trace(R_pred * R_gt^T)
  double tr = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) tr += rp[i * 3 + j] * rg[i * 3 + j];
  double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

inline double translation_error(const Pose& pred, const Pose& gt) {
  return norm(pred.t - gt.t);
}

struct OrientedBox {
  Vec3 center;
  Vec3 extents;  // positive half-lengths
  Quat rotation;
};

inline OrientedBox box_from_pose_size(const Pose& pose, const Vec3& size) {
  check(size.x > 0 && size.y > 0 && size.z > 0, "box size must be positive");
  return OrientedBox{pose.t, size * 0.5, pose.q};
}

namespace detail {

inline bool box_contains(const OrientedBox& b, const Vec3& p) {
  Vec3 d = rotate(b.rotation.conjugate(), p - b.center);
  return std::abs(d.x) <= b.extents.x && std::abs(d.y) <= b.extents.y &&
         std::abs(d.z) <= b.extents.z;
}

inline void box_aabb(const OrientedBox& b, Vec3& lo, Vec3& hi) {
  auto r = to_matrix(b.rotation);
  // Extent of the rotated box along each world axis is |R| * extents.
  Vec3 reach;
  for (int i = 0; i < 3; ++i)
    reach[i] = std::abs(r[i * 3 + 0]) * b.extents.x +
               std::abs(r[i * 3 + 1]) * b.extents.y +
               std::abs(r[i * 3 + 2]) * b.extents.z;
  lo = b.center - reach;
  hi = b.center + reach;
}

inline double box_volume(const OrientedBox& b) {
  return 8.0 * b.extents.x * b.extents.y * b.extents.z;
}

}  // namespace detail

// Intersection-over-union of two oriented boxes. When the boxes share a
// rotation the overlap is computed analytically in their common frame;
// otherwise a seeded stratified Monte-Carlo estimate over the union AABB.
inline double box_iou_3d(const OrientedBox& a, const OrientedBox& b,
                         int samples = 200000, std::uint64_t seed = 0) {
  check(a.extents.x > 0 && a.extents.y > 0 && a.extents.z > 0 &&
            b.extents.x > 0 && b.extents.y > 0 && b.extents.z > 0,
        "box extents must be positive");
  check(samples >= 100000, "need at least 1e5 IoU samples");

  Quat rel = a.rotation.conjugate() * b.rotation;
  double rel_angle = 2.0 * std::acos(std::clamp(rel.w, -1.0, 1.0));
  if (rel_angle < 1e-12) {
    Vec3 d = rotate(a.rotation.conjugate(), b.center - a.center);
    double inter = 1.0;
    for (int i = 0; i < 3; ++i) {
      double lo = std::max(-a.extents[i], d[i] - b.extents[i]);
      double hi = std::min(a.extents[i], d[i] + b.extents[i]);
      if (hi <= lo) return 0.0;
      inter *= hi - lo;
    }
    double uni = detail::box_volume(a) + detail::box_volume(b) - inter;
    return inter / uni;
  }

  Vec3 alo, ahi, blo, bhi;
  detail::box_aabb(a, alo, ahi);
  detail::box_aabb(b, blo, bhi);
  Vec3 lo{std::min(alo.x, blo.x), std::min(alo.y, blo.y),
          std::min(alo.z, blo.z)};
  Vec3 hi{std::max(ahi.x, bhi.x), std::max(ahi.y, bhi.y),
          std::max(ahi.z, bhi.z)};

  int g = static_cast<int>(std::ceil(std::cbrt(static_cast<double>(samples))));
  Rng rng(derive_seed(seed, "box_iou"));
  long long in_both = 0, in_either = 0;
  Vec3 cell{(hi.x - lo.x) / g, (hi.y - lo.y) / g, (hi.z - lo.z) / g};
  for (int ix = 0; ix < g; ++ix)
    for (int iy = 0; iy < g; ++iy)
      for (int iz = 0; iz < g; ++iz) {
        Vec3 p{lo.x + (ix + rng.uniform()) * cell.x,
               lo.y + (iy + rng.uniform()) * cell.y,
               lo.z + (iz + rng.uniform()) * cell.z};
        bool ina = detail::box_contains(a, p);
        bool inb = detail::box_contains(b, p);
        in_both += (ina && inb);
        in_either += (ina || inb);
      }
  if (in_either == 0) return 0.0;
  return static_cast<double>(in_both) / static_cast<double>(in_either);
}

// Componentwise max - min of coordinates.
inline Vec3 aabb_size(const PointCloud& cloud) {
  validate(cloud);
  Vec3 lo = cloud.points.front(), hi = cloud.points.front();
  for (const Vec3& p : cloud.points)
    for (int i = 0; i < 3; ++i) {
      lo[i] = std::min(lo[i], p[i]);
      hi[i] = std::max(hi[i], p[i]);
    }
  return hi - lo;
}

}  // namespace cass
