#pragma once

// Procedural shape categories: parametric templates with genuine intra-class
// variation, area-uniform surface sampling, region-based colors, and posed
// partial observations.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "cass/core.hpp"
#include "cass/geom.hpp"

namespace cass {

enum class Template : std::uint32_t {
  kCan = 0,      // capped cylinder
  kBottle = 1,   // necked cylinder
  kBowl = 2,     // open hemisphere shell
  kLaptop = 3,   // hinged two-box
  kMug = 4,      // cylinder with half-torus handle
  kCamera = 5,   // box
};

struct CategorySpec {
  std::string name;
  Template shape_template = Template::kCan;
  bool has_symmetry = false;
  Vec3 symmetry_axis{0, 1, 0};
};

inline const std::vector<CategorySpec>& known_categories() {
  static const std::vector<CategorySpec> cats = {
      {"can", Template::kCan, true, {0, 1, 0}},
      {"bottle", Template::kBottle, true, {0, 1, 0}},
      {"bowl", Template::kBowl, true, {0, 1, 0}},
      {"laptop", Template::kLaptop, false, {0, 1, 0}},
      {"mug", Template::kMug, false, {0, 1, 0}},
      {"camera", Template::kCamera, false, {0, 1, 0}},
  };
  return cats;
}

inline const CategorySpec& category_by_name(const std::string& name) {
  for (const CategorySpec& c : known_categories())
    if (c.name == name) return c;
  throw std::invalid_argument("unknown category: " + name);
}

struct Instance {
  CategorySpec category;
  std::vector<double> shape_params;
  PointCloud canonical;  // centroid at origin, colors per template region
  Vec3 size;             // aabb_size(canonical), cached exactly
};

namespace detail {

// One sampled surface point plus the template region it came from; regions
// drive the procedural coloring.
struct SurfacePoint {
  Vec3 p;
  int region;
};

// Area-uniform point on a disk of the given radius in the xz-plane at height y.
inline Vec3 disk_point(double radius, double y, Rng& rng) {
  double r = radius * std::sqrt(rng.uniform());
  double a = rng.uniform(0.0, 2.0 * kPi);
  return {r * std::cos(a), y, r * std::sin(a)};
}

// Area-uniform point on an annulus (inner..outer radius) at height y.
inline Vec3 annulus_point(double inner, double outer, double y, Rng& rng) {
  double r = std::sqrt(rng.uniform(inner * inner, outer * outer));
  double a = rng.uniform(0.0, 2.0 * kPi);
  return {r * std::cos(a), y, r * std::sin(a)};
}

// Lateral cylinder surface between heights y0..y1.
inline Vec3 cylinder_point(double radius, double y0, double y1, Rng& rng) {
  double a = rng.uniform(0.0, 2.0 * kPi);
  return {radius * std::cos(a), rng.uniform(y0, y1), radius * std::sin(a)};
}

// Picks a component index with probability proportional to its area.
inline int pick_component(const std::vector<double>& areas, Rng& rng) {
  double total = std::accumulate(areas.begin(), areas.end(), 0.0);
  double u = rng.uniform(0.0, total);
  double acc = 0.0;
  for (std::size_t i = 0; i < areas.size(); ++i) {
    acc += areas[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(areas.size()) - 1;
}

// Area-uniform point on the surface of an axis-aligned box [0,ex]x[0,ey]x[0,ez]
// in its local frame. Region is the face index 0..5 (-x,+x,-y,+y,-z,+z).
inline SurfacePoint box_surface_point(double ex, double ey, double ez, Rng& rng) {
  double ax = ey * ez, ay = ex * ez, az = ex * ey;
  std::vector<double> areas = {ax, ax, ay, ay, az, az};
  int face = pick_component(areas, rng);
  double u = rng.uniform(), v = rng.uniform();
  switch (face) {
    case 0: return {{0.0, u * ey, v * ez}, 0};
    case 1: return {{ex, u * ey, v * ez}, 1};
    case 2: return {{u * ex, 0.0, v * ez}, 2};
    case 3: return {{u * ex, ey, v * ez}, 3};
    case 4: return {{u * ex, v * ey, 0.0}, 4};
    default: return {{u * ex, v * ey, ez}, 5};
  }
}

inline std::vector<SurfacePoint> sample_can(std::vector<double>& params, int m,
                                            Rng& rng) {
  double radius = rng.uniform(0.025, 0.045);
  double height = rng.uniform(0.08, 0.14);
  params = {radius, height};
  std::vector<double> areas = {2.0 * kPi * radius * height,   // lateral
                               kPi * radius * radius,          // top
                               kPi * radius * radius};         // bottom
  std::vector<SurfacePoint> out;
  out.reserve(m);
  for (int i = 0; i < m; ++i) {
    int c = pick_component(areas, rng);
    if (c == 0)
      out.push_back({cylinder_point(radius, -height / 2, height / 2, rng), 0});
    else if (c == 1)
      out.push_back({disk_point(radius, height / 2, rng), 1});
    else
      out.push_back({disk_point(radius, -height / 2, rng), 2});
  }
  return out;
}

inline std::vector<SurfacePoint> sample_bottle(std::vector<double>& params,
                                               int m, Rng& rng) {
  double body_r = rng.uniform(0.030, 0.045);
  double body_h = rng.uniform(0.10, 0.16);
  double neck_r = body_r * rng.uniform(0.30, 0.50);
  double neck_h = rng.uniform(0.03, 0.06);
  params = {body_r, body_h, neck_r, neck_h};
  double y0 = -body_h / 2;              // bottom of body
  double y1 = body_h / 2;                // shoulder
  double y2 = y1 + neck_h;               // top of neck
  std::vector<double> areas = {
      2.0 * kPi * body_r * body_h,                      // body lateral
      kPi * body_r * body_r,                             // bottom cap
      kPi * (body_r * body_r - neck_r * neck_r),         // shoulder annulus
      2.0 * kPi * neck_r * neck_h,                       // neck lateral
      kPi * neck_r * neck_r};                            // neck top cap
  std::vector<SurfacePoint> out;
  out.reserve(m);
  for (int i = 0; i < m; ++i) {
    int c = pick_component(areas, rng);
    switch (c) {
      case 0: out.push_back({cylinder_point(body_r, y0, y1, rng), 0}); break;
      case 1: out.push_back({disk_point(body_r, y0, rng), 1}); break;
      case 2: out.push_back({annulus_point(neck_r, body_r, y1, rng), 2}); break;
      case 3: out.push_back({cylinder_point(neck_r, y1, y2, rng), 3}); break;
      default: out.push_back({disk_point(neck_r, y2, rng), 4}); break;
    }
  }
  return out;
}

inline std::vector<SurfacePoint> sample_bowl(std::vector<double>& params, int m,
                                             Rng& rng) {
  double radius = rng.uniform(0.05, 0.09);
  params = {radius};
  std::vector<SurfacePoint> out;
  out.reserve(m);
  for (int i = 0; i < m; ++i) {
    // Area-uniform on a sphere means uniform in the axis coordinate; keep the
    // lower hemisphere so the bowl opens upward.
    double y = -radius * rng.uniform();
    double ring = std::sqrt(std::max(0.0, radius * radius - y * y));
    double a = rng.uniform(0.0, 2.0 * kPi);
    int region = (y < -0.5 * radius) ? 1 : 0;  // rim band vs base
    out.push_back({{ring * std::cos(a), y, ring * std::sin(a)}, region});
  }
  return out;
}

inline std::vector<SurfacePoint> sample_laptop(std::vector<double>& params,
                                               int m, Rng& rng) {
  double width = rng.uniform(0.25, 0.35);
  double depth = rng.uniform(0.18, 0.25);
  double base_t = rng.uniform(0.012, 0.020);
  // Screen clearly shorter than the base: two near-equal slabs at a hinge are
  // close to symmetric under a half-turn about the hinge bisector, which
  // leaves the pose ambiguous from geometry alone.
  double screen_h = depth * rng.uniform(0.55, 0.75);
  double screen_t = rng.uniform(0.006, 0.010);
  double angle = rng.uniform(100.0, 135.0) * kPi / 180.0;  // from closed
  params = {width, depth, base_t, screen_h, screen_t, angle};

  Vec3 hinge{0.0, base_t, -depth / 2};
  Vec3 up{0.0, std::sin(angle), -std::cos(angle)};
  Vec3 normal{0.0, std::cos(angle), std::sin(angle)};

  double base_area = 2 * (width * depth + width * base_t + depth * base_t);
  double screen_area =
      2 * (width * screen_h + width * screen_t + screen_h * screen_t);
  std::vector<double> areas = {base_area, screen_area};
  std::vector<SurfacePoint> out;
  out.reserve(m);
  for (int i = 0; i < m; ++i) {
    if (pick_component(areas, rng) == 0) {
      SurfacePoint sp = box_surface_point(width, base_t, depth, rng);
      Vec3 p{sp.p.x - width / 2, sp.p.y, sp.p.z - depth / 2};
      // Keyboard face (top of base) is its own region.
      out.push_back({p, sp.region == 3 ? 0 : 1});
    } else {
      SurfacePoint sp = box_surface_point(width, screen_h, screen_t, rng);
      Vec3 local{sp.p.x - width / 2, sp.p.y, sp.p.z - screen_t / 2};
      Vec3 p = hinge + Vec3{local.x, 0, 0} + up * local.y + normal * local.z;
      // Display face (toward keyboard) vs lid.
      out.push_back({p, sp.region == 5 ? 2 : 3});
    }
  }
  return out;
}

inline std::vector<SurfacePoint> sample_mug(std::vector<double>& params, int m,
                                            Rng& rng) {
  double radius = rng.uniform(0.035, 0.050);
  double height = rng.uniform(0.08, 0.12);
  double loop_r = height * rng.uniform(0.25, 0.32);
  double tube_r = rng.uniform(0.006, 0.009);
  params = {radius, height, loop_r, tube_r};
  double y0 = -height / 2, y1 = height / 2;
  Vec3 loop_center{radius, 0.0, 0.0};

  std::vector<double> areas = {2.0 * kPi * radius * height,  // body lateral
                               kPi * radius * radius,         // bottom
                               // half torus: (2*pi*tube_r)*(pi*loop_r)
                               2.0 * kPi * kPi * tube_r * loop_r};
  std::vector<SurfacePoint> out;
  out.reserve(m);
  for (int i = 0; i < m; ++i) {
    int c = pick_component(areas, rng);
    if (c == 0) {
      out.push_back({cylinder_point(radius, y0, y1, rng), 0});
    } else if (c == 1) {
      out.push_back({disk_point(radius, y0, rng), 1});
    } else {
      // Half torus in the xy-plane, attached to the wall at x = radius.
      // Rejection keeps the tube angle area-uniform (outer rim is larger).
      double phi = rng.uniform(-kPi / 2, kPi / 2);
      double psi;
      do {
        psi = rng.uniform(0.0, 2.0 * kPi);
      } while (rng.uniform() >=
               (1.0 + (tube_r / loop_r) * std::cos(psi)) / (1.0 + tube_r / loop_r));
      double ring = loop_r + tube_r * std::cos(psi);
      Vec3 p = loop_center +
               Vec3{ring * std::cos(phi), ring * std::sin(phi), 0.0} +
               Vec3{0.0, 0.0, tube_r * std::sin(psi)};
      out.push_back({p, 2});
    }
  }
  return out;
}

inline std::vector<SurfacePoint> sample_camera(std::vector<double>& params,
                                               int m, Rng& rng) {
  double w = rng.uniform(0.10, 0.14);
  double h = rng.uniform(0.06, 0.09);
  double d = rng.uniform(0.04, 0.07);
  // A bare box keeps its shape under three 180-degree rotations, so geometry
  // alone cannot pin the pose. Two off-center attachments break all of them
  // from any viewing side: a lens barrel on the front face and a viewfinder
  // block on the top face, offset to opposite sides.
  double lens_r = h * rng.uniform(0.34, 0.46);
  double lens_len = d * rng.uniform(0.60, 0.90);
  double lens_cx = -w * rng.uniform(0.18, 0.28);
  double vf_w = w * rng.uniform(0.26, 0.36);
  double vf_h = h * rng.uniform(0.35, 0.50);
  double vf_d = d * rng.uniform(0.50, 0.70);
  double vf_cx = w * rng.uniform(0.15, 0.25);
  params = {w, h, d, lens_r, lens_len, lens_cx, vf_w, vf_h, vf_d, vf_cx};

  double box_area = 2 * (w * h + w * d + h * d);
  double cap_area = kPi * lens_r * lens_r;
  double lens_area = 2 * kPi * lens_r * lens_len + cap_area;
  double vf_area = 2 * (vf_w * vf_h + vf_w * vf_d + vf_h * vf_d);
  std::vector<double> areas = {box_area, lens_area, vf_area};
  std::vector<SurfacePoint> out;
  out.reserve(m);
  for (int i = 0; i < m; ++i) {
    int c = pick_component(areas, rng);
    if (c == 0) {
      SurfacePoint sp = box_surface_point(w, h, d, rng);
      out.push_back({{sp.p.x - w / 2, sp.p.y - h / 2, sp.p.z - d / 2}, sp.region});
    } else if (c == 1) {
      if (rng.uniform(0.0, lens_area) < cap_area) {
        Vec3 q = disk_point(lens_r, 0.0, rng);
        out.push_back({{lens_cx + q.x, q.z, d / 2 + lens_len}, 6});
      } else {
        double a = rng.uniform(0.0, 2.0 * kPi);
        out.push_back({{lens_cx + lens_r * std::cos(a), lens_r * std::sin(a),
                        rng.uniform(d / 2, d / 2 + lens_len)},
                       6});
      }
    } else {
      SurfacePoint sp = box_surface_point(vf_w, vf_h, vf_d, rng);
      out.push_back({{vf_cx - vf_w / 2 + sp.p.x, h / 2 + sp.p.y,
                      sp.p.z - vf_d / 2},
                     7});
    }
  }
  return out;
}

inline int region_count(Template t) {
  switch (t) {
    case Template::kCan: return 3;
    case Template::kBottle: return 5;
    case Template::kBowl: return 2;
    case Template::kLaptop: return 4;
    case Template::kMug: return 3;
    case Template::kCamera: return 8;
  }
  return 1;
}

}  // namespace detail

// Draws shape parameters uniformly from the template's ranges, samples m
// surface points area-uniformly, colors them by region, and pose-normalizes
// (centroid to origin). Pure function of (category, m, seed).
inline Instance sample_instance(const CategorySpec& category, int m,
                                std::uint64_t seed) {
  check_arg(m >= 8, "instance needs at least 8 points");
  Rng rng(derive_seed(seed, "instance"));
  std::vector<detail::SurfacePoint> surf;
  Instance inst;
  inst.category = category;
  switch (category.shape_template) {
    case Template::kCan: surf = detail::sample_can(inst.shape_params, m, rng); break;
    case Template::kBottle: surf = detail::sample_bottle(inst.shape_params, m, rng); break;
    case Template::kBowl: surf = detail::sample_bowl(inst.shape_params, m, rng); break;
    case Template::kLaptop: surf = detail::sample_laptop(inst.shape_params, m, rng); break;
    case Template::kMug: surf = detail::sample_mug(inst.shape_params, m, rng); break;
    case Template::kCamera: surf = detail::sample_camera(inst.shape_params, m, rng); break;
  }

  // Per-region base colors are category-stable (hashed from the category name
  // and region index) with per-instance jitter, so photometric cues transfer
  // across instances instead of being memorized per instance. Each channel
  // then ramps along a fixed canonical axis (R along x, G along y, B along z),
  // like shading or print on a real surface; without within-region variation
  // color statistics are nearly blind to orientation.
  int regions = detail::region_count(category.shape_template);
  Rng color_rng(derive_seed(seed, "colors"));
  std::vector<Vec3> palette(regions);
  for (int r = 0; r < regions; ++r) {
    Rng base_rng(derive_seed(0, category.name, static_cast<std::uint64_t>(r)));
    auto channel = [&] {
      double base = base_rng.uniform(0.15, 0.85);
      return std::clamp(base + color_rng.uniform(-0.12, 0.12), 0.02, 0.98);
    };
    palette[r] = {channel(), channel(), channel()};
  }
  Vec3 ramp{color_rng.uniform(0.30, 0.40), color_rng.uniform(0.30, 0.40),
            color_rng.uniform(0.30, 0.40)};

  Vec3 centroid{0, 0, 0};
  for (const auto& sp : surf) centroid += sp.p;
  centroid = centroid * (1.0 / m);

  double extent = 1e-9;
  for (const auto& sp : surf) {
    Vec3 d = sp.p - centroid;
    extent = std::max({extent, std::abs(d.x), std::abs(d.y), std::abs(d.z)});
  }

  inst.canonical.points.reserve(m);
  inst.canonical.colors.reserve(m);
  for (const auto& sp : surf) {
    Vec3 p = sp.p - centroid;
    const Vec3& base = palette[sp.region];
    inst.canonical.points.push_back(p);
    inst.canonical.colors.push_back({std::clamp(base.x + ramp.x * p.x / extent, 0.0, 1.0),
                                     std::clamp(base.y + ramp.y * p.y / extent, 0.0, 1.0),
                                     std::clamp(base.z + ramp.z * p.z / extent, 0.0, 1.0)});
  }
  inst.size = aabb_size(inst.canonical);
  return inst;
}

// Uniform rotation (normalized 4D Gaussian) plus a translation drawn from the
// camera-frustum box: the camera sits at the origin looking down +z.
struct PoseRange {
  Vec3 lo{-0.25, -0.25, 0.5};
  Vec3 hi{0.25, 0.25, 1.0};
};

inline Pose random_pose(Rng& rng, const PoseRange& range = {}) {
  Quat q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  Vec3 t{rng.uniform(range.lo.x, range.hi.x), rng.uniform(range.lo.y, range.hi.y),
         rng.uniform(range.lo.z, range.hi.z)};
  return Pose(q, t);
}

// Posed partial observation: transforms the canonical cloud, keeps the
// round(visibility * M) points nearest the camera along the view axis (capped
// at max_points, uniformly thinned if over), then adds isotropic noise.
// Colors ride along from the canonical instance.
inline PointCloud render_observation(const Instance& instance, const Pose& pose,
                                     double visibility_fraction,
                                     double noise_sigma, std::uint64_t seed,
                                     int max_points = 1 << 20) {
  check_arg(visibility_fraction >= 0.3 && visibility_fraction <= 1.0,
            "visibility fraction must be in [0.3, 1]");
  check_arg(noise_sigma >= 0.0, "noise sigma must be non-negative");
  check_arg(max_points >= 8, "observation cap must be at least 8");
  validate(instance.canonical);

  PointCloud posed = apply_pose(pose, instance.canonical);
  int m = static_cast<int>(posed.points.size());
  int keep = static_cast<int>(std::lround(visibility_fraction * m));
  keep = std::clamp(keep, 0, m);
  if (keep < 8) throw error("visibility leaves fewer than 8 points");

  Vec3 axis = norm(pose.t) > 1e-9 ? normalized(pose.t) : Vec3{0, 0, 1};
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dot(posed.points[a], axis) < dot(posed.points[b], axis);
  });
  order.resize(keep);

  Rng rng(derive_seed(seed, "observation"));
  if (keep > max_points) {
    // Partial Fisher-Yates: uniform subsample without replacement.
    for (int i = 0; i < max_points; ++i) {
      int j = i + rng.uniform_int(keep - i);
      std::swap(order[i], order[j]);
    }
    order.resize(max_points);
  }
  std::sort(order.begin(), order.end());  // original point order

  PointCloud out;
  out.points.reserve(order.size());
  out.colors.reserve(order.size());
  for (int idx : order) {
    Vec3 p = posed.points[idx];
    if (noise_sigma > 0.0)
      p += Vec3{rng.normal(0.0, noise_sigma), rng.normal(0.0, noise_sigma),
                rng.normal(0.0, noise_sigma)};
    out.points.push_back(p);
    out.colors.push_back(posed.colors[idx]);
  }
  return out;
}

}  // namespace cass
