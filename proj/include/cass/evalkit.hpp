#pragma once

// Evaluation protocol: pose/size inference, pass-fraction metrics at the
// standard thresholds, reconstruction tables, threshold sweeps, and a linear
// probe quantifying how much viewpoint information each feature carries.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "cass/core.hpp"
#include "cass/dataset.hpp"
#include "cass/geom.hpp"
#include "cass/nets.hpp"
#include "cass/svg.hpp"
#include "cass/tensor.hpp"

namespace cass {

struct PredictionRecord {
  std::uint32_t record_id = 0;
  std::uint32_t category = 0;
  Pose pred_pose;
  Vec3 pred_size;
  PointCloud pred_cloud;
  Pose gt_pose;
  Vec3 gt_size;
  PointCloud gt_canonical;
};

struct EvalOptions {
  int iou_samples = 200000;
  std::uint64_t iou_seed = 0;
};

// Noise-free inference (z = mu) for one observation record.
inline PredictionRecord predict(const Model& model, const Dataset& data,
                                int record_index) {
  check_arg(record_index >= 0 &&
                record_index < static_cast<int>(data.records.size()),
            "record index out of range");
  const DatasetRecord& rec = data.records[record_index];
  const DatasetInstance& inst = data.instances[rec.instance];

  Graph::NoGrad ng;
  Tensor raw = points_tensor(rec.observed);
  Tensor centroid = patch_centroid(raw);
  Tensor pts = center_rows(raw, centroid);
  Tensor cols = colors_tensor(rec.observed);
  const bool no_cass = model.config().ablation == "no_cass";
  Tensor mu = model.encode_observation(pts, cols).mu;
  Tensor f_vf = no_cass ? Tensor::zeros(1, model.config().latent_dim) : mu;
  Tensor f_geo = model.encode_points_pose(pts);
  Tensor f_pho = model.encode_photometric(pts, cols);
  PosePrediction pp = model.pose_head(f_vf, f_pho, f_geo);

  PredictionRecord out;
  out.record_id = rec.id;
  out.category = inst.category;
  out.pred_pose =
      Pose(Quat(pp.quat.value(0, 0), pp.quat.value(0, 1), pp.quat.value(0, 2),
                pp.quat.value(0, 3)),
           {pp.translation.value(0, 0) + centroid.value(0, 0),
            pp.translation.value(0, 1) + centroid.value(0, 1),
            pp.translation.value(0, 2) + centroid.value(0, 2)});
  out.pred_cloud = cloud_from_tensor(model.decode_latent(mu));
  out.pred_size = aabb_size(out.pred_cloud);
  out.gt_pose = rec.gt_pose;
  out.gt_size = inst.size;
  out.gt_canonical = inst.canonical;
  return out;
}

inline std::vector<PredictionRecord> predict_records(
    const Model& model, const Dataset& data, const std::vector<int>& indices) {
  check_arg(!indices.empty(), "no records to evaluate");
  std::vector<PredictionRecord> out;
  out.reserve(indices.size());
  for (int ri : indices) out.push_back(predict(model, data, ri));
  return out;
}

namespace detail {

// Removes the symmetry-axis component of the prediction's rotation relative
// to ground truth: returns pred composed with the canonical-frame axis spin
// that brings it as close to gt as possible. Composing pred with any axis
// spin beforehand leaves the result unchanged.
inline Pose despin_about_axis(const Pose& pred, const Pose& gt,
                              const Vec3& axis) {
  Vec3 a = normalized(axis);
  Quat qrel = gt.q.conjugate() * pred.q;
  double va = qrel.x * a.x + qrel.y * a.y + qrel.z * a.z;
  if (std::abs(va) < 1e-15 && std::abs(qrel.w) < 1e-15) return pred;
  double theta = 2.0 * std::atan2(-va, qrel.w);
  return Pose(pred.q * Quat::from_axis_angle(a, theta), pred.t);
}

// Uniform without-replacement subsample preserving input order.
inline PointCloud subsample_cloud(const PointCloud& c, std::size_t k,
                                  std::uint64_t seed) {
  if (c.points.size() <= k) return c;
  std::vector<std::size_t> idx(c.points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.uniform_int(static_cast<int>(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  PointCloud out;
  out.points.reserve(k);
  for (std::size_t i : idx) out.points.push_back(c.points[i]);
  if (!c.colors.empty())
    for (std::size_t i : idx) out.colors.push_back(c.colors[i]);
  return out;
}

}  // namespace detail

// Per-record measurements every report is built from.
struct RecordStats {
  std::uint32_t record_id = 0;
  std::uint32_t category = 0;
  double iou = 0.0;
  double rot_deg = 0.0;  // symmetry-aware where the category declares an axis
  double trans_m = 0.0;
  double cd = 0.0;   // meters
  double emd = 0.0;  // meters
};

inline std::vector<RecordStats> record_stats(
    const std::vector<PredictionRecord>& preds,
    const std::vector<CategorySpec>& categories, const EvalOptions& opt = {}) {
  check_arg(!preds.empty(), "no predictions");
  std::vector<RecordStats> out;
  out.reserve(preds.size());
  for (const PredictionRecord& p : preds) {
    check_arg(p.category < categories.size(), "prediction category out of range");
    const CategorySpec& cat = categories[p.category];
    const Vec3* axis = cat.has_symmetry ? &cat.symmetry_axis : nullptr;

    RecordStats s;
    s.record_id = p.record_id;
    s.category = p.category;
    s.rot_deg = rotation_error(p.pred_pose, p.gt_pose, axis);
    s.trans_m = translation_error(p.pred_pose, p.gt_pose);

    // Symmetric categories get the spin removed before the box overlap, so
    // the IoU shares the metrics' invariance to symmetry-axis rotations.
    Pose box_pose = axis ? detail::despin_about_axis(p.pred_pose, p.gt_pose,
                                                     cat.symmetry_axis)
                         : p.pred_pose;
    s.iou = box_iou_3d(box_from_pose_size(box_pose, p.pred_size),
                       box_from_pose_size(p.gt_pose, p.gt_size),
                       opt.iou_samples,
                       derive_seed(opt.iou_seed, "iou", p.record_id));

    s.cd = chamfer(p.pred_cloud, p.gt_canonical);
    std::size_t n = std::min({p.pred_cloud.points.size(),
                              p.gt_canonical.points.size(),
                              static_cast<std::size_t>(kEmdExactCap)});
    s.emd = emd(
        detail::subsample_cloud(p.pred_cloud, n,
                                derive_seed(0xE3D, "emd_a", p.record_id)),
        detail::subsample_cloud(p.gt_canonical, n,
                                derive_seed(0xE3D, "emd_b", p.record_id)));
    out.push_back(s);
  }
  return out;
}

enum class MapCriterion { kIou25, kIou50, k5deg5cm, k10deg5cm, k10deg10cm };

inline bool criterion_pass(const RecordStats& s, MapCriterion c) {
  switch (c) {
    case MapCriterion::kIou25: return s.iou > 0.25;
    case MapCriterion::kIou50: return s.iou > 0.50;
    case MapCriterion::k5deg5cm: return s.rot_deg < 5.0 && s.trans_m < 0.05;
    case MapCriterion::k10deg5cm: return s.rot_deg < 10.0 && s.trans_m < 0.05;
    case MapCriterion::k10deg10cm: return s.rot_deg < 10.0 && s.trans_m < 0.10;
  }
  throw error("unreachable criterion");
}

inline double map_from_stats(const std::vector<RecordStats>& stats,
                             MapCriterion c) {
  check_arg(!stats.empty(), "no records");
  int pass = 0;
  for (const RecordStats& s : stats) pass += criterion_pass(s, c);
  return static_cast<double>(pass) / stats.size();
}

// Detections are perfect in this pipeline, so average precision reduces to
// the fraction of records meeting the criterion.
inline double compute_map(const std::vector<PredictionRecord>& preds,
                          MapCriterion c,
                          const std::vector<CategorySpec>& categories,
                          const EvalOptions& opt = {}) {
  return map_from_stats(record_stats(preds, categories, opt), c);
}

// Pass fractions at arbitrary thresholds (used by the sweep curves).
inline double iou_fraction(const std::vector<RecordStats>& stats,
                           double iou_thresh) {
  check_arg(!stats.empty(), "no records");
  int pass = 0;
  for (const RecordStats& s : stats) pass += s.iou > iou_thresh;
  return static_cast<double>(pass) / stats.size();
}

inline double pose_fraction(const std::vector<RecordStats>& stats,
                            double rot_deg, double trans_m) {
  check_arg(!stats.empty(), "no records");
  int pass = 0;
  for (const RecordStats& s : stats)
    pass += s.rot_deg < rot_deg && s.trans_m < trans_m;
  return static_cast<double>(pass) / stats.size();
}

struct MetricRow {
  std::string category;  // "overall" for the aggregate row
  int count = 0;
  double iou25 = 0, iou50 = 0;
  double d5cm5 = 0, d10cm5 = 0, d10cm10 = 0;
  double cd_x1e3 = 0;  // mean chamfer, reported in units of 1e-3
  double emd = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;  // per category, then "overall" last

  const MetricRow& overall() const {
    check(!rows.empty(), "empty report");
    return rows.back();
  }
};

inline MetricReport report_from_stats(
    const std::vector<RecordStats>& stats,
    const std::vector<CategorySpec>& categories) {
  check_arg(!stats.empty(), "no records");
  MetricReport report;
  auto make_row = [&](const std::string& name,
                      const std::vector<const RecordStats*>& group) {
    MetricRow row;
    row.category = name;
    row.count = static_cast<int>(group.size());
    for (const RecordStats* s : group) {
      row.iou25 += criterion_pass(*s, MapCriterion::kIou25);
      row.iou50 += criterion_pass(*s, MapCriterion::kIou50);
      row.d5cm5 += criterion_pass(*s, MapCriterion::k5deg5cm);
      row.d10cm5 += criterion_pass(*s, MapCriterion::k10deg5cm);
      row.d10cm10 += criterion_pass(*s, MapCriterion::k10deg10cm);
      row.cd_x1e3 += s->cd * 1e3;
      row.emd += s->emd;
    }
    double inv = 1.0 / row.count;
    row.iou25 *= inv;
    row.iou50 *= inv;
    row.d5cm5 *= inv;
    row.d10cm5 *= inv;
    row.d10cm10 *= inv;
    row.cd_x1e3 *= inv;
    row.emd *= inv;
    return row;
  };

  for (std::size_t c = 0; c < categories.size(); ++c) {
    std::vector<const RecordStats*> group;
    for (const RecordStats& s : stats)
      if (s.category == c) group.push_back(&s);
    if (!group.empty()) report.rows.push_back(make_row(categories[c].name, group));
  }
  std::vector<const RecordStats*> all;
  for (const RecordStats& s : stats) all.push_back(&s);
  report.rows.push_back(make_row("overall", all));
  return report;
}

inline MetricReport evaluate(const std::vector<PredictionRecord>& preds,
                             const std::vector<CategorySpec>& categories,
                             const EvalOptions& opt = {}) {
  return report_from_stats(record_stats(preds, categories, opt), categories);
}

inline void write_metric_csv(const MetricReport& report,
                             const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open metric csv for writing: " + path);
  os << "category,count,IoU25,IoU50,5d5cm,10d5cm,10d10cm,CD,EMD\n";
  char buf[256];
  for (const MetricRow& r : report.rows) {
    std::snprintf(buf, sizeof buf,
                  "%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.category.c_str(), r.count, r.iou25, r.iou50, r.d5cm5,
                  r.d10cm5, r.d10cm10, r.cd_x1e3, r.emd);
    os << buf;
  }
  if (!os) throw io_error("write failure on metric csv: " + path);
}

struct ApCurves {
  std::vector<std::string> categories;  // per-category rows, "overall" last
  std::vector<double> iou_grid;         // thresholds, strictly ascending
  std::vector<double> rot_grid_deg;
  std::vector<double> trans_grid_cm;
  // ap[category_index][threshold_index]
  std::vector<std::vector<double>> iou_ap, rot_ap, trans_ap;
};

inline std::vector<double> linear_grid(double lo, double hi, int steps) {
  check_arg(steps >= 2 && hi > lo, "bad grid");
  std::vector<double> g(steps);
  for (int i = 0; i < steps; ++i) g[i] = lo + (hi - lo) * i / (steps - 1);
  return g;
}

inline ApCurves ap_curves(const std::vector<RecordStats>& stats,
                          const std::vector<CategorySpec>& categories,
                          const std::vector<double>& iou_grid,
                          const std::vector<double>& rot_grid_deg,
                          const std::vector<double>& trans_grid_cm) {
  check_arg(!stats.empty(), "no records");
  auto check_grid = [](const std::vector<double>& g, const char* name) {
    check_arg(!g.empty(), std::string("empty sweep grid: ") + name);
    for (std::size_t i = 1; i < g.size(); ++i)
      check_arg(g[i] > g[i - 1],
                std::string("sweep grid must be strictly ascending: ") + name);
  };
  check_grid(iou_grid, "iou");
  check_grid(rot_grid_deg, "rotation");
  check_grid(trans_grid_cm, "translation");

  ApCurves curves;
  curves.iou_grid = iou_grid;
  curves.rot_grid_deg = rot_grid_deg;
  curves.trans_grid_cm = trans_grid_cm;

  std::vector<std::vector<RecordStats>> groups;
  for (std::size_t c = 0; c < categories.size(); ++c) {
    std::vector<RecordStats> g;
    for (const RecordStats& s : stats)
      if (s.category == c) g.push_back(s);
    if (!g.empty()) {
      groups.push_back(std::move(g));
      curves.categories.push_back(categories[c].name);
    }
  }
  groups.push_back(stats);
  curves.categories.push_back("overall");

  const double inf = std::numeric_limits<double>::infinity();
  for (const auto& g : groups) {
    std::vector<double> iou_row, rot_row, trans_row;
    for (double t : iou_grid) iou_row.push_back(iou_fraction(g, t));
    for (double t : rot_grid_deg) rot_row.push_back(pose_fraction(g, t, inf));
    for (double t : trans_grid_cm)
      trans_row.push_back(pose_fraction(g, inf, t / 100.0));
    curves.iou_ap.push_back(std::move(iou_row));
    curves.rot_ap.push_back(std::move(rot_row));
    curves.trans_ap.push_back(std::move(trans_row));
  }
  return curves;
}

inline ApCurves ap_curves(const std::vector<RecordStats>& stats,
                          const std::vector<CategorySpec>& categories) {
  return ap_curves(stats, categories, linear_grid(0.0, 1.0, 21),
                   linear_grid(0.0, 60.0, 21), linear_grid(0.0, 10.0, 21));
}

inline void write_ap_csv(const ApCurves& curves, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open curve csv for writing: " + path);
  os << "metric,category,threshold,ap\n";
  char buf[160];
  auto emit = [&](const char* metric, const std::vector<double>& grid,
                  const std::vector<std::vector<double>>& ap) {
    for (std::size_t c = 0; c < curves.categories.size(); ++c)
      for (std::size_t i = 0; i < grid.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%.17g\n", metric,
                      curves.categories[c].c_str(), grid[i], ap[c][i]);
        os << buf;
      }
  };
  emit("iou", curves.iou_grid, curves.iou_ap);
  emit("rotation_deg", curves.rot_grid_deg, curves.rot_ap);
  emit("translation_cm", curves.trans_grid_cm, curves.trans_ap);
  if (!os) throw io_error("write failure on curve csv: " + path);
}

inline void write_ap_svg(const ApCurves& curves, const std::string& path) {
  auto panel = [&](const std::string& title, const std::string& x_label,
                   const std::vector<double>& grid,
                   const std::vector<std::vector<double>>& ap) {
    SvgPanel p;
    p.title = title;
    p.x_label = x_label;
    p.y_label = "average precision";
    for (std::size_t c = 0; c < curves.categories.size(); ++c) {
      SvgSeries s;
      s.label = curves.categories[c];
      for (std::size_t i = 0; i < grid.size(); ++i)
        s.xy.emplace_back(grid[i], ap[c][i]);
      p.series.push_back(std::move(s));
    }
    return p;
  };
  write_svg_chart(
      {panel("AP vs 3D IoU", "IoU threshold", curves.iou_grid, curves.iou_ap),
       panel("AP vs rotation", "rotation threshold (deg)", curves.rot_grid_deg,
             curves.rot_ap),
       panel("AP vs translation", "translation threshold (cm)",
             curves.trans_grid_cm, curves.trans_ap)},
      path);
}

// ---------------------------------------------------------------------------
// View-factorization probe: closed-form ridge regression from a feature to
// the ground-truth rotation (6D representation: first two matrix columns),
// scored by geodesic error on a held-out split.

namespace detail {

// Solves A X = B for SPD A via Cholesky; A is d*d row-major, B is d*m.
inline std::vector<double> cholesky_solve(std::vector<double> a, int d,
                                          std::vector<double> b, int m) {
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = a[i * d + j];
      for (int k = 0; k < j; ++k) sum -= a[i * d + k] * a[j * d + k];
      if (i == j) {
        if (!(sum > 0.0)) throw numeric_error("probe system is not SPD");
        a[i * d + j] = std::sqrt(sum);
      } else {
        a[i * d + j] = sum / a[j * d + j];
      }
    }
  }
  for (int col = 0; col < m; ++col) {
    for (int i = 0; i < d; ++i) {
      double sum = b[i * m + col];
      for (int k = 0; k < i; ++k) sum -= a[i * d + k] * b[k * m + col];
      b[i * m + col] = sum / a[i * d + i];
    }
    for (int i = d - 1; i >= 0; --i) {
      double sum = b[i * m + col];
      for (int k = i + 1; k < d; ++k) sum -= a[k * d + i] * b[k * m + col];
      b[i * m + col] = sum / a[i * d + i];
    }
  }
  return b;
}

// Orthonormalizes a 6D prediction (two column vectors) into a rotation.
inline std::array<double, 9> gram_schmidt_rotation(
    const std::array<double, 6>& y) {
  Vec3 c1{y[0], y[1], y[2]}, c2{y[3], y[4], y[5]};
  Vec3 b1 = norm(c1) > 1e-12 ? normalized(c1) : Vec3{1, 0, 0};
  Vec3 r = c2 - b1 * dot(b1, c2);
  Vec3 b2;
  if (norm(r) > 1e-12) {
    b2 = normalized(r);
  } else {
    Vec3 alt = std::abs(b1.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    b2 = normalized(alt - b1 * dot(b1, alt));
  }
  Vec3 b3 = cross(b1, b2);
  return {b1.x, b2.x, b3.x, b1.y, b2.y, b3.y, b1.z, b2.z, b3.z};
}

inline double matrix_angle_deg(const std::array<double, 9>& ra,
                               const std::array<double, 9>& rb) {
  double tr = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) tr += ra[i * 3 + j] * rb[i * 3 + j];
  double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

inline double axis_image_angle_deg(const std::array<double, 9>& ra,
                                   const std::array<double, 9>& rb,
                                   const Vec3& axis) {
  Vec3 a = normalized(axis);
  auto apply = [](const std::array<double, 9>& r, const Vec3& v) {
    return Vec3{r[0] * v.x + r[1] * v.y + r[2] * v.z,
                r[3] * v.x + r[4] * v.y + r[5] * v.z,
                r[6] * v.x + r[7] * v.y + r[8] * v.z};
  };
  double c = std::clamp(dot(apply(ra, a), apply(rb, a)), -1.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

struct ProbeData {
  std::vector<std::vector<double>> x;        // features
  std::vector<std::array<double, 6>> y;      // gt rotation, 6D rep
  std::vector<std::array<double, 9>> gt_r;   // gt rotation matrices
  std::vector<std::uint32_t> category;
};

// Fits ridge regression on the train rows and returns the median
// symmetry-aware geodesic error over the test rows.
inline double probe_error_deg(const ProbeData& data,
                              const std::vector<int>& train,
                              const std::vector<int>& test,
                              const std::vector<CategorySpec>& categories) {
  const int dim = static_cast<int>(data.x[0].size());
  const int d = dim + 1;  // bias column

  std::vector<double> mean(dim, 0.0), stdev(dim, 0.0);
  for (int i : train)
    for (int j = 0; j < dim; ++j) mean[j] += data.x[i][j];
  for (double& v : mean) v /= train.size();
  for (int i : train)
    for (int j = 0; j < dim; ++j) {
      double z = data.x[i][j] - mean[j];
      stdev[j] += z * z;
    }
  for (double& v : stdev) v = std::max(std::sqrt(v / train.size()), 1e-9);

  auto feature_row = [&](int i) {
    std::vector<double> row(d);
    for (int j = 0; j < dim; ++j) row[j] = (data.x[i][j] - mean[j]) / stdev[j];
    row[dim] = 1.0;
    return row;
  };

  const double lambda = 1e-3 * train.size();
  std::vector<double> ata(static_cast<std::size_t>(d) * d, 0.0);
  std::vector<double> atb(static_cast<std::size_t>(d) * 6, 0.0);
  for (int i : train) {
    std::vector<double> row = feature_row(i);
    for (int p = 0; p < d; ++p) {
      for (int q = 0; q <= p; ++q) ata[p * d + q] += row[p] * row[q];
      for (int t = 0; t < 6; ++t) atb[p * 6 + t] += row[p] * data.y[i][t];
    }
  }
  for (int p = 0; p < d; ++p) {
    for (int q = p + 1; q < d; ++q) ata[p * d + q] = ata[q * d + p];
    ata[p * d + p] += lambda;
  }
  std::vector<double> w = cholesky_solve(std::move(ata), d, std::move(atb), 6);

  std::vector<double> errs;
  errs.reserve(test.size());
  for (int i : test) {
    std::vector<double> row = feature_row(i);
    std::array<double, 6> pred{};
    for (int t = 0; t < 6; ++t)
      for (int p = 0; p < d; ++p) pred[t] += row[p] * w[p * 6 + t];
    std::array<double, 9> rp = gram_schmidt_rotation(pred);
    const CategorySpec& cat = categories[data.category[i]];
    errs.push_back(cat.has_symmetry
                       ? axis_image_angle_deg(rp, data.gt_r[i], cat.symmetry_axis)
                       : matrix_angle_deg(rp, data.gt_r[i]));
  }
  std::sort(errs.begin(), errs.end());
  std::size_t n = errs.size();
  return n % 2 ? errs[n / 2] : 0.5 * (errs[n / 2 - 1] + errs[n / 2]);
}

inline ProbeData probe_data(const Model& model, const Dataset& data,
                            const std::vector<int>& records, bool use_vf) {
  Graph::NoGrad ng;
  ProbeData out;
  for (int ri : records) {
    const DatasetRecord& rec = data.records[ri];
    Tensor raw = points_tensor(rec.observed);
    Tensor pts = center_rows(raw, patch_centroid(raw));
    Tensor feat;
    if (use_vf) {
      Tensor cols = colors_tensor(rec.observed);
      feat = model.encode_observation(pts, cols).mu;
    } else {
      feat = model.encode_points_pose(pts);
    }
    out.x.push_back(feat.data());
    auto r = to_matrix(rec.gt_pose.q);
    // first two matrix columns
    out.y.push_back({r[0], r[3], r[6], r[1], r[4], r[7]});
    out.gt_r.push_back(r);
    out.category.push_back(data.instances[rec.instance].category);
  }
  return out;
}

}  // namespace detail

struct ProbeReport {
  double vf_deg = 0.0;          // trained shape-space feature
  double geo_deg = 0.0;         // trained pose-geometry feature
  double chance_vf_deg = 0.0;   // untrained weights, same probe
  double chance_geo_deg = 0.0;
  int train_count = 0;
  int test_count = 0;
};

// Quantifies view factorization: a feature that discards viewpoint supports
// rotation regression no better than untrained weights do.
inline ProbeReport factorization_probe(const Model& trained,
                                       const Model& untrained,
                                       const Dataset& data,
                                       const std::vector<int>& records,
                                       std::uint64_t seed) {
  check_arg(records.size() >= 50, "probe needs at least 50 records");
  std::vector<int> order(records);
  Rng rng(derive_seed(seed, "probe_split"));
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    std::size_t j = i + rng.uniform_int(static_cast<int>(order.size() - i));
    std::swap(order[i], order[j]);
  }
  std::size_t n_train = order.size() * 7 / 10;
  std::vector<int> train_rows, test_rows;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_train ? train_rows : test_rows).push_back(static_cast<int>(i));

  ProbeReport report;
  report.train_count = static_cast<int>(train_rows.size());
  report.test_count = static_cast<int>(test_rows.size());

  const std::vector<CategorySpec>& cats = data.categories;
  detail::ProbeData vf = detail::probe_data(trained, data, order, true);
  detail::ProbeData geo = detail::probe_data(trained, data, order, false);
  detail::ProbeData cvf = detail::probe_data(untrained, data, order, true);
  detail::ProbeData cgeo = detail::probe_data(untrained, data, order, false);
  report.vf_deg = detail::probe_error_deg(vf, train_rows, test_rows, cats);
  report.geo_deg = detail::probe_error_deg(geo, train_rows, test_rows, cats);
  report.chance_vf_deg =
      detail::probe_error_deg(cvf, train_rows, test_rows, cats);
  report.chance_geo_deg =
      detail::probe_error_deg(cgeo, train_rows, test_rows, cats);
  return report;
}

inline void write_probe_csv(const ProbeReport& r, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open probe csv for writing: " + path);
  char buf[160];
  os << "feature,median_error_deg,chance_error_deg\n";
  std::snprintf(buf, sizeof buf, "f_vf,%.17g,%.17g\n", r.vf_deg,
                r.chance_vf_deg);
  os << buf;
  std::snprintf(buf, sizeof buf, "f_geo,%.17g,%.17g\n", r.geo_deg,
                r.chance_geo_deg);
  os << buf;
  if (!os) throw io_error("write failure on probe csv: " + path);
}

}  // namespace cass
