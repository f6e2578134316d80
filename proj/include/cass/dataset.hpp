#pragma once

// In-memory dataset plus the versioned on-disk container. Arrays are stored
// as 32-bit little-endian floats with an FNV-1a trailer; read(write(x))
// reproduces x exactly at 32-bit precision.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cass/core.hpp"
#include "cass/geom.hpp"
#include "cass/shapegen.hpp"

namespace cass {

struct DatasetInstance {
  std::uint32_t id = 0;
  std::uint32_t category = 0;  // index into Dataset::categories
  std::vector<double> shape_params;
  Vec3 size;
  PointCloud canonical;
};

struct DatasetRecord {
  std::uint32_t id = 0;
  std::uint32_t instance = 0;  // index into Dataset::instances
  Pose gt_pose;
  PointCloud observed;  // camera frame
};

struct Dataset {
  std::vector<CategorySpec> categories;
  std::uint32_t points_m = 0;
  std::uint32_t obs_points_p = 0;
  std::uint64_t gen_seed = 0;
  std::vector<DatasetInstance> instances;
  std::vector<DatasetRecord> records;
};

struct GenOptions {
  std::vector<std::string> categories{"bottle", "laptop", "camera"};
  int instances_per_category = 200;
  int views_per_instance = 4;
  int points_m = 128;
  int obs_points_p = 96;
  double visibility = 0.8;
  double noise_sigma = 0.002;
  std::uint64_t seed = 1;
};

// Pure function of its options: every instance and view draws from a seed
// derived from its indices, so generation order (or parallelism) cannot
// change the result.
inline Dataset generate_dataset(const GenOptions& opt) {
  check_arg(!opt.categories.empty(), "need at least one category");
  check_arg(opt.instances_per_category >= 1, "need at least one instance");
  check_arg(opt.views_per_instance >= 1, "need at least one view");
  check_arg(opt.points_m >= 8, "need at least 8 canonical points");
  check_arg(opt.obs_points_p >= 8 && opt.obs_points_p <= opt.points_m,
            "observation cap must be in [8, M]");

  Dataset ds;
  ds.points_m = static_cast<std::uint32_t>(opt.points_m);
  ds.obs_points_p = static_cast<std::uint32_t>(opt.obs_points_p);
  ds.gen_seed = opt.seed;
  for (const std::string& name : opt.categories)
    ds.categories.push_back(category_by_name(name));

  for (std::size_t c = 0; c < ds.categories.size(); ++c) {
    for (int i = 0; i < opt.instances_per_category; ++i) {
      DatasetInstance di;
      di.id = static_cast<std::uint32_t>(ds.instances.size());
      di.category = static_cast<std::uint32_t>(c);
      Instance inst = sample_instance(
          ds.categories[c], opt.points_m,
          derive_seed(opt.seed, "instance", c, static_cast<std::uint64_t>(i)));
      di.shape_params = inst.shape_params;
      di.size = inst.size;
      di.canonical = inst.canonical;
      std::uint32_t inst_id = di.id;
      ds.instances.push_back(std::move(di));

      for (int v = 0; v < opt.views_per_instance; ++v) {
        std::uint64_t view_seed =
            derive_seed(opt.seed, "view", inst_id, static_cast<std::uint64_t>(v));
        Rng pose_rng(derive_seed(view_seed, "pose"));
        DatasetRecord rec;
        rec.id = static_cast<std::uint32_t>(ds.records.size());
        rec.instance = inst_id;
        rec.gt_pose = random_pose(pose_rng);
        rec.observed =
            render_observation(inst, rec.gt_pose, opt.visibility,
                               opt.noise_sigma, view_seed, opt.obs_points_p);
        ds.records.push_back(std::move(rec));
      }
    }
  }
  return ds;
}

// Held-out split: every fifth instance (and all its views) is test data.
inline bool is_test_instance(std::uint32_t instance_index) {
  return instance_index % 5 == 4;
}

namespace detail {

inline constexpr char kDatasetMagic[8] = {'C', 'A', 'S', 'S',
                                          'D', 'A', 'T', 'A'};
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void write_vec3_f32(std::ostream& os, const Vec3& v) {
  write_f32(os, static_cast<float>(v.x));
  write_f32(os, static_cast<float>(v.y));
  write_f32(os, static_cast<float>(v.z));
}

inline Vec3 read_vec3_f32(std::istream& is) {
  Vec3 v;
  v.x = read_f32(is);
  v.y = read_f32(is);
  v.z = read_f32(is);
  return v;
}

inline void write_cloud_f32(std::ostream& os, const PointCloud& c) {
  write_u32(os, static_cast<std::uint32_t>(c.points.size()));
  for (const Vec3& p : c.points) write_vec3_f32(os, p);
  write_u32(os, static_cast<std::uint32_t>(c.colors.size()));
  for (const Vec3& p : c.colors) write_vec3_f32(os, p);
}

inline PointCloud read_cloud_f32(std::istream& is, std::uint32_t max_points) {
  PointCloud c;
  std::uint32_t n = read_u32(is);
  if (n > max_points) throw io_error("point count exceeds header cap");
  c.points.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) c.points.push_back(read_vec3_f32(is));
  std::uint32_t nc = read_u32(is);
  if (nc != 0 && nc != n) throw io_error("color count mismatch");
  c.colors.reserve(nc);
  for (std::uint32_t i = 0; i < nc; ++i) c.colors.push_back(read_vec3_f32(is));
  return c;
}

}  // namespace detail

inline void write_dataset(const Dataset& ds, const std::string& path) {
  std::ostringstream payload(std::ios::binary);
  write_u32(payload, detail::kDatasetVersion);
  write_u32(payload, static_cast<std::uint32_t>(ds.categories.size()));
  for (const CategorySpec& c : ds.categories) {
    write_str(payload, c.name);
    write_u32(payload, static_cast<std::uint32_t>(c.shape_template));
    write_u32(payload, c.has_symmetry ? 1u : 0u);
    detail::write_vec3_f32(payload, c.symmetry_axis);
  }
  write_u32(payload, ds.points_m);
  write_u32(payload, ds.obs_points_p);
  write_u64(payload, ds.gen_seed);

  write_u32(payload, static_cast<std::uint32_t>(ds.instances.size()));
  for (const DatasetInstance& inst : ds.instances) {
    write_u32(payload, inst.id);
    write_u32(payload, inst.category);
    write_u32(payload, static_cast<std::uint32_t>(inst.shape_params.size()));
    for (double p : inst.shape_params) write_f32(payload, static_cast<float>(p));
    detail::write_vec3_f32(payload, inst.size);
    detail::write_cloud_f32(payload, inst.canonical);
  }

  write_u32(payload, static_cast<std::uint32_t>(ds.records.size()));
  for (const DatasetRecord& rec : ds.records) {
    write_u32(payload, rec.id);
    write_u32(payload, rec.instance);
    write_f32(payload, static_cast<float>(rec.gt_pose.q.w));
    write_f32(payload, static_cast<float>(rec.gt_pose.q.x));
    write_f32(payload, static_cast<float>(rec.gt_pose.q.y));
    write_f32(payload, static_cast<float>(rec.gt_pose.q.z));
    detail::write_vec3_f32(payload, rec.gt_pose.t);
    detail::write_cloud_f32(payload, rec.observed);
  }

  std::string body = payload.str();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  os.write(detail::kDatasetMagic, sizeof detail::kDatasetMagic);
  os.write(body.data(), static_cast<std::streamsize>(body.size()));
  write_u64(os, fnv1a(body.data(), body.size()));
  if (!os) throw io_error("write failed: " + path);
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  std::string all = buf.str();
  if (all.size() < sizeof(detail::kDatasetMagic) + 12)
    throw io_error("dataset file truncated: " + path);
  if (std::memcmp(all.data(), detail::kDatasetMagic,
                  sizeof detail::kDatasetMagic) != 0)
    throw io_error("not a dataset file: " + path);

  std::string body = all.substr(sizeof detail::kDatasetMagic,
                                all.size() - sizeof(detail::kDatasetMagic) - 8);
  std::istringstream tail(all.substr(all.size() - 8), std::ios::binary);
  std::uint64_t stored = read_u64(tail);
  if (stored != fnv1a(body.data(), body.size()))
    throw io_error("dataset checksum mismatch: " + path);

  std::istringstream isb(body, std::ios::binary);
  std::uint32_t version = read_u32(isb);
  if (version != detail::kDatasetVersion)
    throw io_error("unsupported dataset version");

  Dataset ds;
  std::uint32_t ncat = read_u32(isb);
  if (ncat == 0 || ncat > 64) throw io_error("bad category count");
  for (std::uint32_t i = 0; i < ncat; ++i) {
    CategorySpec c;
    c.name = read_str(isb, 256);
    std::uint32_t tpl = read_u32(isb);
    if (tpl > static_cast<std::uint32_t>(Template::kCamera))
      throw io_error("bad template id");
    c.shape_template = static_cast<Template>(tpl);
    c.has_symmetry = read_u32(isb) != 0;
    c.symmetry_axis = detail::read_vec3_f32(isb);
    ds.categories.push_back(std::move(c));
  }
  ds.points_m = read_u32(isb);
  ds.obs_points_p = read_u32(isb);
  ds.gen_seed = read_u64(isb);
  if (ds.points_m < 8 || ds.points_m > (1u << 20))
    throw io_error("bad canonical point count");

  std::uint32_t ninst = read_u32(isb);
  ds.instances.reserve(ninst);
  for (std::uint32_t i = 0; i < ninst; ++i) {
    DatasetInstance inst;
    inst.id = read_u32(isb);
    inst.category = read_u32(isb);
    if (inst.category >= ncat) throw io_error("bad category index");
    std::uint32_t nparams = read_u32(isb);
    if (nparams > 64) throw io_error("bad parameter count");
    inst.shape_params.reserve(nparams);
    for (std::uint32_t k = 0; k < nparams; ++k)
      inst.shape_params.push_back(read_f32(isb));
    inst.size = detail::read_vec3_f32(isb);
    inst.canonical = detail::read_cloud_f32(isb, ds.points_m);
    ds.instances.push_back(std::move(inst));
  }

  std::uint32_t nrec = read_u32(isb);
  ds.records.reserve(nrec);
  for (std::uint32_t i = 0; i < nrec; ++i) {
    DatasetRecord rec;
    rec.id = read_u32(isb);
    rec.instance = read_u32(isb);
    if (rec.instance >= ninst) throw io_error("bad instance index");
    float qw = read_f32(isb), qx = read_f32(isb), qy = read_f32(isb),
          qz = read_f32(isb);
    Vec3 t = detail::read_vec3_f32(isb);
    rec.gt_pose = Pose(Quat::from_stored(qw, qx, qy, qz), t);
    rec.observed = detail::read_cloud_f32(isb, ds.points_m);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

// Checksum of a file's full contents; manifests record these.
inline std::uint64_t file_checksum(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof buf);
    h = fnv1a(buf, static_cast<std::size_t>(is.gcount()), h);
  }
  return h;
}

}  // namespace cass
