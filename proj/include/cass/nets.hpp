#pragma once

// Network definitions: the shared point-set encoder (one weight set, two call
// sites), the variational observation encoder, the photometric encoder, the
// folding decoder, and the pose head.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "cass/checkpoint.hpp"
#include "cass/core.hpp"
#include "cass/geom.hpp"
#include "cass/tensor.hpp"

namespace cass {

struct NetConfig {
  int latent_dim = 64;
  int points_m = 128;
  std::string decoder_template = "grid";  // grid | ellipsoid
  std::string ablation = "none";  // none | no_cass | no_bm | no_dm | no_vae
};

inline void validate_net_config(const NetConfig& c) {
  check_arg(c.latent_dim >= 4, "latent dimension must be at least 4");
  check_arg(c.points_m >= 8, "decoder needs at least 8 output points");
  check_arg(c.decoder_template == "grid" || c.decoder_template == "ellipsoid",
            "decoder template must be grid or ellipsoid");
  check_arg(c.ablation == "none" || c.ablation == "no_cass" ||
                c.ablation == "no_bm" || c.ablation == "no_dm" ||
                c.ablation == "no_vae",
            "unknown ablation tag: " + c.ablation);
}

struct LatentCode {
  Tensor mu;
  Tensor logvar;
};

struct PosePrediction {
  Tensor quat;         // [1,4] unit, w >= 0
  Tensor translation;  // [1,3] meters
};

// Converts a geometry cloud into constant [n,3] tensors.
inline Tensor points_tensor(const PointCloud& c) {
  validate(c);
  std::vector<double> data;
  data.reserve(c.points.size() * 3);
  for (const Vec3& p : c.points) {
    data.push_back(p.x);
    data.push_back(p.y);
    data.push_back(p.z);
  }
  return Tensor::from_data(static_cast<int>(c.points.size()), 3,
                           std::move(data));
}

inline Tensor colors_tensor(const PointCloud& c) {
  validate(c);
  int n = static_cast<int>(c.points.size());
  if (c.colors.empty()) return Tensor::zeros(n, 3);
  std::vector<double> data;
  data.reserve(c.colors.size() * 3);
  for (const Vec3& p : c.colors) {
    data.push_back(p.x);
    data.push_back(p.y);
    data.push_back(p.z);
  }
  return Tensor::from_data(n, 3, std::move(data));
}

// Observed patches are centroid-normalized before every encoder so they live
// in the same coordinate range as canonical clouds; the pose head's
// translation output is then a residual from the patch centroid.
inline Tensor patch_centroid(const Tensor& points) {
  check(points.cols() == 3 && points.rows() > 0, "centroid expects [m,3]");
  std::vector<double> c(3, 0.0);
  for (int i = 0; i < points.rows(); ++i)
    for (int j = 0; j < 3; ++j) c[j] += points.value(i, j);
  for (double& v : c) v /= points.rows();
  return Tensor::from_data(1, 3, std::move(c));
}

inline Tensor center_rows(const Tensor& points, const Tensor& centroid) {
  check(points.cols() == 3 && centroid.rows() == 1 && centroid.cols() == 3,
        "center_rows expects [m,3] points and a [1,3] centroid");
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(points.rows()) * 3);
  for (int i = 0; i < points.rows(); ++i)
    for (int j = 0; j < 3; ++j)
      data.push_back(points.value(i, j) - centroid.value(0, j));
  return Tensor::from_data(points.rows(), 3, std::move(data));
}

inline PointCloud cloud_from_tensor(const Tensor& t) {
  check(t.cols() == 3, "cloud tensor must have 3 columns");
  PointCloud c;
  c.points.reserve(t.rows());
  for (int i = 0; i < t.rows(); ++i)
    c.points.push_back({t.value(i, 0), t.value(i, 1), t.value(i, 2)});
  return c;
}

namespace detail {

struct Linear {
  Tensor W;  // [in, out]
  Tensor b;  // [1, out]
};

inline Linear make_linear(int in, int out, Rng& rng, bool zero_init = false) {
  std::vector<double> w(static_cast<std::size_t>(in) * out, 0.0);
  std::vector<double> bias(out, 0.0);
  if (!zero_init) {
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w) v = rng.uniform(-bound, bound);
    for (double& v : bias) v = rng.uniform(-bound, bound);
  }
  return {Tensor::from_data(in, out, std::move(w), true),
          Tensor::row(std::move(bias), true)};
}

inline Tensor apply_linear(const Linear& l, const Tensor& x) {
  return add_rowvec(matmul(x, l.W), l.b);
}

// Hidden layer: linear, per-row feature standardization, relu. The final
// layer of every head stays purely linear.
inline Tensor hidden(const Linear& l, const Tensor& x) {
  return relu(feature_norm(apply_linear(l, x)));
}

// Near-square lattice over [-1,1]^2, first m points.
inline Tensor make_grid(int m) {
  int gw = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(m))));
  int gh = (m + gw - 1) / gw;
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m) * 2);
  for (int i = 0; i < m; ++i) {
    int r = i / gw, c = i % gw;
    double u = gw > 1 ? -1.0 + 2.0 * c / (gw - 1) : 0.0;
    double v = gh > 1 ? -1.0 + 2.0 * r / (gh - 1) : 0.0;
    data.push_back(u);
    data.push_back(v);
  }
  return Tensor::from_data(m, 2, std::move(data));
}

// Fibonacci lattice on an ellipsoid with semi-axes (1, 0.75, 0.5).
inline Tensor make_ellipsoid(int m) {
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m) * 3);
  for (int i = 0; i < m; ++i) {
    double t = (i + 0.5) / m;
    double y = 1.0 - 2.0 * t;
    double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    double phi = 2.0 * kPi * i / golden;
    data.push_back(r * std::cos(phi));
    data.push_back(0.75 * y);
    data.push_back(0.5 * r * std::sin(phi));
  }
  return Tensor::from_data(m, 3, std::move(data));
}

}  // namespace detail

// All weights live here. The point encoder appears once; both call sites
// (shape embedding and pose features) share its storage unless the no_dm
// ablation splits them into two independent copies.
class Model {
 public:
  Model(const NetConfig& config, std::uint64_t seed)
      : config_(config), init_seed_(seed) {
    validate_net_config(config);
    int n = config.latent_dim;
    Rng rng(derive_seed(seed, "init"));

    point_l1_ = detail::make_linear(3, 64, rng);
    point_l2_ = detail::make_linear(64, 128, rng);
    point_l3_ = detail::make_linear(128, n, rng);

    obs_l1_ = detail::make_linear(6, 64, rng);
    obs_l2_ = detail::make_linear(64, 128, rng);
    obs_l3_ = detail::make_linear(128, n, rng);
    obs_mu_ = detail::make_linear(n, n, rng);
    obs_logvar_ = detail::make_linear(n, n, rng, /*zero_init=*/true);

    pho_l1_ = detail::make_linear(6, 64, rng);
    pho_l2_ = detail::make_linear(64, 128, rng);
    pho_l3_ = detail::make_linear(128, n, rng);

    int fold_in = n + (config.decoder_template == "grid" ? 2 : 3);
    dec_l1_ = detail::make_linear(fold_in, 256, rng);
    dec_l2_ = detail::make_linear(256, 128, rng);
    dec_l3_ = detail::make_linear(128, 3, rng);

    int bundle = config.ablation == "no_cass" ? 2 * n : 3 * n;
    head_l1_ = detail::make_linear(bundle, 256, rng);
    head_l2_ = detail::make_linear(256, 128, rng);
    head_l3_ = detail::make_linear(128, 64, rng);
    head_l4_ = detail::make_linear(64, 7, rng);

    if (config.ablation == "no_dm") {
      // Independent second encoder, same initial values: a fresh stream
      // seeded like the first one reproduces them.
      Rng rng_b(derive_seed(seed, "init"));
      point_b_l1_ = detail::make_linear(3, 64, rng_b);
      point_b_l2_ = detail::make_linear(64, 128, rng_b);
      point_b_l3_ = detail::make_linear(128, n, rng_b);
    }

    grid_ = config.decoder_template == "grid"
                ? detail::make_grid(config.points_m)
                : detail::make_ellipsoid(config.points_m);
  }

  const NetConfig& config() const { return config_; }
  std::uint64_t init_seed() const { return init_seed_; }

  // Shape-embedding call site: [m,3] -> [1,N]. Permutation-invariant.
  Tensor encode_points(const Tensor& cloud) const {
    check(cloud.cols() == 3, "point encoder expects [m,3]");
    check(cloud.rows() >= 8, "point encoder needs at least 8 points");
    Tensor h = detail::hidden(point_l1_, cloud);
    h = detail::hidden(point_l2_, h);
    h = detail::apply_linear(point_l3_, h);
    return colwise_max(h);
  }

  // Pose-feature call site: same weights (Siamese) unless no_dm.
  Tensor encode_points_pose(const Tensor& cloud) const {
    check(cloud.cols() == 3, "point encoder expects [m,3]");
    check(cloud.rows() >= 8, "point encoder needs at least 8 points");
    const detail::Linear& l1 = config_.ablation == "no_dm" ? point_b_l1_ : point_l1_;
    const detail::Linear& l2 = config_.ablation == "no_dm" ? point_b_l2_ : point_l2_;
    const detail::Linear& l3 = config_.ablation == "no_dm" ? point_b_l3_ : point_l3_;
    Tensor h = detail::hidden(l1, cloud);
    h = detail::hidden(l2, h);
    h = detail::apply_linear(l3, h);
    return colwise_max(h);
  }

  // Observation -> posterior over the latent code. Colors may be zeros.
  LatentCode encode_observation(const Tensor& points, const Tensor& colors) const {
    check(points.cols() == 3 && colors.cols() == 3,
          "observation encoder expects [p,3] points and colors");
    check(points.rows() == colors.rows(), "points/colors row mismatch");
    check(points.rows() >= 8, "observation needs at least 8 points");
    Tensor x = concat_cols(points, colors);
    Tensor h = detail::hidden(obs_l1_, x);
    h = detail::hidden(obs_l2_, h);
    h = detail::apply_linear(obs_l3_, h);
    Tensor global = colwise_mean(h);
    return {detail::apply_linear(obs_mu_, global),
            detail::apply_linear(obs_logvar_, global)};
  }

  // Colors are required here; this branch exists to carry photometric signal.
  Tensor encode_photometric(const Tensor& points, const Tensor& colors) const {
    check(points.cols() == 3 && colors.cols() == 3,
          "photometric encoder expects [p,3] points and colors");
    check(points.rows() == colors.rows(), "points/colors row mismatch");
    check(points.rows() >= 8, "observation needs at least 8 points");
    Tensor x = concat_cols(colors, points);
    Tensor h = detail::hidden(pho_l1_, x);
    h = detail::hidden(pho_l2_, h);
    h = detail::apply_linear(pho_l3_, h);
    return colwise_mean(h);
  }

  // Folds the template primitive through a conditioned map: [1,N] -> [M,3].
  Tensor decode_latent(const Tensor& z) const {
    check(z.rows() == 1 && z.cols() == config_.latent_dim,
          "decoder expects a [1,N] code");
    Tensor zrep = repeat_rows(z, config_.points_m);
    Tensor x = concat_cols(zrep, grid_);
    Tensor h = detail::hidden(dec_l1_, x);
    h = detail::hidden(dec_l2_, h);
    return detail::apply_linear(dec_l3_, h);
  }

  // (f_vf, f_pho, f_geo) -> pose. Under no_cass the f_vf input is dropped.
  PosePrediction pose_head(const Tensor& f_vf, const Tensor& f_pho,
                           const Tensor& f_geo) const {
    int n = config_.latent_dim;
    check(f_pho.rows() == 1 && f_pho.cols() == n, "f_pho must be [1,N]");
    check(f_geo.rows() == 1 && f_geo.cols() == n, "f_geo must be [1,N]");
    Tensor bundle = concat_cols(f_pho, f_geo);
    if (config_.ablation != "no_cass") {
      check(f_vf.rows() == 1 && f_vf.cols() == n, "f_vf must be [1,N]");
      bundle = concat_cols(f_vf, bundle);
    }
    Tensor h = detail::hidden(head_l1_, bundle);
    h = detail::hidden(head_l2_, h);
    h = detail::hidden(head_l3_, h);
    Tensor out = detail::apply_linear(head_l4_, h);
    return {quat_normalize(slice_cols(out, 0, 4)), slice_cols(out, 4, 3)};
  }

  // Fixed-order registry; names are stable and serialize into checkpoints.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto put = [&out](const std::string& name, const detail::Linear& l) {
      out.emplace_back(name + ".W", l.W);
      out.emplace_back(name + ".b", l.b);
    };
    put("point_encoder.l1", point_l1_);
    put("point_encoder.l2", point_l2_);
    put("point_encoder.l3", point_l3_);
    put("obs_encoder.l1", obs_l1_);
    put("obs_encoder.l2", obs_l2_);
    put("obs_encoder.l3", obs_l3_);
    put("obs_encoder.mu", obs_mu_);
    put("obs_encoder.logvar", obs_logvar_);
    put("pho_encoder.l1", pho_l1_);
    put("pho_encoder.l2", pho_l2_);
    put("pho_encoder.l3", pho_l3_);
    put("decoder.l1", dec_l1_);
    put("decoder.l2", dec_l2_);
    put("decoder.l3", dec_l3_);
    put("pose_head.l1", head_l1_);
    put("pose_head.l2", head_l2_);
    put("pose_head.l3", head_l3_);
    put("pose_head.l4", head_l4_);
    if (config_.ablation == "no_dm") {
      put("point_encoder_b.l1", point_b_l1_);
      put("point_encoder_b.l2", point_b_l2_);
      put("point_encoder_b.l3", point_b_l3_);
    }
    return out;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  // Stage-1 trainable set: the VAE (shared point encoder, observation
  // encoder, decoder).
  std::vector<Tensor> vae_parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters())
      if (name.rfind("point_encoder.", 0) == 0 ||
          name.rfind("obs_encoder.", 0) == 0 || name.rfind("decoder.", 0) == 0)
        out.push_back(t);
    return out;
  }

  // Stage-2 trainable set: pose-dependent extractors and the head. Under
  // no_dm the duplicated point encoder trains here (the original stays part
  // of the frozen VAE).
  std::vector<Tensor> pose_parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters())
      if (name.rfind("pho_encoder.", 0) == 0 ||
          name.rfind("pose_head.", 0) == 0 ||
          name.rfind("point_encoder_b.", 0) == 0)
        out.push_back(t);
    return out;
  }

  const Tensor& decoder_grid() const { return grid_; }

 private:
  NetConfig config_;
  std::uint64_t init_seed_;
  detail::Linear point_l1_, point_l2_, point_l3_;
  detail::Linear point_b_l1_, point_b_l2_, point_b_l3_;  // no_dm only
  detail::Linear obs_l1_, obs_l2_, obs_l3_, obs_mu_, obs_logvar_;
  detail::Linear pho_l1_, pho_l2_, pho_l3_;
  detail::Linear dec_l1_, dec_l2_, dec_l3_;
  detail::Linear head_l1_, head_l2_, head_l3_, head_l4_;
  Tensor grid_;
};

inline void save_model(const Model& model, const std::string& path,
                       const std::map<std::string, std::string>& extra = {}) {
  Checkpoint ckpt;
  ckpt.header["latent_dim"] = std::to_string(model.config().latent_dim);
  ckpt.header["points_m"] = std::to_string(model.config().points_m);
  ckpt.header["decoder_template"] = model.config().decoder_template;
  ckpt.header["ablation"] = model.config().ablation;
  ckpt.header["init_seed"] = std::to_string(model.init_seed());
  for (const auto& [k, v] : extra) ckpt.header[k] = v;
  ckpt.params = model.named_parameters();
  save_checkpoint(ckpt, path);
}

inline Model load_model(const std::string& path,
                        std::map<std::string, std::string>* header_out = nullptr) {
  Checkpoint ckpt = load_checkpoint(path);
  auto need = [&ckpt, &path](const std::string& key) {
    auto it = ckpt.header.find(key);
    if (it == ckpt.header.end())
      throw io_error("checkpoint missing header key " + key + ": " + path);
    return it->second;
  };
  NetConfig config;
  config.latent_dim = std::stoi(need("latent_dim"));
  config.points_m = std::stoi(need("points_m"));
  config.decoder_template = need("decoder_template");
  config.ablation = need("ablation");
  std::uint64_t seed = std::stoull(need("init_seed"));

  Model model(config, seed);
  auto params = model.named_parameters();
  if (params.size() != ckpt.params.size())
    throw io_error("checkpoint parameter count mismatch: " + path);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor* stored = ckpt.find(params[i].first);
    if (!stored) throw io_error("checkpoint missing " + params[i].first);
    if (stored->rows() != params[i].second.rows() ||
        stored->cols() != params[i].second.cols())
      throw io_error("checkpoint shape mismatch for " + params[i].first);
    params[i].second.mutable_data() = stored->data();
  }
  if (header_out) *header_out = ckpt.header;
  return model;
}

}  // namespace cass
