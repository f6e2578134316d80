#pragma once

// Losses, batch mixing, the three-stage schedule, and ablation handling.

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cass/core.hpp"
#include "cass/dataset.hpp"
#include "cass/geom.hpp"
#include "cass/nets.hpp"
#include "cass/optim.hpp"
#include "cass/tensor.hpp"

namespace cass {

struct TrainConfig {
  int latent_dim = 64;
  int points_m = 128;
  int obs_points_p = 96;
  double kl_weight = 1e-3;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-6;
  int iters_s1 = 4000;
  int iters_s2 = 4000;
  int iters_s3 = 2000;
  int lr_decay_every = 2000;
  int batch_size = 8;
  double mix_ratio = 0.5;
  std::uint64_t seed = 1;
  std::string ablation = "none";
  std::string decoder_template = "grid";
  // "auto" takes symmetry flags from the dataset's category table.
  std::string symmetric_categories = "auto";
  double align_weight = 1.0;  // no_bm latent-alignment strength
  int log_every = 50;
};

inline void validate_train_config(const TrainConfig& c) {
  check_arg(c.latent_dim >= 4, "latent_dim must be at least 4");
  check_arg(c.points_m >= 8 && c.obs_points_p >= 8, "point counts too small");
  check_arg(c.kl_weight >= 0.0, "kl_weight must be non-negative");
  check_arg(c.lr > 0.0, "lr must be positive");
  check_arg(c.iters_s1 > 0 && c.iters_s2 > 0 && c.iters_s3 > 0,
            "stage iteration counts must be positive");
  check_arg(c.lr_decay_every > 0, "lr_decay_every must be positive");
  check_arg(c.batch_size >= 2, "batch_size must be at least 2 when mixing");
  check_arg(c.mix_ratio > 0.0 && c.mix_ratio < 1.0,
            "mix_ratio must be in (0,1)");
  check_arg(c.align_weight >= 0.0, "align_weight must be non-negative");
  check_arg(c.log_every > 0, "log_every must be positive");
  NetConfig nc;
  nc.latent_dim = c.latent_dim;
  nc.points_m = c.points_m;
  nc.decoder_template = c.decoder_template;
  nc.ablation = c.ablation;
  validate_net_config(nc);
}

inline std::string serialize_train_config(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "latent_dim=" << c.latent_dim << "\n";
  os << "points_m=" << c.points_m << "\n";
  os << "obs_points_p=" << c.obs_points_p << "\n";
  os << "kl_weight=" << c.kl_weight << "\n";
  os << "lr=" << c.lr << "\n";
  os << "beta1=" << c.beta1 << "\n";
  os << "beta2=" << c.beta2 << "\n";
  os << "weight_decay=" << c.weight_decay << "\n";
  os << "iters_s1=" << c.iters_s1 << "\n";
  os << "iters_s2=" << c.iters_s2 << "\n";
  os << "iters_s3=" << c.iters_s3 << "\n";
  os << "lr_decay_every=" << c.lr_decay_every << "\n";
  os << "batch_size=" << c.batch_size << "\n";
  os << "mix_ratio=" << c.mix_ratio << "\n";
  os << "seed=" << c.seed << "\n";
  os << "ablation=" << c.ablation << "\n";
  os << "decoder_template=" << c.decoder_template << "\n";
  os << "symmetric_categories=" << c.symmetric_categories << "\n";
  os << "align_weight=" << c.align_weight << "\n";
  os << "log_every=" << c.log_every << "\n";
  return os.str();
}

inline TrainConfig parse_train_config(std::istream& is) {
  TrainConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    check_arg(eq != std::string::npos,
              "config line " + std::to_string(lineno) + " is not key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    try {
      if (key == "latent_dim") c.latent_dim = std::stoi(val);
      else if (key == "points_m") c.points_m = std::stoi(val);
      else if (key == "obs_points_p") c.obs_points_p = std::stoi(val);
      else if (key == "kl_weight") c.kl_weight = std::stod(val);
      else if (key == "lr") c.lr = std::stod(val);
      else if (key == "beta1") c.beta1 = std::stod(val);
      else if (key == "beta2") c.beta2 = std::stod(val);
      else if (key == "weight_decay") c.weight_decay = std::stod(val);
      else if (key == "iters_s1") c.iters_s1 = std::stoi(val);
      else if (key == "iters_s2") c.iters_s2 = std::stoi(val);
      else if (key == "iters_s3") c.iters_s3 = std::stoi(val);
      else if (key == "lr_decay_every") c.lr_decay_every = std::stoi(val);
      else if (key == "batch_size") c.batch_size = std::stoi(val);
      else if (key == "mix_ratio") c.mix_ratio = std::stod(val);
      else if (key == "seed") c.seed = std::stoull(val);
      else if (key == "ablation") c.ablation = val;
      else if (key == "decoder_template") c.decoder_template = val;
      else if (key == "symmetric_categories") c.symmetric_categories = val;
      else if (key == "align_weight") c.align_weight = std::stod(val);
      else if (key == "log_every") c.log_every = std::stoi(val);
      else throw std::invalid_argument("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception&) {
      throw std::invalid_argument("bad value for config key " + key + ": " + val);
    }
  }
  validate_train_config(c);
  return c;
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open config: " + path);
  return parse_train_config(is);
}

// Batch of training items: canonical entries index instances, observation
// entries index records.
struct MixedBatch {
  std::vector<int> canonical;
  std::vector<int> observation;
};

// Draws ceil(ratio*size) canonical items and the rest observations, uniformly
// with replacement. A ratio of exactly 1 degenerates to canonical-only;
// any ratio below 1 keeps at least one item of each modality.
inline MixedBatch mix_batch(const std::vector<int>& canonical_pool,
                            const std::vector<int>& observation_pool,
                            int size, double ratio, std::uint64_t seed) {
  check_arg(size >= 2, "batch size must be at least 2");
  check_arg(ratio > 0.0 && ratio <= 1.0, "mix ratio must be in (0,1]");
  check(!canonical_pool.empty(), "canonical pool is empty");
  int n_canon = static_cast<int>(std::ceil(ratio * size));
  if (ratio < 1.0) n_canon = std::min(n_canon, size - 1);
  n_canon = std::max(n_canon, 1);
  if (n_canon < size) check(!observation_pool.empty(), "observation pool is empty");

  Rng rng(derive_seed(seed, "mix_batch"));
  MixedBatch batch;
  for (int i = 0; i < n_canon; ++i)
    batch.canonical.push_back(
        canonical_pool[rng.uniform_int(static_cast<int>(canonical_pool.size()))]);
  for (int i = n_canon; i < size; ++i)
    batch.observation.push_back(
        observation_pool[rng.uniform_int(static_cast<int>(observation_pool.size()))]);
  return batch;
}

struct CassLossBreakdown {
  Tensor total;
  double recon_canonical = 0.0;
  double recon_observation = 0.0;
  double kl = 0.0;
  double align = 0.0;
};

struct LossPoint {
  int stage = 0;
  int iteration = 0;
  std::string term;
  double value = 0.0;
};

inline void write_loss_csv(const std::vector<LossPoint>& curve,
                           const std::string& path) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open loss csv for writing: " + path);
  os << "stage,iteration,term,value\n";
  char buf[64];
  for (const LossPoint& p : curve) {
    std::snprintf(buf, sizeof buf, "%.17g", p.value);
    os << p.stage << "," << p.iteration << "," << p.term << "," << buf << "\n";
  }
  if (!os) throw io_error("write failure on loss csv: " + path);
}

// Pose loss on a canonical cloud: mean point-wise distance between the two
// posed clouds. Symmetric categories relax point-wise matching to the
// Chamfer distance. gt_posed must be a constant [M,3] tensor.
inline Tensor loss_pose(const PosePrediction& pred, const Tensor& gt_posed,
                        const Tensor& canonical, bool symmetric) {
  Tensor pred_posed =
      add_rowvec(quat_rotate(pred.quat, canonical), pred.translation);
  if (symmetric) return chamfer_loss(pred_posed, gt_posed);
  return mean_all(sqrt(rowwise_sum(square(sub(pred_posed, gt_posed)))));
}

inline Tensor loss_pose(const PosePrediction& pred, const Pose& gt,
                        const Tensor& canonical, bool symmetric) {
  Tensor gt_posed;
  {
    Graph::NoGrad ng;
    Tensor q = Tensor::from_data(1, 4, {gt.q.w, gt.q.x, gt.q.y, gt.q.z});
    Tensor t = Tensor::from_data(1, 3, {gt.t.x, gt.t.y, gt.t.z});
    gt_posed = add_rowvec(quat_rotate(q, canonical), t);
  }
  return loss_pose(pred, gt_posed, canonical, symmetric);
}

// Owns the model, the split, and per-item constant tensors for one training
// run over one dataset.
class TrainSession {
 public:
  TrainSession(const TrainConfig& config, const Dataset& data)
      : TrainSession(config, data,
                     Model(net_config(config), derive_seed(config.seed, "model"))) {}

  TrainSession(const TrainConfig& config, const Dataset& data, Model model)
      : config_(config), data_(&data), model_(std::move(model)) {
    validate_train_config(config);
    check_arg(static_cast<int>(data.points_m) == config.points_m,
              "config points_m does not match dataset");
    check(model_.config().latent_dim == config.latent_dim &&
              model_.config().ablation == config.ablation,
          "model architecture does not match config");

    for (std::size_t i = 0; i < data.instances.size(); ++i)
      (is_test_instance(static_cast<std::uint32_t>(i)) ? test_instances_
                                                       : train_instances_)
          .push_back(static_cast<int>(i));
    for (std::size_t r = 0; r < data.records.size(); ++r)
      (is_test_instance(data.records[r].instance) ? test_records_
                                                  : train_records_)
          .push_back(static_cast<int>(r));
    check(!train_instances_.empty(), "training split is empty");

    canonical_t_.reserve(data.instances.size());
    for (const DatasetInstance& inst : data.instances)
      canonical_t_.push_back(points_tensor(inst.canonical));
    obs_points_t_.reserve(data.records.size());
    obs_colors_t_.reserve(data.records.size());
    gt_posed_t_.reserve(data.records.size());
    obs_centroid_t_.reserve(data.records.size());
    for (const DatasetRecord& rec : data.records) {
      // Patches are stored centroid-normalized; the centroid is added back to
      // the pose head's translation output.
      Tensor raw = points_tensor(rec.observed);
      Tensor centroid = patch_centroid(raw);
      obs_centroid_t_.push_back(centroid);
      obs_points_t_.push_back(center_rows(raw, centroid));
      obs_colors_t_.push_back(colors_tensor(rec.observed));
      gt_posed_t_.push_back(points_tensor(
          apply_pose(rec.gt_pose, data.instances[rec.instance].canonical)));
    }

    symmetric_.assign(data.categories.size(), false);
    if (config.symmetric_categories == "auto") {
      for (std::size_t c = 0; c < data.categories.size(); ++c)
        symmetric_[c] = data.categories[c].has_symmetry;
    } else {
      std::stringstream ss(config.symmetric_categories);
      std::string name;
      while (std::getline(ss, name, ',')) {
        if (name.empty()) continue;
        bool found = false;
        for (std::size_t c = 0; c < data.categories.size(); ++c)
          if (data.categories[c].name == name) {
            symmetric_[c] = true;
            found = true;
          }
        check_arg(found, "symmetric category not in dataset: " + name);
      }
    }
  }

  static NetConfig net_config(const TrainConfig& c) {
    NetConfig nc;
    nc.latent_dim = c.latent_dim;
    nc.points_m = c.points_m;
    nc.decoder_template = c.decoder_template;
    nc.ablation = c.ablation;
    return nc;
  }

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  const Dataset& data() const { return *data_; }
  const std::vector<int>& train_instances() const { return train_instances_; }
  const std::vector<int>& test_instances() const { return test_instances_; }
  const std::vector<int>& train_records() const { return train_records_; }
  const std::vector<int>& test_records() const { return test_records_; }
  const std::vector<LossPoint>& curve() const { return curve_; }
  bool category_symmetric(std::uint32_t c) const { return symmetric_.at(c); }

  bool record_symmetric(int record_index) const {
    const DatasetRecord& rec = data_->records[record_index];
    return symmetric_[data_->instances[rec.instance].category];
  }

  Vec3 category_axis(std::uint32_t c) const {
    return data_->categories[c].symmetry_axis;
  }

  // Shape-space loss over a mixed (or single-modality) batch. Gradients from
  // both modalities reach the shared latent space in one backward pass.
  CassLossBreakdown loss_cass(const MixedBatch& batch, Rng& noise_rng) {
    check(!batch.canonical.empty() || !batch.observation.empty(),
          "empty batch");
    const bool no_vae = config_.ablation == "no_vae";
    const bool no_bm = config_.ablation == "no_bm";
    CassLossBreakdown out;
    Tensor total = Tensor::scalar(0.0);

    if (!batch.canonical.empty()) {
      Tensor acc = Tensor::scalar(0.0);
      for (int inst : batch.canonical) {
        const Tensor& x = canonical_t_[inst];
        Tensor z = model_.encode_points(x);
        Tensor recon = model_.decode_latent(z);
        acc = add(acc, chamfer_loss(x, recon));
      }
      Tensor mean_c = scale(acc, 1.0 / batch.canonical.size());
      out.recon_canonical = mean_c.item();
      total = add(total, mean_c);
    }

    if (!batch.observation.empty()) {
      Tensor recon_acc = Tensor::scalar(0.0);
      Tensor kl_acc = Tensor::scalar(0.0);
      Tensor align_acc = Tensor::scalar(0.0);
      for (int ri : batch.observation) {
        const DatasetRecord& rec = data_->records[ri];
        LatentCode code =
            model_.encode_observation(obs_points_t_[ri], obs_colors_t_[ri]);
        Tensor z;
        if (no_vae) {
          z = code.mu;
        } else {
          std::vector<double> noise(static_cast<std::size_t>(config_.latent_dim));
          for (double& v : noise) v = noise_rng.normal();
          z = reparameterize(code.mu, code.logvar, Tensor::row(noise));
        }
        Tensor recon = model_.decode_latent(z);
        // The decoder lives in canonical frame, so a posed partial view must
        // reconstruct the paired complete canonical shape.
        recon_acc = add(recon_acc, chamfer_loss(canonical_t_[rec.instance], recon));
        if (!no_vae)
          kl_acc = add(kl_acc, kl_standard_normal(code.mu, code.logvar));
        if (no_bm) {
          Tensor target;
          {
            Graph::NoGrad ng;
            target = model_.encode_points(canonical_t_[rec.instance]);
          }
          align_acc = add(align_acc, sum_all(square(sub(code.mu, target))));
        }
      }
      double inv = 1.0 / batch.observation.size();
      Tensor mean_o = scale(recon_acc, inv);
      out.recon_observation = mean_o.item();
      total = add(total, mean_o);
      if (!no_vae) {
        Tensor mean_kl = scale(kl_acc, inv);
        out.kl = mean_kl.item();
        total = add(total, scale(mean_kl, config_.kl_weight));
      }
      if (no_bm) {
        Tensor mean_align = scale(align_acc, inv);
        out.align = mean_align.item();
        total = add(total, scale(mean_align, config_.align_weight));
      }
    }

    out.total = total;
    return out;
  }

  // Transformed-cloud pose loss for one record. Non-symmetric: mean
  // point-wise distance between the two posed canonical clouds. Symmetric
  // categories relax point-wise matching to the Chamfer distance.
  Tensor loss_pose(int record_index, const PosePrediction& pred) {
    const DatasetRecord& rec = data_->records[record_index];
    return cass::loss_pose(pred, gt_posed_t_[record_index],
                           canonical_t_[rec.instance],
                           record_symmetric(record_index));
  }

  // Pose features for one observation record. When frozen_vae is set the
  // shape-space encoders run without recording, so no gradient can reach
  // them (stage 2 contract); the no_dm duplicate encoder is never frozen.
  PosePrediction predict_pose(int ri, bool frozen_vae) {
    Tensor f_vf, f_geo;
    const bool no_dm = config_.ablation == "no_dm";
    const bool no_cass = config_.ablation == "no_cass";
    if (frozen_vae) {
      Graph::NoGrad ng;
      if (!no_cass)
        f_vf = model_.encode_observation(obs_points_t_[ri], obs_colors_t_[ri]).mu;
      if (!no_dm) f_geo = model_.encode_points_pose(obs_points_t_[ri]);
    } else {
      if (!no_cass)
        f_vf = model_.encode_observation(obs_points_t_[ri], obs_colors_t_[ri]).mu;
      if (!no_dm) f_geo = model_.encode_points_pose(obs_points_t_[ri]);
    }
    if (no_dm) f_geo = model_.encode_points_pose(obs_points_t_[ri]);
    if (no_cass) f_vf = Tensor::zeros(1, config_.latent_dim);
    Tensor f_pho =
        model_.encode_photometric(obs_points_t_[ri], obs_colors_t_[ri]);
    PosePrediction raw = model_.pose_head(f_vf, f_pho, f_geo);
    return {raw.quat, add(raw.translation, obs_centroid_t_[ri])};
  }

  // One optimization stage. Appends to the loss curve; NaN anywhere aborts
  // with a numeric_error naming the stage and iteration.
  void run_stage(int stage) {
    check_arg(stage >= 1 && stage <= 3, "stage must be 1, 2, or 3");
    const bool no_bm = config_.ablation == "no_bm";
    std::vector<Tensor> trainable;
    switch (stage) {
      case 1: trainable = model_.vae_parameters(); break;
      case 2: trainable = model_.pose_parameters(); break;
      default: trainable = model_.parameters(); break;
    }
    AdamState adam;
    adam.beta1 = config_.beta1;
    adam.beta2 = config_.beta2;
    adam.weight_decay = config_.weight_decay;
    adam.reset(trainable);

    int iters = stage == 1   ? config_.iters_s1
                : stage == 2 ? config_.iters_s2
                             : config_.iters_s3;
    for (int it = 0; it < iters; ++it) {
      adam.lr = config_.lr /
                std::pow(10.0, static_cast<double>(it / config_.lr_decay_every));
      std::uint64_t batch_seed =
          derive_seed(config_.seed, "batch", static_cast<std::uint64_t>(stage),
                      static_cast<std::uint64_t>(it));
      Rng noise_rng(derive_seed(config_.seed, "noise",
                                static_cast<std::uint64_t>(stage),
                                static_cast<std::uint64_t>(it)));

      Graph graph;
      Graph::Scope scope(graph);
      Tensor loss;
      CassLossBreakdown breakdown;
      bool have_breakdown = false;

      if (stage == 1) {
        MixedBatch batch = make_stage_batch(no_bm, it, batch_seed);
        breakdown = loss_cass(batch, noise_rng);
        have_breakdown = true;
        loss = breakdown.total;
      } else if (stage == 2) {
        std::vector<int> obs = draw_observations(config_.batch_size, batch_seed);
        Tensor acc = Tensor::scalar(0.0);
        for (int ri : obs) acc = add(acc, loss_pose(ri, predict_pose(ri, true)));
        loss = scale(acc, 1.0 / obs.size());
      } else {
        MixedBatch batch = make_stage_batch(no_bm, it, batch_seed);
        breakdown = loss_cass(batch, noise_rng);
        have_breakdown = true;
        std::vector<int> obs = batch.observation;
        if (obs.empty()) obs = draw_observations(config_.batch_size / 2, batch_seed);
        Tensor acc = Tensor::scalar(0.0);
        for (int ri : obs) acc = add(acc, loss_pose(ri, predict_pose(ri, false)));
        Tensor pose_mean = scale(acc, 1.0 / obs.size());
        curve_log_extra_ = pose_mean.item();
        loss = add(breakdown.total, pose_mean);
      }

      double loss_value = loss.item();
      if (!std::isfinite(loss_value))
        throw numeric_error("non-finite loss at stage " + std::to_string(stage) +
                            " iteration " + std::to_string(it));

      zero_grads(trainable);
      graph.backward(loss);
      // Single-modality batches (no_bm) leave the other branch untouched;
      // give those parameters an explicit zero gradient.
      for (Tensor& t : trainable)
        if (!t.has_grad())
          t.accumulate_grad(std::vector<double>(t.size(), 0.0));
      adam_step(trainable, adam);

      curve_.push_back({stage, it, "total", loss_value});
      if (it % config_.log_every == 0 || it == iters - 1) {
        if (have_breakdown) {
          curve_.push_back({stage, it, "recon_canonical", breakdown.recon_canonical});
          curve_.push_back({stage, it, "recon_observation", breakdown.recon_observation});
          curve_.push_back({stage, it, "kl", breakdown.kl});
          if (config_.ablation == "no_bm")
            curve_.push_back({stage, it, "align", breakdown.align});
        }
        if (stage == 2) curve_.push_back({stage, it, "pose", loss_value});
        if (stage == 3) curve_.push_back({stage, it, "pose", curve_log_extra_});
      }
    }
  }

 private:
  MixedBatch make_stage_batch(bool no_bm, int it, std::uint64_t batch_seed) {
    if (!no_bm)
      return mix_batch(train_instances_, train_records_, config_.batch_size,
                       config_.mix_ratio, batch_seed);
    MixedBatch batch;
    if (it % 2 == 0) {
      Rng rng(derive_seed(batch_seed, "canon_only"));
      for (int i = 0; i < config_.batch_size; ++i)
        batch.canonical.push_back(train_instances_[rng.uniform_int(
            static_cast<int>(train_instances_.size()))]);
    } else {
      batch.observation = draw_observations(config_.batch_size, batch_seed);
    }
    return batch;
  }

  std::vector<int> draw_observations(int count, std::uint64_t batch_seed) {
    count = std::max(count, 1);
    Rng rng(derive_seed(batch_seed, "obs_only"));
    std::vector<int> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i)
      out.push_back(
          train_records_[rng.uniform_int(static_cast<int>(train_records_.size()))]);
    return out;
  }

  TrainConfig config_;
  const Dataset* data_;
  Model model_;
  std::vector<int> train_instances_, test_instances_;
  std::vector<int> train_records_, test_records_;
  std::vector<Tensor> canonical_t_, obs_points_t_, obs_colors_t_, gt_posed_t_;
  std::vector<Tensor> obs_centroid_t_;
  std::vector<bool> symmetric_;
  std::vector<LossPoint> curve_;
  double curve_log_extra_ = 0.0;
};

}  // namespace cass
