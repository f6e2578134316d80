#include <algorithm>
#include <filesystem>
#include <vector>

#include <gtest/gtest.h>

#include "cass/nets.hpp"
#include "cass/shapegen.hpp"
#include "testutil.hpp"

using namespace cass;

namespace {

NetConfig tiny_config() {
  NetConfig c;
  c.latent_dim = 8;
  c.points_m = 16;
  return c;
}

Tensor random_cloud_tensor(int n, Rng& rng) {
  std::vector<double> data(static_cast<std::size_t>(n) * 3);
  for (double& v : data) v = rng.uniform(-0.5, 0.5);
  return Tensor::from_data(n, 3, std::move(data));
}

Tensor random_colors_tensor(int n, Rng& rng) {
  std::vector<double> data(static_cast<std::size_t>(n) * 3);
  for (double& v : data) v = rng.uniform(0.0, 1.0);
  return Tensor::from_data(n, 3, std::move(data));
}

Tensor permute_rows(const Tensor& t, Rng& rng) {
  std::vector<int> order(t.rows());
  std::iota(order.begin(), order.end(), 0);
  for (int i = t.rows() - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  std::vector<double> data;
  data.reserve(t.size());
  for (int r : order)
    for (int c = 0; c < t.cols(); ++c) data.push_back(t.value(r, c));
  return Tensor::from_data(t.rows(), t.cols(), std::move(data));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST(ModelInit, DeterministicAndConfigChecked) {
  Model a(tiny_config(), 5);
  Model b(tiny_config(), 5);
  auto pa = a.named_parameters();
  auto pb = b.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].first, pb[i].first);
    EXPECT_EQ(pa[i].second.data(), pb[i].second.data());
  }
  NetConfig bad = tiny_config();
  bad.ablation = "no_everything";
  EXPECT_THROW(Model(bad, 1), std::invalid_argument);
  bad = tiny_config();
  bad.decoder_template = "cube";
  EXPECT_THROW(Model(bad, 1), std::invalid_argument);
}

TEST(PointEncoder, PermutationInvariant) {
  Model model(tiny_config(), 7);
  Rng rng(1);
  Tensor cloud = random_cloud_tensor(24, rng);
  Tensor out = model.encode_points(cloud);
  ASSERT_EQ(out.rows(), 1);
  ASSERT_EQ(out.cols(), 8);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor shuffled = permute_rows(cloud, rng);
    EXPECT_LT(max_abs_diff(model.encode_points(shuffled), out), 1e-12);
  }
}

TEST(PointEncoder, DuplicatePointsDoNotChangeOutput) {
  Model model(tiny_config(), 7);
  Rng rng(2);
  Tensor cloud = random_cloud_tensor(12, rng);
  std::vector<double> doubled = cloud.data();
  doubled.insert(doubled.end(), cloud.data().begin(), cloud.data().end());
  Tensor dup = Tensor::from_data(24, 3, std::move(doubled));
  EXPECT_LT(max_abs_diff(model.encode_points(dup), model.encode_points(cloud)),
            1e-12);
}

TEST(PointEncoder, RejectsTooFewPoints) {
  Model model(tiny_config(), 7);
  Rng rng(3);
  Tensor small = random_cloud_tensor(4, rng);
  EXPECT_THROW(model.encode_points(small), error);
}

TEST(Siamese, BothCallSitesShareStorage) {
  Model model(tiny_config(), 9);
  Rng rng(4);
  Tensor cloud = random_cloud_tensor(16, rng);
  EXPECT_LT(max_abs_diff(model.encode_points(cloud),
                         model.encode_points_pose(cloud)),
            0.0 + 1e-300);  // identical computation, identical storage

  // Registry holds the encoder exactly once.
  int point_params = 0;
  for (auto& [name, t] : model.named_parameters())
    if (name.rfind("point_encoder.", 0) == 0) ++point_params;
  EXPECT_EQ(point_params, 6);

  // Mutating the shared weights moves both call sites identically.
  auto params = model.named_parameters();
  for (auto& [name, t] : params)
    if (name == "point_encoder.l1.W")
      for (double& v : t.mutable_data()) v += 0.05;
  Tensor a = model.encode_points(cloud);
  Tensor b = model.encode_points_pose(cloud);
  EXPECT_LT(max_abs_diff(a, b), 1e-300);
}

TEST(Siamese, NoDmSplitsTheEncoders) {
  NetConfig cfg = tiny_config();
  Model shared(cfg, 11);
  cfg.ablation = "no_dm";
  Model split(cfg, 11);

  // Parameter count grows by exactly one point encoder.
  auto count_values = [](const Model& m) {
    std::size_t n = 0;
    for (auto& t : m.parameters()) n += t.size();
    return n;
  };
  std::size_t encoder_values = 0;
  for (auto& [name, t] : shared.named_parameters())
    if (name.rfind("point_encoder.", 0) == 0) encoder_values += t.size();
  EXPECT_EQ(count_values(split), count_values(shared) + encoder_values);

  // Same initial values, independent storage.
  Rng rng(5);
  Tensor cloud = random_cloud_tensor(16, rng);
  EXPECT_LT(max_abs_diff(split.encode_points(cloud),
                         split.encode_points_pose(cloud)),
            1e-300);
  auto params = split.named_parameters();
  for (auto& [name, t] : params)
    if (name == "point_encoder.l1.W") {
      // Non-uniform perturbation: a constant shift would vanish in the
      // per-row feature standardization.
      auto& data = t.mutable_data();
      for (std::size_t j = 0; j < data.size(); ++j)
        data[j] += 0.01 * ((j % 7) + 1);
    }
  Tensor a = split.encode_points(cloud);
  Tensor b = split.encode_points_pose(cloud);
  EXPECT_GT(max_abs_diff(a, b), 1e-6);
}

TEST(ObservationEncoder, LogvarStartsAtZero) {
  Model model(tiny_config(), 13);
  Rng rng(6);
  LatentCode code = model.encode_observation(random_cloud_tensor(20, rng),
                                             random_colors_tensor(20, rng));
  ASSERT_EQ(code.mu.cols(), 8);
  ASSERT_EQ(code.logvar.cols(), 8);
  for (double v : code.logvar.data()) EXPECT_EQ(v, 0.0);
  for (double v : code.mu.data()) EXPECT_NE(v, 0.0);
}

TEST(ObservationEncoder, AcceptsZeroColorsRejectsMismatch) {
  Model model(tiny_config(), 13);
  Rng rng(7);
  Tensor pts = random_cloud_tensor(16, rng);
  LatentCode code = model.encode_observation(pts, Tensor::zeros(16, 3));
  EXPECT_EQ(code.mu.rows(), 1);
  EXPECT_THROW(model.encode_observation(pts, Tensor::zeros(15, 3)), error);
}

TEST(PhotometricEncoder, ColorSensitiveAndPermutationInvariant) {
  Model model(tiny_config(), 17);
  Rng rng(8);
  Tensor pts = random_cloud_tensor(20, rng);
  Tensor colors = random_colors_tensor(20, rng);
  Tensor f = model.encode_photometric(pts, colors);

  Tensor recolored = random_colors_tensor(20, rng);
  EXPECT_GT(max_abs_diff(model.encode_photometric(pts, recolored), f), 1e-8);

  // Permute points and colors together.
  std::vector<int> order(20);
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::vector<double> pd, cd;
  for (int r : order)
    for (int c = 0; c < 3; ++c) {
      pd.push_back(pts.value(r, c));
      cd.push_back(colors.value(r, c));
    }
  Tensor f2 = model.encode_photometric(Tensor::from_data(20, 3, std::move(pd)),
                                       Tensor::from_data(20, 3, std::move(cd)));
  EXPECT_LT(max_abs_diff(f2, f), 1e-12);
}

TEST(Decoder, DeterministicWithConfiguredPointCount) {
  Model model(tiny_config(), 19);
  Rng rng(9);
  std::vector<double> zd(8);
  for (double& v : zd) v = rng.normal();
  Tensor z = Tensor::row(zd);
  Tensor out1 = model.decode_latent(z);
  Tensor out2 = model.decode_latent(z);
  ASSERT_EQ(out1.rows(), 16);
  ASSERT_EQ(out1.cols(), 3);
  EXPECT_EQ(out1.data(), out2.data());
  EXPECT_THROW(model.decode_latent(Tensor::row({1.0, 2.0})), error);
}

TEST(Decoder, ContinuousInLatent) {
  Model model(tiny_config(), 19);
  Rng rng(10);
  std::vector<double> zd(8), dir(8);
  for (double& v : zd) v = rng.normal();
  for (double& v : dir) v = rng.normal();
  Tensor z = Tensor::row(zd);
  PointCloud base = cloud_from_tensor(model.decode_latent(z));

  double prev = 1e300;
  for (double delta : {1e-1, 1e-2, 1e-3, 1e-4}) {
    std::vector<double> zp(8);
    for (int i = 0; i < 8; ++i) zp[i] = zd[i] + delta * dir[i];
    PointCloud moved = cloud_from_tensor(model.decode_latent(Tensor::row(zp)));
    double d = chamfer(base, moved);
    EXPECT_LT(d, prev);
    prev = d;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Decoder, GridAndEllipsoidTemplates) {
  NetConfig cfg = tiny_config();
  Model grid_model(cfg, 21);
  EXPECT_EQ(grid_model.decoder_grid().rows(), 16);
  EXPECT_EQ(grid_model.decoder_grid().cols(), 2);
  for (double v : grid_model.decoder_grid().data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  cfg.decoder_template = "ellipsoid";
  Model ell_model(cfg, 21);
  EXPECT_EQ(ell_model.decoder_grid().rows(), 16);
  EXPECT_EQ(ell_model.decoder_grid().cols(), 3);
  Tensor z = Tensor::row(std::vector<double>(8, 0.1));
  EXPECT_EQ(ell_model.decode_latent(z).rows(), 16);
}

TEST(PoseHead, UnitQuaternionOutput) {
  Model model(tiny_config(), 23);
  Rng rng(11);
  Tensor obs = random_cloud_tensor(16, rng);
  Tensor colors = random_colors_tensor(16, rng);
  LatentCode code = model.encode_observation(obs, colors);
  Tensor f_pho = model.encode_photometric(obs, colors);
  Tensor f_geo = model.encode_points_pose(obs);
  PosePrediction pred = model.pose_head(code.mu, f_pho, f_geo);
  ASSERT_EQ(pred.quat.cols(), 4);
  ASSERT_EQ(pred.translation.cols(), 3);
  double n = 0.0;
  for (double v : pred.quat.data()) n += v * v;
  EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
  EXPECT_GE(pred.quat.value(0, 0), 0.0);
}

TEST(PoseHead, NoCassShrinksFirstLayer) {
  NetConfig cfg = tiny_config();
  Model full(cfg, 25);
  cfg.ablation = "no_cass";
  Model ablated(cfg, 25);
  std::size_t full_values = 0, ablated_values = 0;
  for (auto& [name, t] : full.named_parameters())
    if (name.rfind("pose_head.", 0) == 0) full_values += t.size();
  for (auto& [name, t] : ablated.named_parameters())
    if (name.rfind("pose_head.", 0) == 0) ablated_values += t.size();
  // First layer loses N input rows of width 256.
  EXPECT_EQ(full_values - ablated_values, 8u * 256u);

  Rng rng(12);
  Tensor obs = random_cloud_tensor(16, rng);
  Tensor colors = random_colors_tensor(16, rng);
  Tensor f_pho = ablated.encode_photometric(obs, colors);
  Tensor f_geo = ablated.encode_points_pose(obs);
  PosePrediction pred = ablated.pose_head(Tensor::zeros(1, 8), f_pho, f_geo);
  EXPECT_EQ(pred.quat.cols(), 4);
}

TEST(ModelGradients, EncodeDecodeMatchesFiniteDifferences) {
  NetConfig cfg;
  cfg.latent_dim = 6;
  cfg.points_m = 9;
  Model model(cfg, 27);
  Rng rng(13);
  Tensor cloud = random_cloud_tensor(9, rng);

  // Only the parameters this forward actually touches.
  std::vector<Tensor> params;
  for (auto& [name, t] : model.named_parameters())
    if (name.rfind("point_encoder.", 0) == 0 || name.rfind("decoder.", 0) == 0)
      params.push_back(t);
  casstest::expect_gradients_match(
      params,
      [&]() {
        Tensor z = model.encode_points(cloud);
        Tensor recon = model.decode_latent(z);
        return chamfer_loss(recon, cloud);
      },
      1e-4, 1e-6, 24);
}

TEST(ModelGradients, PoseHeadMatchesFiniteDifferences) {
  NetConfig cfg;
  cfg.latent_dim = 6;
  cfg.points_m = 9;
  Model model(cfg, 29);
  Rng rng(14);
  Tensor obs = random_cloud_tensor(10, rng);
  Tensor colors = random_colors_tensor(10, rng);
  Tensor target = random_cloud_tensor(10, rng);

  // Everything the pose forward touches: encoders (mu path), pose head.
  std::vector<Tensor> params;
  for (auto& [name, t] : model.named_parameters())
    if (name.rfind("decoder.", 0) != 0 &&
        name.rfind("obs_encoder.logvar", 0) != 0)
      params.push_back(t);
  casstest::expect_gradients_match(
      params,
      [&]() {
        LatentCode code = model.encode_observation(obs, colors);
        Tensor f_pho = model.encode_photometric(obs, colors);
        Tensor f_geo = model.encode_points_pose(obs);
        PosePrediction pred = model.pose_head(code.mu, f_pho, f_geo);
        Tensor moved = add_rowvec(quat_rotate(pred.quat, target), pred.translation);
        return mean_all(sqrt(add_scalar(rowwise_sum(square(sub(moved, target))), 1e-12)));
      },
      1e-4, 1e-6, 16);
}

TEST(ModelCheckpoint, SaveLoadRoundTrip) {
  NetConfig cfg = tiny_config();
  cfg.ablation = "no_dm";
  Model model(cfg, 31);
  Rng rng(15);
  // Make weights non-initial so the round trip is meaningful.
  for (auto& t : model.parameters())
    for (double& v : t.mutable_data()) v += rng.uniform(-0.1, 0.1);

  std::string path =
      (std::filesystem::temp_directory_path() / "cass_model_rt.ckpt").string();
  save_model(model, path, {{"stage", "2"}});

  std::map<std::string, std::string> header;
  Model back = load_model(path, &header);
  EXPECT_EQ(header.at("stage"), "2");
  EXPECT_EQ(back.config().ablation, "no_dm");
  EXPECT_EQ(back.config().latent_dim, 8);

  auto pa = model.named_parameters();
  auto pb = back.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    EXPECT_EQ(pa[i].second.data(), pb[i].second.data()) << pa[i].first;

  Rng crng(16);
  Tensor cloud = random_cloud_tensor(16, crng);
  EXPECT_EQ(model.encode_points(cloud).data(), back.encode_points(cloud).data());
  std::filesystem::remove(path);
}

TEST(ModelCheckpoint, ArchitectureMismatchDetected) {
  Model model(tiny_config(), 33);
  std::string path =
      (std::filesystem::temp_directory_path() / "cass_model_bad.ckpt").string();
  save_model(model, path);

  Checkpoint ckpt = load_checkpoint(path);
  ckpt.header["latent_dim"] = "16";  // disagrees with stored shapes
  save_checkpoint(ckpt, path);
  EXPECT_THROW(load_model(path), io_error);

  ckpt.header.erase("latent_dim");
  save_checkpoint(ckpt, path);
  EXPECT_THROW(load_model(path), io_error);
  std::filesystem::remove(path);
}

TEST(InferencePath, DeterministicWithoutNoise) {
  Model model(tiny_config(), 35);
  Rng rng(17);
  Tensor obs = random_cloud_tensor(20, rng);
  Tensor colors = random_colors_tensor(20, rng);
  LatentCode c1 = model.encode_observation(obs, colors);
  LatentCode c2 = model.encode_observation(obs, colors);
  EXPECT_EQ(c1.mu.data(), c2.mu.data());
  EXPECT_EQ(model.decode_latent(c1.mu).data(), model.decode_latent(c2.mu).data());
}
