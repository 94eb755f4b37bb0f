#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "captrack/datagen.hpp"
#include "captrack/errors.hpp"
#include "captrack/regressor.hpp"
#include "support.hpp"

using namespace captrack;
using captrack::testing::read_file;
using captrack::testing::TempDir;

namespace {

std::vector<double> random_window(std::mt19937_64& gen, double scale = 1.0) {
  std::vector<double> w(kWindowSize);
  for (auto& v : w) v = scale * uniform(gen, -1.0, 1.0);
  return w;
}

GradBatch random_batch(std::uint64_t seed, Eigen::Index n = 8) {
  std::mt19937_64 gen(seed);
  GradBatch b{Eigen::MatrixXd(kWindowSize, n), Eigen::MatrixXd(4, n)};
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto w = random_window(gen);
    for (std::size_t i = 0; i < kWindowSize; ++i) b.inputs(static_cast<Eigen::Index>(i), c) = w[i];
    for (int k = 0; k < 4; ++k) b.targets(k, c) = uniform(gen, -0.2, 0.2);
  }
  return b;
}

// Small real dataset shared by the slower tests.
const Dataset& small_dataset() {
  static const Dataset d = [] {
    Dataset out = collect_limb(LimbKind::arm, MaterialMode::defaults(Material::air_gown), 10, 21);
    return out;
  }();
  return d;
}

}  // namespace

TEST(Predict, ZeroWeightsReturnOutputBias) {
  MlpParamsD p = MlpParamsD::zeros();
  p.biases.back() << 0.01, 0.05, -0.2, 0.3;
  std::mt19937_64 gen(1);
  const RelPose y = predict(p, random_window(gen, 5.0));
  EXPECT_DOUBLE_EQ(y.p_y, 0.01);
  EXPECT_DOUBLE_EQ(y.p_z, 0.05);
  EXPECT_DOUBLE_EQ(y.theta_y, -0.2);
  EXPECT_DOUBLE_EQ(y.theta_z, 0.3);
}

TEST(Predict, HandComputedToyNetwork) {
  // One time step of six channels, one hidden unit, four outputs.
  MlpParamsD p = MlpParamsD::zeros({6, 1, 4});
  p.norm.mean = {1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  p.norm.stddev = {2.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  p.weights[0] << 0.5, -1.0, 0.25, 0.0, 0.0, 0.0;
  p.biases[0] << 0.1;
  p.weights[1] << 1.0, -2.0, 0.5, 3.0;
  p.biases[1] << 0.0, 1.0, 0.0, -1.0;
  const std::vector<double> x{3.0, -1.0, 2.0, 9.0, 9.0, 9.0};
  // normalized: (3-1)/2 = 1, -1, 2 -> hidden = relu(0.5 + 1 + 0.5 + 0.1) = 2.1
  const Vec4 out = forward_raw(p, x);
  EXPECT_NEAR(out[0], 2.1, 1e-12);
  EXPECT_NEAR(out[1], -3.2, 1e-12);
  EXPECT_NEAR(out[2], 1.05, 1e-12);
  EXPECT_NEAR(out[3], 5.3, 1e-12);

  // Negative pre-activation is cut by the ReLU.
  const std::vector<double> y{-5.0, 4.0, 0.0, 0.0, 0.0, 0.0};
  const Vec4 cut = forward_raw(p, y);
  EXPECT_NEAR(cut[1], 1.0, 1e-12);
}

TEST(Predict, RejectsNonFiniteAndWrongSize) {
  const MlpParams p = MlpParams::he_uniform(1);
  std::vector<double> w(kWindowSize, 1.0);
  w[17] = std::nan("");
  EXPECT_THROW(predict(p, w), NonFiniteInput);
  w[17] = INFINITY;
  EXPECT_THROW(predict(p, w), NonFiniteInput);
  EXPECT_THROW(predict(p, std::vector<double>(10, 0.0)), InvalidArgument);
}

TEST(Params, ShapesAndValidation) {
  const MlpParams p = MlpParams::he_uniform(3);
  EXPECT_EQ(p.num_layers(), 5u);
  EXPECT_EQ(p.weights[0].rows(), 400);
  EXPECT_EQ(p.weights[0].cols(), 300);
  EXPECT_EQ(p.weights[4].rows(), 4);
  EXPECT_EQ(p.num_parameters(), 300u * 400 + 400 + 3 * (400 * 400 + 400) + 400 * 4 + 4);
  const float limit = static_cast<float>(std::sqrt(6.0 / 300.0));
  EXPECT_LE(p.weights[0].cwiseAbs().maxCoeff(), limit);
  EXPECT_TRUE(p.biases[0].isZero());
  MlpParams bad = p;
  bad.norm.stddev[2] = 0.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = p;
  bad.weights[1].resize(3, 3);
  EXPECT_THROW(bad.validate(), InvalidArgument);
  EXPECT_EQ(MlpParams::he_uniform(3), p);
}

TEST(Normalization, FitsPerChannelWithFloor) {
  Dataset d;
  std::vector<double> w(kWindowSize);
  for (std::size_t i = 0; i < kWindowSize; ++i) w[i] = (i % kChannels == 0) ? 5.0 : static_cast<double>(i % 2);
  d.append(w, {}, LimbSite::wrist, Material::air_gown, 0);
  d.append(w, {}, LimbSite::wrist, Material::air_gown, 1);
  const InputNormalization n = InputNormalization::fit(d, {0, 1});
  EXPECT_DOUBLE_EQ(n.mean[0], 5.0);
  EXPECT_DOUBLE_EQ(n.stddev[0], InputNormalization::kStdFloor);
  EXPECT_DOUBLE_EQ(n.mean[1], 1.0);
}

TEST(GradCheck, RandomInitialization) {
  const MlpParamsD p = MlpParams::he_uniform(11).cast<double>();
  const GradCheckReport r = grad_check(p, random_batch(5), 200);
  EXPECT_EQ(r.checked, 200u);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(GradCheck, ZeroBatchBiasPath) {
  MlpParamsD p = MlpParams::he_uniform(12).cast<double>();
  for (auto& b : p.biases) b.setConstant(0.05);
  GradBatch zero{Eigen::MatrixXd::Zero(kWindowSize, 4), Eigen::MatrixXd::Zero(4, 4)};
  const GradCheckReport r = grad_check(p, zero, 200);
  EXPECT_EQ(r.checked, 200u);
  EXPECT_LT(r.max_relative_error, 1e-4);
  // With zero inputs only bias parameters carry gradient through layer 0.
  const auto g = mse_gradient(p, zero);
  for (std::size_t i = 0; i < 300u * 400; ++i) ASSERT_EQ(g[i], 0.0);
}

TEST(GradCheck, SkipsParametersAtReluKinks) {
  MlpParamsD p = MlpParamsD::zeros();
  p.norm = MlpParams::he_uniform(1).norm;
  GradBatch b = random_batch(3, 2);
  // Every hidden pre-activation is exactly zero.
  const GradCheckReport r = grad_check(p, b, 50, 1e-5, 0, 1e-4);
  EXPECT_GT(r.skipped_near_kink, 0u);
}

TEST(GradCheck, AfterTenEpochs) {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 4;
  const TrainResult trained = train(small_dataset(), cfg);
  MlpParamsD p = trained.params.cast<double>();
  const GradCheckReport r = grad_check(p, random_batch(8), 200);
  EXPECT_EQ(r.checked, 200u);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Train, MemorizesOneRepeatedRecord) {
  std::mt19937_64 gen(1);
  const auto w = random_window(gen);
  Dataset d;
  for (int i = 0; i < 32; ++i) d.append(w, {0.03, 0.07, -0.1, 0.2}, LimbSite::wrist, Material::air_gown, 0);
  TrainConfig cfg;
  cfg.seed = 2;
  const TrainResult r = train(d, cfg);
  ASSERT_EQ(r.history.size(), 100u);
  EXPECT_LT(r.history.back().train_loss, 1e-6);
  EXPECT_TRUE(std::isnan(r.history.back().val_loss));
  const RelPose y = predict(r.params, w);
  EXPECT_NEAR(y.p_z, 0.07, 1e-3);
}

TEST(Train, LearnsLinearTarget) {
  std::mt19937_64 gen(3);
  Eigen::Matrix<double, 4, Eigen::Dynamic> wmat(4, kWindowSize);
  for (Eigen::Index i = 0; i < wmat.size(); ++i) wmat.data()[i] = uniform(gen, -1.0, 1.0) * 0.1;
  Dataset d;
  d.reserve(10000);
  for (std::uint32_t i = 0; i < 10000; ++i) {
    const auto w = random_window(gen);
    const Eigen::Map<const Eigen::VectorXd> x(w.data(), static_cast<Eigen::Index>(kWindowSize));
    d.append(w, RelPose::from_vector(wmat * x), LimbSite::wrist, Material::air_gown, i / 10);
  }
  // Loss of always predicting zero, the mean of this target.
  double baseline = 0.0;
  const auto val = validation_rows(d);
  for (std::size_t r : val) baseline += d.target(r).as_vector().squaredNorm();
  baseline /= static_cast<double>(4 * val.size());

  TrainConfig cfg;
  cfg.seed = 5;
  cfg.epochs = 30;
  cfg.layer_sizes = {kWindowSize, 64, 64, 4};
  const TrainResult r = train(d, cfg);
  double best = INFINITY;
  for (const auto& h : r.history) best = std::min(best, h.val_loss);
  EXPECT_LT(best, 0.1 * baseline);
  EXPECT_EQ(r.history[static_cast<std::size_t>(r.best_epoch - 1)].val_loss, best);
}

TEST(Train, DeterministicAndHistoryOrdered) {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  const TrainResult a = train(small_dataset(), cfg);
  const TrainResult b = train(small_dataset(), cfg);
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.history.size(), 3u);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].epoch, static_cast<int>(i) + 1);
    EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
    EXPECT_EQ(a.history[i].val_loss, b.history[i].val_loss);
  }
  cfg.seed = 10;
  EXPECT_FALSE(train(small_dataset(), cfg).params == a.params);
}

TEST(Train, InputScalingLeavesTrajectoryUnchanged) {
  // A power-of-two scale keeps every normalized input bit-identical.
  Dataset scaled;
  const Dataset& d = small_dataset();
  std::vector<double> w(kWindowSize);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto src = d.window(i);
    for (std::size_t k = 0; k < kWindowSize; ++k) w[k] = src[k] * 4.0;
    scaled.append(w, d.target(i), d.site(i), d.mode(i), d.iteration(i));
  }
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 6;
  const TrainResult a = train(d, cfg);
  const TrainResult b = train(scaled, cfg);
  for (std::size_t l = 0; l < a.params.num_layers(); ++l) {
    EXPECT_TRUE(a.params.weights[l] == b.params.weights[l]) << "layer " << l;
    EXPECT_TRUE(a.params.biases[l] == b.params.biases[l]) << "layer " << l;
  }
  EXPECT_EQ(a.history.back().val_loss, b.history.back().val_loss);
}

TEST(Train, RejectsEmptyDataAndBadConfig) {
  EXPECT_THROW(train(Dataset{}, TrainConfig{}), EmptyDataset);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Train, RmseMatchesManualComputation) {
  const MlpParams p = MlpParams::he_uniform(2);
  const Dataset& d = small_dataset();
  const auto rows = validation_rows(d);
  const auto e = rmse(p, d, rows);
  double sq = 0.0;
  for (auto r : rows) {
    const double diff = predict(p, d.window(r)).p_z - d.target(r).p_z;
    sq += diff * diff;
  }
  EXPECT_NEAR(e[1], std::sqrt(sq / static_cast<double>(rows.size())), 1e-12);
}

TEST(ModelIo, RoundTripsBitwise) {
  TempDir dir("model");
  TrainConfig cfg;
  cfg.epochs = 1;
  for (const MlpParams& p : {MlpParams::zeros(), MlpParams::he_uniform(8), train(small_dataset(), cfg).params}) {
    MlpParams q = p;
    if (q.norm.stddev[0] == 0.0) q.norm = {};
    save_model(q, dir / "m.bin");
    const MlpParams back = load_model(dir / "m.bin");
    EXPECT_EQ(back, q);
    save_model(back, dir / "n.bin");
    EXPECT_EQ(read_file(dir / "m.bin"), read_file(dir / "n.bin"));
  }
}

TEST(ModelIo, RejectsCorruptionAndWrongFiles) {
  TempDir dir("model_bad");
  save_model(MlpParams::he_uniform(1), dir / "m.bin");
  std::string bytes = read_file(dir / "m.bin");
  bytes[9] ^= 0x01;
  std::ofstream(dir / "bad.bin", std::ios::binary) << bytes;
  EXPECT_THROW(load_model(dir / "bad.bin"), ChecksumMismatch);

  Dataset d;
  save_dataset(d, dir / "d.bin");
  EXPECT_THROW(load_model(dir / "d.bin"), IoError);
  EXPECT_THROW(load_model(dir / "nope.bin"), IoError);
}

TEST(ModelIo, HistoryCsv) {
  TempDir dir("hist");
  write_history_csv({{1, 0.5, 0.6}, {2, 0.25, 0.3}}, dir / "h.csv");
  EXPECT_EQ(read_file(dir / "h.csv"), "epoch,train_loss,val_loss\n1,0.5,0.59999999999999998\n2,0.25,0.29999999999999999\n");
}
