#include "fedsdd/local_training.h"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "fedsdd/errors.h"
#include "gtest/gtest.h"

namespace {

using fedsdd::local::ClientState;
using fedsdd::local::LocalConfig;
using fedsdd::local::TrainerKind;
using fedsdd::nn::Activation;
using fedsdd::nn::NetworkSpec;

class LocalTrainingTest : public testing::Test {
 protected:
  void SetUp() override {
    data_ = fedsdd::data::make_synthetic(4, 6, 30, 2.0, 3);
    spec_ = {{6, 10, 4}, Activation::kRelu};
    init_ = fedsdd::nn::init_weights(spec_, 5);
  }

  ClientState client(int id, std::size_t first, std::size_t count) const {
    ClientState c;
    c.client_id = id;
    c.dataset = &data_;
    c.indices.resize(count);
    std::iota(c.indices.begin(), c.indices.end(), first);
    return c;
  }

  static double distance(const fedsdd::nn::ParameterVector& a, const fedsdd::nn::ParameterVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
    return std::sqrt(s);
  }

  fedsdd::data::LabeledDataset data_;
  NetworkSpec spec_;
  fedsdd::nn::ParameterVector init_;
};

TEST_F(LocalTrainingTest, ZeroEpochsReturnInit) {
  const auto server_control = fedsdd::nn::zeros(spec_);
  for (auto kind : {TrainerKind::kFedAvg, TrainerKind::kFedProx, TrainerKind::kScaffold}) {
    auto c = client(0, 0, 40);
    LocalConfig cfg;
    cfg.epochs = 0;
    cfg.trainer = kind;
    const auto r = fedsdd::local::local_train(spec_, init_, c, cfg, &server_control, 1);
    EXPECT_EQ(r.weights, init_) << fedsdd::local::to_string(kind);
    EXPECT_EQ(r.sample_count, 40u);
  }
}

TEST_F(LocalTrainingTest, SingleFullBatchStepMatchesHandRolledStep) {
  auto c = client(2, 10, 50);
  LocalConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 50;
  cfg.lr = 0.3;
  const auto r = fedsdd::local::local_train(spec_, init_, c, cfg, nullptr, 77);

  const auto order = fedsdd::local::epoch_order(50, 77, 0);
  std::vector<std::size_t> rows;
  for (std::size_t i : order) rows.push_back(c.indices[i]);
  const auto lg = fedsdd::nn::ce_loss_grad(spec_, init_, data_.batch(rows));
  auto expected = init_;
  for (std::size_t i = 0; i < expected.size(); ++i) expected.values[i] -= 0.3 * lg.grad[i];
  EXPECT_EQ(r.weights, expected);
}

TEST_F(LocalTrainingTest, SampleCountIsPartitionSize) {
  auto c = client(1, 5, 37);
  LocalConfig cfg;
  cfg.epochs = 1;
  EXPECT_EQ(fedsdd::local::local_train(spec_, init_, c, cfg, nullptr, 1).sample_count, 37u);
}

TEST_F(LocalTrainingTest, DeterministicPerSeed) {
  auto a = client(0, 0, 60);
  auto b = client(0, 0, 60);
  LocalConfig cfg;
  const auto ra = fedsdd::local::local_train(spec_, init_, a, cfg, nullptr, 9);
  EXPECT_EQ(ra.weights, fedsdd::local::local_train(spec_, init_, b, cfg, nullptr, 9).weights);
  EXPECT_NE(ra.weights, fedsdd::local::local_train(spec_, init_, b, cfg, nullptr, 10).weights);
}

TEST_F(LocalTrainingTest, ProxWithZeroMuIsFedAvg) {
  auto a = client(0, 0, 60);
  auto b = client(0, 0, 60);
  LocalConfig avg;
  LocalConfig prox = avg;
  prox.trainer = TrainerKind::kFedProx;
  prox.mu = 0.0;
  EXPECT_EQ(fedsdd::local::local_train(spec_, init_, a, avg, nullptr, 4).weights,
            fedsdd::local::local_train(spec_, init_, b, prox, nullptr, 4).weights);
}

TEST_F(LocalTrainingTest, StrongProxKeepsWeightsNearInit) {
  auto a = client(0, 0, 60);
  auto b = client(0, 0, 60);
  // lr * mu = 1 keeps the proximal update stable at mu = 1e6.
  LocalConfig avg;
  avg.lr = 1e-6;
  LocalConfig prox = avg;
  prox.trainer = TrainerKind::kFedProx;
  prox.mu = 1e6;
  const auto wa = fedsdd::local::local_train(spec_, init_, a, avg, nullptr, 4).weights;
  const auto wp = fedsdd::local::local_train(spec_, init_, b, prox, nullptr, 4).weights;
  EXPECT_LT(distance(wp, init_), distance(wa, init_));
}

TEST_F(LocalTrainingTest, ScaffoldWithZeroControlsIsFedAvg) {
  auto a = client(3, 20, 45);
  auto b = client(3, 20, 45);
  LocalConfig avg;
  LocalConfig sc = avg;
  sc.trainer = TrainerKind::kScaffold;
  const auto zero = fedsdd::nn::zeros(spec_);
  const auto ra = fedsdd::local::local_train(spec_, init_, a, avg, nullptr, 8);
  const auto rs = fedsdd::local::local_train(spec_, init_, b, sc, &zero, 8);
  EXPECT_EQ(ra.weights, rs.weights);
  ASSERT_TRUE(rs.delta_control.has_value());
  ASSERT_TRUE(b.control_variate.has_value());
}

TEST_F(LocalTrainingTest, ScaffoldControlUpdateIsOptionTwo) {
  auto c = client(1, 0, 40);
  LocalConfig cfg;
  cfg.trainer = TrainerKind::kScaffold;
  cfg.epochs = 2;
  cfg.batch_size = 16;  // 3 batches per epoch
  auto server = fedsdd::nn::zeros(spec_);
  for (std::size_t i = 0; i < server.size(); ++i) server.values[i] = 1e-3 * static_cast<double>(i % 7);
  auto old_ci = fedsdd::nn::zeros(spec_);
  for (std::size_t i = 0; i < old_ci.size(); ++i) old_ci.values[i] = -2e-3 * static_cast<double>(i % 5);
  c.control_variate = old_ci;

  const auto r = fedsdd::local::local_train(spec_, init_, c, cfg, &server, 2);
  const double steps = 6.0;
  for (std::size_t i = 0; i < init_.size(); ++i) {
    const double expected = old_ci.values[i] - server.values[i] +
                            (init_.values[i] - r.weights.values[i]) / (cfg.lr * steps);
    EXPECT_NEAR(c.control_variate->values[i], expected, 1e-12);
    EXPECT_NEAR(r.delta_control->values[i], expected - old_ci.values[i], 1e-12);
  }
}

TEST_F(LocalTrainingTest, ScaffoldNeedsServerControl) {
  auto c = client(0, 0, 10);
  LocalConfig cfg;
  cfg.trainer = TrainerKind::kScaffold;
  EXPECT_THROW(fedsdd::local::local_train(spec_, init_, c, cfg, nullptr, 1), std::invalid_argument);
}

TEST_F(LocalTrainingTest, DivergenceNamesClientAndStep) {
  auto c = client(7, 0, 40);
  LocalConfig cfg;
  cfg.lr = 1e300;
  try {
    fedsdd::local::local_train(spec_, init_, c, cfg, nullptr, 1);
    FAIL() << "expected divergence";
  } catch (const fedsdd::DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("client 7"), std::string::npos);
    EXPECT_GE(e.step(), 1u);
  }
}

TEST(TrainerKindTest, NamesRoundTrip) {
  for (auto kind : {TrainerKind::kFedAvg, TrainerKind::kFedProx, TrainerKind::kScaffold}) {
    EXPECT_EQ(fedsdd::local::parse_trainer_kind(fedsdd::local::to_string(kind)), kind);
  }
  EXPECT_THROW(fedsdd::local::parse_trainer_kind("sgd"), std::invalid_argument);
}

}  // namespace
