#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "zsd/scorer.hpp"

using namespace zsd;

namespace {

ScorerModel random_model(std::size_t H, detail::Rng& rng, double scale = 0.5) {
  ScorerModel m = ScorerModel::zeros(H);
  m.for_each_parameter([&](double& v) { v = rng.uniform(-scale, scale); });
  return m;
}

std::vector<Features> random_seq(std::size_t K, detail::Rng& rng) {
  std::vector<Features> seq(K);
  for (auto& x : seq) {
    for (auto& v : x) v = rng.uniform();
  }
  return seq;
}

}  // namespace

TEST(Scorer, ZeroNetworkScoresHalf) {
  detail::Rng rng(1);
  EXPECT_DOUBLE_EQ(forward(ScorerModel::zeros(8), random_seq(5, rng)), 0.5);
}

TEST(Scorer, BiasOnlyClosedForm) {
  detail::Rng rng(2);
  ScorerModel m = ScorerModel::zeros(4);
  m.bo = 10.0;
  EXPECT_NEAR(forward(m, random_seq(3, rng)), 1.0 / (1.0 + std::exp(-10.0)), 1e-15);
  EXPECT_NEAR(forward(m, random_seq(3, rng)), 0.9999546, 1e-7);
}

TEST(Scorer, MatchesStepwiseRecurrence) {
  detail::Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto m = random_model(1 + rng.below(10), rng, 1.0);
    const auto seq = random_seq(1 + rng.below(20), rng);
    EXPECT_NEAR(forward(m, seq), oracle::elman_score(m, seq), 1e-12);
  }
}

TEST(Scorer, DimensionChecks) {
  detail::Rng rng(4);
  ScorerModel m = ScorerModel::zeros(4, 3);
  EXPECT_THROW(forward(m, random_seq(2, rng)), DimensionError);
  EXPECT_THROW(forward(ScorerModel::zeros(4), std::vector<Features>{}), DimensionError);
  ScorerModel broken = ScorerModel::zeros(4);
  broken.wo.pop_back();
  EXPECT_THROW(broken.check_shape(), DimensionError);
}

TEST(Loss, Values) {
  EXPECT_NEAR(loss(0.5, 0), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss(0.5, 1), 0.693147, 1e-6);
  EXPECT_NEAR(loss(0.9, 0), 2.302585, 1e-6);
  EXPECT_LT(loss(1.0 - 1e-9, 1), 1e-6);
  EXPECT_TRUE(std::isfinite(loss(0.0, 1)));
  EXPECT_TRUE(std::isfinite(loss(1.0, 0)));
}

TEST(Gradient, CentralDifferences) {
  detail::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_model(4, rng);
    const auto seq = random_seq(3, rng);
    const int label = static_cast<int>(rng.below(2));
    EXPECT_LT(oracle::max_gradient_error(m, seq, label), 1e-4) << "trial " << trial;
  }
}

TEST(Gradient, SaturatedScoreIsFinite) {
  detail::Rng rng(6);
  ScorerModel m = ScorerModel::zeros(4);
  m.bo = 40.0;
  const auto g = grad(m, random_seq(3, rng), 1);
  g.gradient.for_each_parameter([](const double& v) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_EQ(v, 0.0);
  });
}

TEST(Gradient, SingleStepClosedForm) {
  // h = tanh(b); z = w h + bo; dL/dbo = sigmoid(z) - y.
  detail::Rng rng(7);
  const auto seq = random_seq(1, rng);
  for (double w : {0.7, 1.4}) {
    ScorerModel m = ScorerModel::zeros(1);
    m.bh[0] = 0.3;
    m.wo[0] = w;
    m.bo = -0.2;
    const double z = w * std::tanh(0.3) - 0.2;
    const double s = 1.0 / (1.0 + std::exp(-z));
    EXPECT_NEAR(grad(m, seq, 1).gradient.bo, s - 1.0, 1e-14);
    EXPECT_NEAR(grad(m, seq, 0).gradient.bo, s, 1e-14);
    EXPECT_NEAR(grad(m, seq, 0).gradient.wo[0], s * std::tanh(0.3), 1e-14);
  }
}

TEST(Train, ZeroInitStartsAtLn2AndLearnsToySet) {
  const auto data = separable_toy_set(200, 5, 1);
  TrainConfig cfg;
  cfg.hidden = 8;
  cfg.lr = 0.05;
  cfg.epochs = 50;
  cfg.zero_output = true;
  const auto r = train(data, cfg);
  ASSERT_EQ(r.loss_trace.size(), 51u);
  EXPECT_NEAR(r.loss_trace.front(), std::log(2.0), 1e-3);
  EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());
  EXPECT_GE(accuracy(r.model, data), 0.95);
}

TEST(Train, Deterministic) {
  const auto data = separable_toy_set(60, 4, 2);
  TrainConfig cfg;
  cfg.hidden = 6;
  cfg.epochs = 5;
  EXPECT_EQ(train(data, cfg).model, train(data, cfg).model);
  TrainConfig other = cfg;
  other.seed = cfg.seed + 1;
  EXPECT_NE(train(data, cfg).model, train(data, other).model);
}

TEST(Train, DegenerateData) {
  TrainConfig cfg;
  EXPECT_THROW(train({}, cfg), DegenerateData);
  auto data = separable_toy_set(10, 3, 3);
  for (auto& e : data) e.label = 1;
  EXPECT_THROW(train(data, cfg), DegenerateData);
  cfg.epochs = 0;
  EXPECT_THROW(train(separable_toy_set(10, 3, 3), cfg), ConfigError);
}

TEST(ModelFile, RoundTripIsExact) {
  detail::Rng rng(8);
  const auto m = random_model(7, rng, 3.0);
  std::stringstream ss;
  save_model(m, ss);
  EXPECT_EQ(load_model(ss), m);
}

TEST(ModelFile, RejectsBadFiles) {
  std::istringstream empty("");
  EXPECT_THROW(load_model(empty), ParseError);
  std::istringstream magic("NOTAMODEL 1 4 12\n");
  EXPECT_THROW(load_model(magic), ParseError);
  std::istringstream version("ZSDMODEL 2 4 12\n");
  EXPECT_THROW(load_model(version), ParseError);
  std::istringstream dims("ZSDMODEL 1 4 5\n");
  EXPECT_THROW(load_model(dims), DimensionError);
  std::stringstream truncated;
  save_model(ScorerModel::zeros(3), truncated);
  std::string text = truncated.str();
  text.resize(text.size() / 2);
  std::istringstream cut(text);
  EXPECT_THROW(load_model(cut), ParseError);
}
