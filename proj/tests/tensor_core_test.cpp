// Copyright 2026 The edgebid Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "gtest/gtest.h"

#include "edgebid/tensor_core.hpp"
#include "test_support.hpp"

namespace edgebid {
namespace {

TEST(Mlp, GradientsMatchFiniteDifferences) {
  RandomStream rng = make_stream(17, {});
  for (int i = 0; i < 100; ++i) {
    testing::GradientCase c = testing::random_gradient_case(rng);
    EXPECT_LE(testing::gradient_check_error(c.net, c.input, c.upstream), 1e-4) << "case " << i;
  }
}

TEST(Mlp, ForwardOfZeroNetworkIsBias) {
  MlpNet net({3, 2}, HeadActivation::kIdentity);
  net.layers()[0].bias << 0.5, -1.0;
  const Vector y = net.forward(Vector(Vector::Ones(3)));
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], -1.0);
}

TEST(Mlp, BoundedHeadStaysInRange) {
  MlpNet net({2, 4, 1}, HeadActivation::kBounded, 3.0);
  RandomStream rng = make_stream(1, {});
  net.initialize(rng);
  for (int i = 0; i < 100; ++i) {
    Vector x(2);
    x << 10 * standard_normal(rng), 10 * standard_normal(rng);
    const double y = net.forward(x)[0];
    EXPECT_GE(y, 0.0);
    EXPECT_LE(y, 3.0);
  }
}

TEST(Mlp, RejectsWrongInputWidth) {
  MlpNet net({3, 2}, HeadActivation::kIdentity);
  EXPECT_THROW(net.forward(Vector(Vector::Ones(4))), NumericError);
  EXPECT_THROW(MlpNet({3}, HeadActivation::kIdentity), NumericError);
}

TEST(Mlp, JsonRoundTripIsExact) {
  MlpNet net({3, 5, 2}, HeadActivation::kSoftmax);
  RandomStream rng = make_stream(5, {});
  net.initialize(rng);
  const MlpNet back = net_from_json(nlohmann::json::parse(to_json(net).dump()));
  ASSERT_TRUE(back.same_architecture(net));
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    EXPECT_EQ(back.layers()[l].weights, net.layers()[l].weights);
    EXPECT_EQ(back.layers()[l].bias, net.layers()[l].bias);
  }
}

TEST(Mlp, MalformedJsonIsAConfigError) {
  nlohmann::json j = to_json(MlpNet({2, 2}, HeadActivation::kIdentity));
  j["parameters"].push_back(1.0);
  EXPECT_THROW(net_from_json(j), ConfigError);
  EXPECT_THROW(net_from_json(nlohmann::json::object()), ConfigError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  MlpNet net({1, 1}, HeadActivation::kIdentity);
  OptimizerState opt(net, AdamConfig{});
  std::vector<DenseLayer> g{{Matrix::Constant(1, 1, 0.37), Vector::Constant(1, -4.0)}};
  optimizer_step(net, g, opt);
  EXPECT_NEAR(net.layers()[0].weights(0, 0), -1e-3, 1e-9);
  EXPECT_NEAR(net.layers()[0].bias[0], 1e-3, 1e-9);
}

TEST(Adam, MinimizesAQuadratic) {
  MlpNet net({1, 1}, HeadActivation::kIdentity);
  OptimizerState opt(net, AdamConfig{0.05});
  for (int i = 0; i < 2000; ++i) {
    const double w = net.layers()[0].weights(0, 0);
    std::vector<DenseLayer> g{{Matrix::Constant(1, 1, 2 * (w - 3.0)), Vector::Zero(1)}};
    optimizer_step(net, g, opt);
  }
  EXPECT_NEAR(net.layers()[0].weights(0, 0), 3.0, 1e-2);
}

TEST(Adam, RejectsNonFiniteGradient) {
  MlpNet net({1, 1}, HeadActivation::kIdentity);
  OptimizerState opt(net, AdamConfig{});
  std::vector<DenseLayer> g{{Matrix::Constant(1, 1, std::nan("")), Vector::Zero(1)}};
  EXPECT_THROW(optimizer_step(net, g, opt), NumericError);
}

TEST(SoftUpdate, InterpolatesParameters) {
  MlpNet target({1, 1}, HeadActivation::kIdentity), online = target;
  online.layers()[0].weights(0, 0) = 1.0;
  soft_update(target, online, 0.01);
  EXPECT_NEAR(target.layers()[0].weights(0, 0), 0.01, 1e-15);
  soft_update(target, online, 1.0);
  EXPECT_EQ(target.layers()[0].weights(0, 0), 1.0);
  EXPECT_THROW(soft_update(target, online, 0.0), NumericError);
  EXPECT_THROW(soft_update(target, MlpNet({2, 1}, HeadActivation::kIdentity), 0.5), NumericError);
}

TEST(GumbelSoftmax, ArgmaxFrequenciesFollowSoftmax) {
  RandomStream rng = make_stream(21, {});
  Vector logits(4);
  logits << 1.0, 0.2, -0.5, 0.0;
  const Vector p = softmax_columns(Matrix(logits)).col(0);
  std::vector<double> freq(4, 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    Eigen::Index j;
    gumbel_softmax(logits, 1.0, rng).maxCoeff(&j);
    freq[static_cast<std::size_t>(j)] += 1.0 / draws;
  }
  double tv = 0.0;
  for (int j = 0; j < 4; ++j) tv += 0.5 * std::abs(freq[j] - p[j]);
  EXPECT_LE(tv, 0.02);
}

TEST(GumbelSoftmax, TemperatureLimits) {
  RandomStream rng = make_stream(22, {});
  Vector logits(3);
  logits << 0.3, -1.0, 2.0;
  int near_ties = 0;
  for (int i = 0; i < 1000; ++i) {
    // Cold: the relaxed sample collapses onto the hard Gumbel-max choice,
    // except when two perturbed logits land within a few temperatures.
    const Matrix g = gumbel_noise(3, 1, rng);
    const Vector cold = gumbel_softmax_with_noise(Matrix(logits), g, 1e-4).col(0);
    Eigen::Index soft = 0, hard = 0;
    cold.maxCoeff(&soft);
    (log_softmax_columns(Matrix(logits)) + g).col(0).maxCoeff(&hard);
    EXPECT_EQ(soft, hard);
    EXPECT_NEAR(cold.sum(), 1.0, 1e-12);
    near_ties += cold.maxCoeff() < 1.0 - 1e-6 ? 1 : 0;
    const Vector hot = gumbel_softmax(logits, 1e4, rng);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(hot[j], 1.0 / 3.0, 1e-3);
  }
  EXPECT_LE(near_ties, 5);
}

TEST(GumbelSoftmax, BackwardMatchesFiniteDifferences) {
  RandomStream rng = make_stream(23, {});
  const double tau = 0.7, h = 1e-6;
  for (int c = 0; c < 20; ++c) {
    Matrix logits(4, 2), up(4, 2);
    for (Eigen::Index i = 0; i < 8; ++i) {
      logits.data()[i] = standard_normal(rng);
      up.data()[i] = standard_normal(rng);
    }
    const Matrix noise = gumbel_noise(4, 2, rng);
    const Matrix y = gumbel_softmax_with_noise(logits, noise, tau);
    const Matrix g = gumbel_softmax_backward(logits, y, up, tau);
    for (Eigen::Index i = 0; i < 8; ++i) {
      Matrix a = logits, b = logits;
      a.data()[i] += h;
      b.data()[i] -= h;
      const double fd = (gumbel_softmax_with_noise(a, noise, tau).cwiseProduct(up).sum() -
                         gumbel_softmax_with_noise(b, noise, tau).cwiseProduct(up).sum()) /
                        (2 * h);
      EXPECT_NEAR(g.data()[i], fd, 1e-6);
    }
  }
}

TEST(GumbelSoftmax, RejectsNonPositiveTemperature) {
  RandomStream rng = make_stream(1, {});
  EXPECT_THROW(gumbel_softmax(Vector::Zero(3), 0.0, rng), NumericError);
}

}  // namespace
}  // namespace edgebid
