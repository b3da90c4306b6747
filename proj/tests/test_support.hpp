// Copyright 2026 The edgebid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <array>
#include <random>
#include <vector>

#include "edgebid/baselines.hpp"
#include "edgebid/env_core.hpp"
#include "edgebid/tensor_core.hpp"

namespace edgebid::testing {

// Two devices with hand-set parameters; no calibration involved.
inline SystemConfig two_device_system(double snr1 = 20000.0, double snr2 = 1.0) {
  SystemConfig sys;
  MdConfig a;
  a.index = 0;
  a.feature_dims = 8192;
  a.ratios = {1.0, 0.8, 0.6, 0.4};
  a.mean_snr = snr1;
  a.surrogate.ssim_exponent = 0.913;
  MdConfig b;
  b.index = 1;
  b.feature_dims = 128;
  b.ratios = {1.0, 0.75, 0.5, 0.25};
  b.mean_snr = snr2;
  b.surrogate.local_mean_acc = 0.72;
  b.surrogate.edge_mean_acc_at_full = 0.884;
  b.surrogate.ssim_exponent = 0.603;
  sys.devices = {a, b};
  return sys;
}

// Norm-wise relative error between the analytic gradient of
// L = sum(upstream .* net(input)) and its central finite difference, over all
// parameters and the input.
inline double gradient_check_error(MlpNet net, const Matrix& input, const Matrix& upstream,
                                   double h = 1e-6) {
  auto loss = [&](const MlpNet& n, const Matrix& x) {
    return n.forward(x).cwiseProduct(upstream).sum();
  };
  const GradientBundle g = net.backward(net.forward_tape(input), upstream);
  std::vector<double> analytic, numeric;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto probe = [&](double& p, double a) {
      const double keep = p;
      p = keep + h;
      const double up = loss(net, input);
      p = keep - h;
      const double down = loss(net, input);
      p = keep;
      analytic.push_back(a);
      numeric.push_back((up - down) / (2.0 * h));
    };
    DenseLayer& layer = net.layers()[l];
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
      probe(layer.weights.data()[i], g.params[l].weights.data()[i]);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      probe(layer.bias.data()[i], g.params[l].bias.data()[i]);
    }
  }
  Matrix x = input;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = loss(net, x);
    x.data()[i] = keep - h;
    const double down = loss(net, x);
    x.data()[i] = keep;
    analytic.push_back(g.input.data()[i]);
    numeric.push_back((up - down) / (2.0 * h));
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-12);
}

// A random small network with a random batch, used by the gradient checks.
struct GradientCase {
  MlpNet net;
  Matrix input;
  Matrix upstream;
};

inline GradientCase random_gradient_case(RandomStream& rng) {
  std::uniform_int_distribution<std::size_t> width(1, 6);
  std::uniform_int_distribution<int> depth(0, 2), head(0, 2), batch(1, 4);
  std::vector<std::size_t> sizes{width(rng)};
  for (int d = depth(rng); d > 0; --d) sizes.push_back(width(rng));
  const HeadActivation h = static_cast<HeadActivation>(head(rng));
  sizes.push_back(h == HeadActivation::kSoftmax ? 1 + width(rng) : width(rng));
  GradientCase c{MlpNet(sizes, h, h == HeadActivation::kBounded ? 2.0 : 1.0), {}, {}};
  c.net.initialize(rng);
  const int b = batch(rng);
  c.input = Matrix(static_cast<Eigen::Index>(sizes.front()), b);
  for (Eigen::Index i = 0; i < c.input.size(); ++i) c.input.data()[i] = standard_normal(rng);
  c.upstream = Matrix(static_cast<Eigen::Index>(sizes.back()), b);
  for (Eigen::Index i = 0; i < c.upstream.size(); ++i) c.upstream.data()[i] = standard_normal(rng);
  return c;
}

// Two-state, two-action deterministic MDP.
//   s0: a0 -> +1, s1      a1 -> -0.5, s0
//   s1: a0 -> +2, end     a1 -> -1,   s0
struct ToyMdp {
  static constexpr double kReward[2][2] = {{1.0, -0.5}, {2.0, -1.0}};
  static constexpr int kNext[2][2] = {{1, 0}, {-1, 0}};  // -1 terminates

  int state = 0;

  std::size_t state_dim() const { return 2; }
  std::size_t action_count() const { return 2; }
  static Vector encode(int s) {
    Vector v = Vector::Zero(2);
    if (s >= 0) v[s] = 1.0;
    return v;
  }
  Vector reset() {
    state = 0;
    return encode(state);
  }
  DqnStep step(std::size_t a) {
    const double r = kReward[state][a];
    state = kNext[state][a];
    return {r, encode(state), state < 0};
  }
};

// Q* by value iteration.
inline std::array<std::array<double, 2>, 2> toy_optimal_q(double discount) {
  std::array<std::array<double, 2>, 2> q{};
  for (int it = 0; it < 10000; ++it) {
    auto next = q;
    for (int s = 0; s < 2; ++s) {
      for (int a = 0; a < 2; ++a) {
        const int s2 = ToyMdp::kNext[s][a];
        next[s][a] = ToyMdp::kReward[s][a] +
                     (s2 < 0 ? 0.0 : discount * std::max(q[s2][0], q[s2][1]));
      }
    }
    q = next;
  }
  return q;
}

inline DqnConfig toy_dqn_config() {
  DqnConfig c;
  c.episodes = 3000;
  c.epsilon_start = 1.0;
  c.epsilon_end = 0.1;
  c.epsilon_decay_episodes = 1000;
  c.learning_rate = 1e-3;
  c.target_rate = 0.01;
  c.replay_capacity = 5000;
  c.batch_size = 32;
  c.discount = 0.9;
  c.hidden = {16};
  return c;
}

// Largest |Q - Q*| after training on the toy MDP.
inline double toy_dqn_error(std::uint64_t seed) {
  const DqnConfig cfg = toy_dqn_config();
  RandomStream init = make_stream(seed, {kInitStream});
  RandomStream rng = make_stream(seed, {kPolicyStream});
  ToyMdp task;
  DqnLearner learner(task.state_dim(), task.action_count(), cfg, init);
  dqn_train(task, learner, rng);
  const auto want = toy_optimal_q(cfg.discount);
  double worst = 0.0;
  for (int s = 0; s < 2; ++s) {
    const Vector q = learner.q().forward(ToyMdp::encode(s));
    for (int a = 0; a < 2; ++a) worst = std::max(worst, std::abs(q[a] - want[s][a]));
  }
  return worst;
}

}  // namespace edgebid::testing
