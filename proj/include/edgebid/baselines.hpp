// Copyright 2026 The edgebid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Comparison policies: a centralized DQN scheduler, the channel-agnostic
// statistical-information-based (SIB) heuristic, and the ablated MADDPG
// variants.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "edgebid/env_core.hpp"
#include "edgebid/error.hpp"
#include "edgebid/maddpg.hpp"
#include "edgebid/random.hpp"
#include "edgebid/rollout.hpp"
#include "edgebid/tensor_core.hpp"

namespace edgebid {

// ---------------------------------------------------------------------------
// Ablations.

enum class Variant { kDD, kDT, kMC };

inline Variant variant_from_string(const std::string& s) {
  if (s == "DD" || s == "dd") return Variant::kDD;
  if (s == "DT" || s == "dt") return Variant::kDT;
  if (s == "MC" || s == "mc") return Variant::kMC;
  throw ConfigError("unknown variant tag '" + s + "'");
}

// DD hides the logit entropy, DT always sends uncompressed features, MC always
// sends the most compressed features (or the largest ratio when
// `mc_literal` is set). Bid learning is untouched.
inline TrainConfig make_variant(TrainConfig base, Variant tag) {
  switch (tag) {
    case Variant::kDD: base.mask_entropy = true; break;
    case Variant::kDT: base.ratio_pin = RatioPin::kUncompressed; break;
    case Variant::kMC:
      base.ratio_pin = base.mc_literal ? RatioPin::kLargest : RatioPin::kMostCompressed;
      break;
  }
  return base;
}

// ---------------------------------------------------------------------------
// SIB.

struct SibConfig {
  double target_ssim = 0.26;
  std::optional<double> bid;  // per-slot bid; default initial_budget / horizon

  friend bool operator==(const SibConfig&, const SibConfig&) = default;
};

struct SibDecision {
  double bid = 0.0;
  std::size_t ratio_index = 0;
};

// Largest ratio whose average leakage stays within the target, else the
// smallest ratio. Takes no channel input.
inline SibDecision sib_policy(const MdConfig& md, std::size_t horizon, const SibConfig& cfg) {
  detail::require(cfg.target_ssim > 0.0 && cfg.target_ssim <= 1.0,
                  "sib_policy: target SSIM must lie in (0,1]");
  SibDecision d;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < md.ratios.size(); ++i) {
    if (ssim_surrogate(md.ratios[i], md.surrogate) <= cfg.target_ssim &&
        (!best || md.ratios[i] > md.ratios[*best])) {
      best = i;
    }
  }
  d.ratio_index = best ? *best
                       : static_cast<std::size_t>(
                             std::min_element(md.ratios.begin(), md.ratios.end()) -
                             md.ratios.begin());
  d.bid = cfg.bid ? *cfg.bid : md.initial_budget / static_cast<double>(horizon);
  return d;
}

// Plays one SIB episode: fixed bids, fixed ratios, channel-blind admission.
inline Episode play_sib_episode(Environment& env, const SibConfig& cfg, EpisodeMetrics* metrics) {
  const SystemConfig& sys = env.config();
  std::vector<SibDecision> decisions;
  for (const auto& md : sys.devices) decisions.push_back(sib_policy(md, sys.horizon, cfg));
  auto policy = [&](std::size_t k, const Observation& obs) {
    Action a;
    a.bid = clip_bid(decisions[k].bid, sys.devices[k].max_bid, obs.budget);
    a.ratio_index = decisions[k].ratio_index;
    return a;
  };
  return play_episode(env, policy, Admission::kChannelBlind, metrics);
}

// ---------------------------------------------------------------------------
// Centralized joint actions.

struct JointAction {
  std::vector<std::size_t> devices;        // sorted, size <= U
  std::vector<std::size_t> ratio_indices;  // parallel to `devices`

  friend bool operator==(const JointAction&, const JointAction&) = default;
};

// Every subset of size <= U, crossed with a ratio choice per member. Order:
// by subset size, subsets lexicographically, ratio choices as an odometer with
// the last member fastest.
inline std::vector<JointAction> enumerate_joint_actions(const SystemConfig& sys,
                                                        std::size_t max_actions = 100000) {
  const std::size_t K = sys.device_count();
  std::vector<JointAction> out;
  auto push = [&](JointAction a) {
    if (out.size() >= max_actions) {
      throw ConfigError("enumerate_joint_actions: more than " + std::to_string(max_actions) +
                        " joint actions");
    }
    out.push_back(std::move(a));
  };
  for (std::size_t size = 0; size <= sys.server_capacity; ++size) {
    if (size > K) break;
    std::vector<std::size_t> subset(size);
    for (std::size_t i = 0; i < size; ++i) subset[i] = i;
    while (true) {
      std::vector<std::size_t> choice(size, 0);
      while (true) {
        push({subset, choice});
        std::size_t pos = size;
        while (pos > 0) {
          --pos;
          if (++choice[pos] < sys.devices[subset[pos]].ratios.size()) break;
          choice[pos] = 0;
          if (pos == 0) {
            pos = size + 1;
            break;
          }
        }
        if (size == 0 || pos == size + 1) break;
      }
      // Next subset in lexicographic order.
      std::size_t i = size;
      while (i > 0 && subset[i - 1] == K - size + (i - 1)) --i;
      if (i == 0) break;
      ++subset[i - 1];
      for (std::size_t j = i; j < size; ++j) subset[j] = subset[j - 1] + 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// DQN.

struct DqnConfig {
  std::size_t episodes = 5000;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::size_t epsilon_decay_episodes = 2500;
  double learning_rate = 1e-3;
  double target_rate = 0.01;  // soft target sync per update
  std::size_t replay_capacity = 20000;
  std::size_t batch_size = 64;
  std::size_t updates_per_step = 1;
  double discount = 1.0;
  std::vector<std::size_t> hidden{32, 32};
  std::size_t max_joint_actions = 100000;

  friend bool operator==(const DqnConfig&, const DqnConfig&) = default;
};

inline void validate(const DqnConfig& c) {
  using detail::require_config;
  require_config(c.episodes >= 1, "dqn: episodes must be >= 1");
  require_config(c.epsilon_start >= 0.0 && c.epsilon_start <= 1.0 && c.epsilon_end >= 0.0 &&
                     c.epsilon_end <= 1.0,
                 "dqn: epsilon must lie in [0,1]");
  require_config(c.learning_rate >= 0.0, "dqn: learning rate must be >= 0");
  require_config(c.target_rate > 0.0 && c.target_rate <= 1.0, "dqn: target rate must lie in (0,1]");
  require_config(c.replay_capacity >= 1 && c.batch_size >= 1 && c.updates_per_step >= 1,
                 "dqn: capacities must be positive");
  require_config(c.discount >= 0.0 && c.discount <= 1.0, "dqn: discount must lie in [0,1]");
  require_config(!c.hidden.empty(), "dqn: at least one hidden layer required");
}

inline double epsilon_at(const DqnConfig& c, std::size_t episode) {
  if (c.epsilon_decay_episodes == 0) return c.epsilon_end;
  const double frac = std::min(1.0, static_cast<double>(episode) /
                                        static_cast<double>(c.epsilon_decay_episodes));
  return std::lerp(c.epsilon_start, c.epsilon_end, frac);
}

struct DqnTransition {
  Vector state;
  std::size_t action = 0;
  double reward = 0.0;
  Vector next_state;
  bool terminal = false;
};

struct DqnStep {
  double reward = 0.0;
  Vector next_state;
  bool terminal = false;
};

// epsilon-greedy over Q(state, .); ties resolved to the lowest index.
inline std::size_t dqn_policy_step(const Vector& state, const MlpNet& q, double epsilon,
                                   RandomStream& rng) {
  const std::size_t n = q.output_size();
  if (epsilon > 0.0 && uniform01(rng) < epsilon) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  }
  return argmax(q.forward(state));
}

class DqnLearner {
 public:
  DqnLearner(std::size_t state_dim, std::size_t action_count, DqnConfig cfg, RandomStream& init)
      : cfg_(std::move(cfg)), replay_(cfg_.replay_capacity) {
    validate(cfg_);
    std::vector<std::size_t> sizes{state_dim};
    sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    sizes.push_back(action_count);
    q_ = MlpNet(sizes, HeadActivation::kIdentity);
    q_.initialize(init);
    target_ = q_;
    opt_ = OptimizerState(q_, {cfg_.learning_rate});
  }

  const MlpNet& q() const { return q_; }
  MlpNet& q() { return q_; }
  const DqnConfig& config() const { return cfg_; }
  const RingBuffer<DqnTransition>& replay() const { return replay_; }

  void remember(DqnTransition t) { replay_.push(std::move(t)); }

  // One minibatch step on the squared TD error; returns the loss (0 if the
  // replay is still smaller than a batch).
  double learn(RandomStream& rng) {
    if (replay_.size() < cfg_.batch_size) return 0.0;
    const auto idx = replay_.sample_indices(cfg_.batch_size, rng);
    const auto B = static_cast<Eigen::Index>(idx.size());
    const auto dim = static_cast<Eigen::Index>(q_.input_size());
    Matrix s(dim, B), s2(dim, B);
    for (Eigen::Index j = 0; j < B; ++j) {
      s.col(j) = replay_[idx[static_cast<std::size_t>(j)]].state;
      s2.col(j) = replay_[idx[static_cast<std::size_t>(j)]].next_state;
    }
    const Matrix next_q = target_.forward(s2);
    const ForwardTape tape = q_.forward_tape(s);
    Matrix upstream = Matrix::Zero(tape.output.rows(), B);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < B; ++j) {
      const DqnTransition& t = replay_[idx[static_cast<std::size_t>(j)]];
      const double boot = t.terminal ? 0.0 : cfg_.discount * next_q.col(j).maxCoeff();
      const auto a = static_cast<Eigen::Index>(t.action);
      const double res = tape.output(a, j) - (t.reward + boot);
      loss += res * res;
      upstream(a, j) = 2.0 * res / static_cast<double>(B);
    }
    const GradientBundle g = q_.backward(tape, upstream);
    optimizer_step(q_, g.params, opt_);
    soft_update(target_, q_, cfg_.target_rate);
    return loss / static_cast<double>(B);
  }

 private:
  DqnConfig cfg_;
  MlpNet q_;
  MlpNet target_;
  OptimizerState opt_;
  RingBuffer<DqnTransition> replay_;
};

// Task concept for dqn_train:
//   std::size_t state_dim() const; std::size_t action_count() const;
//   Vector reset(); DqnStep step(std::size_t action);
template <class Task>
std::vector<double> dqn_train(Task& task, DqnLearner& learner, RandomStream& rng,
                              const std::function<void(std::size_t)>& on_episode = {}) {
  const DqnConfig& cfg = learner.config();
  std::vector<double> returns;
  returns.reserve(cfg.episodes);
  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = epsilon_at(cfg, ep);
    Vector s = task.reset();
    double total = 0.0;
    bool terminal = false;
    while (!terminal) {
      const std::size_t a = dqn_policy_step(s, learner.q(), eps, rng);
      DqnStep r = task.step(a);
      total += r.reward;
      terminal = r.terminal;
      learner.remember({s, a, r.reward, r.next_state, r.terminal});
      for (std::size_t u = 0; u < cfg.updates_per_step; ++u) learner.learn(rng);
      s = std::move(r.next_state);
    }
    returns.push_back(total);
    if (on_episode) on_episode(ep);
  }
  return returns;
}

// The edge system seen by a centralized scheduler: the state holds the slot,
// every device's rate and logit entropy (no budgets); an action is a joint
// (served subset, ratios) choice; the reward is the sum of device rewards.
class EdgeDqnTask {
 public:
  EdgeDqnTask(SystemConfig sys, std::uint64_t seed, std::size_t max_joint_actions = 100000)
      : env_(std::move(sys), seed),
        actions_(enumerate_joint_actions(env_.config(), max_joint_actions)) {}

  std::size_t state_dim() const { return 1 + 2 * env_.device_count(); }
  std::size_t action_count() const { return actions_.size(); }
  const std::vector<JointAction>& joint_actions() const { return actions_; }
  Environment& env() { return env_; }

  Vector reset() {
    env_.reset();
    metrics_ = MetricsAccumulator(env_.device_count());
    return features(env_.state());
  }

  Vector features(const SystemState& s) const {
    const SystemConfig& sys = env_.config();
    Vector v(static_cast<Eigen::Index>(state_dim()));
    v[0] = static_cast<double>(s.slot) / static_cast<double>(sys.horizon);
    for (std::size_t k = 0; k < sys.device_count(); ++k) {
      const MdConfig& md = sys.devices[k];
      const auto i = static_cast<Eigen::Index>(1 + 2 * k);
      v[i] = std::min(s.rates[k] / md.uncompressed_bits(), ObservationEncoder::kRateCap);
      v[i + 1] = s.data[k].entropy / md.max_entropy();
    }
    return v;
  }

  StepResult execute(std::size_t action_index) {
    const JointAction& ja = actions_.at(action_index);
    std::vector<Action> acts(env_.device_count());
    for (std::size_t i = 0; i < ja.devices.size(); ++i) {
      acts[ja.devices[i]].ratio_index = ja.ratio_indices[i];
    }
    StepResult r = env_.step_directed(acts, ja.devices);
    metrics_.add(r);
    return r;
  }

  DqnStep step(std::size_t action_index) {
    const StepResult r = execute(action_index);
    double total = 0.0;
    for (const auto& d : r.devices) total += d.reward;
    return {total, features(r.next), env_.done()};
  }

  EpisodeMetrics episode_metrics() const { return metrics_.finish(); }

 private:
  Environment env_;
  std::vector<JointAction> actions_;
  MetricsAccumulator metrics_{0};
};

}  // namespace edgebid
