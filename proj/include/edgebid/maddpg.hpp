// Copyright 2026 The edgebid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-agent deterministic policy gradient with decentralized twin-head
// actors (bid + compression ratio) and per-device centralized critics.
//
// Critic input layout, repeated for every device k in order:
//   [slot, rate, budget, entropy (encoded), bid / max_bid, one-hot ratio]

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
#include "edgebid/random.hpp"
#include "edgebid/rollout.hpp"
#include "edgebid/tensor_core.hpp"

namespace edgebid {

enum class RatioPin {
  kNone,
  kUncompressed,    // always omega = 1
  kMostCompressed,  // always the smallest omega
  kLargest,         // always the largest omega in the set
};

struct TrainConfig {
  std::size_t episodes = 5000;
  double exploration_variance = 0.1;  // sigma_z^2
  double gumbel_temperature = 1.0;
  double gumbel_temperature_final = 1.0;  // linear annealing target
  double tau_critic = 0.01;
  double tau_actor = 0.01;
  double critic_lr = 1e-3;
  double actor_lr = 1e-3;
  std::size_t batch_episodes = 256;
  std::size_t buffer_capacity = 2000;
  std::size_t updates_per_episode = 1;
  std::vector<std::size_t> hidden{32, 32};
  // The bid head's logistic is stretched to [-margin, 1 + margin] * max_bid so
  // that clipping can reach exactly 0 (abstain) and max_bid.
  double bid_margin = 0.5;
  // Variant controls.
  bool mask_entropy = false;
  RatioPin ratio_pin = RatioPin::kNone;
  bool mc_literal = false;  // read MC as "largest ratio in the set"

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& c) {
  using detail::require_config;
  require_config(c.episodes >= 1, "train: episodes must be >= 1");
  require_config(c.exploration_variance >= 0.0, "train: exploration variance must be >= 0");
  require_config(c.gumbel_temperature > 0.0 && c.gumbel_temperature_final > 0.0,
                 "train: Gumbel temperatures must be positive");
  require_config(c.tau_critic > 0.0 && c.tau_critic <= 1.0 && c.tau_actor > 0.0 &&
                     c.tau_actor <= 1.0,
                 "train: soft-update rates must lie in (0,1]");
  require_config(c.critic_lr >= 0.0 && c.actor_lr >= 0.0, "train: learning rates must be >= 0");
  require_config(c.batch_episodes >= 1 && c.buffer_capacity >= 1 && c.updates_per_episode >= 1,
                 "train: batch size, buffer capacity and update cadence must be positive");
  require_config(!c.hidden.empty(), "train: at least one hidden layer required");
  for (std::size_t h : c.hidden) require_config(h > 0, "train: hidden sizes must be positive");
  require_config(c.bid_margin >= 0.0 && c.bid_margin <= 1.0, "train: bid_margin must lie in [0,1]");
}

// ---------------------------------------------------------------------------
// Observation features fed to the networks.

struct ObservationEncoder {
  double horizon = 10.0;
  double uncompressed_bits = 1.0;
  double budget_scale = 10.0;
  double max_entropy = 1.0;
  bool mask_entropy = false;

  static constexpr std::size_t kSize = Observation::kSize;
  static constexpr double kRateCap = 2.0;

  static ObservationEncoder for_device(const SystemConfig& sys, std::size_t k, bool mask) {
    const MdConfig& md = sys.devices[k];
    ObservationEncoder e;
    e.horizon = static_cast<double>(sys.horizon);
    e.uncompressed_bits = md.uncompressed_bits();
    e.budget_scale = md.max_bid > 0.0 ? static_cast<double>(sys.horizon) * md.max_bid : 1.0;
    e.max_entropy = md.max_entropy();
    e.mask_entropy = mask;
    return e;
  }

  template <class Out>
  void encode(const Observation& o, Out&& out) const {
    out(0) = o.slot / horizon;
    out(1) = std::min(o.rate / uncompressed_bits, kRateCap);
    out(2) = o.budget / budget_scale;
    out(3) = mask_entropy ? 0.0 : o.entropy / max_entropy;
  }

  Vector encode(const Observation& o) const {
    Vector v(kSize);
    encode(o, v);
    return v;
  }
};

// ---------------------------------------------------------------------------

struct ActorNet {
  MlpNet bid;    // obs -> (0, max_bid)
  MlpNet ratio;  // obs -> softmax over the ratio set
};

struct ActorSpec {
  ObservationEncoder encoder;
  double max_bid = 1.0;
  double bid_margin = 0.0;
  std::size_t ratio_count = 1;
  std::optional<std::size_t> pinned_ratio;

  // Pre-clip bid from the bid head's output in (0, max_bid).
  double stretch() const { return 1.0 + 2.0 * bid_margin; }
  template <class T>
  auto pre_clip(const T& head_out) const {
    return (stretch() * head_out.array() - bid_margin * max_bid).matrix();
  }
  double pre_clip(double head_out) const { return stretch() * head_out - bid_margin * max_bid; }
};

inline std::optional<std::size_t> pinned_index(const MdConfig& md, RatioPin pin) {
  switch (pin) {
    case RatioPin::kNone: return std::nullopt;
    case RatioPin::kUncompressed: {
      auto it = std::find(md.ratios.begin(), md.ratios.end(), 1.0);
      if (it == md.ratios.end()) {
        throw ConfigError("uncompressed variant needs ratio 1.0 in device " +
                          std::to_string(md.index + 1) + "'s ratio set");
      }
      return static_cast<std::size_t>(it - md.ratios.begin());
    }
    case RatioPin::kMostCompressed:
      return static_cast<std::size_t>(std::min_element(md.ratios.begin(), md.ratios.end()) -
                                      md.ratios.begin());
    case RatioPin::kLargest:
      return static_cast<std::size_t>(std::max_element(md.ratios.begin(), md.ratios.end()) -
                                      md.ratios.begin());
  }
  return std::nullopt;
}

inline ActorSpec make_actor_spec(const SystemConfig& sys, std::size_t k, const TrainConfig& cfg) {
  const MdConfig& md = sys.devices[k];
  return {ObservationEncoder::for_device(sys, k, cfg.mask_entropy), md.max_bid, cfg.bid_margin,
          md.ratios.size(), pinned_index(md, cfg.ratio_pin)};
}

inline ActorNet make_actor(const ActorSpec& spec, const std::vector<std::size_t>& hidden,
                           RandomStream& rng) {
  auto sizes = [&](std::size_t out) {
    std::vector<std::size_t> s{ObservationEncoder::kSize};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(out);
    return s;
  };
  ActorNet a{MlpNet(sizes(1), HeadActivation::kBounded, spec.max_bid > 0.0 ? spec.max_bid : 1.0),
             MlpNet(sizes(spec.ratio_count), HeadActivation::kSoftmax)};
  a.bid.initialize(rng);
  a.ratio.initialize(rng);
  return a;
}

inline double clip_bid(double raw, double max_bid, double budget) {
  return std::clamp(raw, 0.0, std::max(0.0, std::min(max_bid, budget)));
}

inline std::size_t argmax(const Vector& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<std::size_t>(i);
}

inline Action act_greedy(const Observation& obs, const ActorNet& actor, const ActorSpec& spec,
                         double budget) {
  const Vector x = spec.encoder.encode(obs);
  Action a;
  a.bid = spec.max_bid > 0.0
              ? clip_bid(spec.pre_clip(actor.bid.forward(x)[0]), spec.max_bid, budget)
              : 0.0;
  a.ratio_index = spec.pinned_ratio ? *spec.pinned_ratio : argmax(actor.ratio.forward(x));
  return a;
}

// Gaussian bid noise of the given variance, Gumbel-Softmax ratio sampling at
// temperature `tau`; the executed ratio is the argmax of the relaxed sample.
inline Action act_explore(const Observation& obs, const ActorNet& actor, const ActorSpec& spec,
                          double budget, RandomStream& rng, double noise_variance, double tau) {
  const Vector x = spec.encoder.encode(obs);
  Action a;
  const double noise = noise_variance > 0.0 ? std::sqrt(noise_variance) * standard_normal(rng) : 0.0;
  a.bid = spec.max_bid > 0.0
              ? clip_bid(spec.pre_clip(actor.bid.forward(x)[0]) + noise, spec.max_bid, budget)
              : 0.0;
  if (spec.pinned_ratio) {
    a.ratio_index = *spec.pinned_ratio;
  } else {
    const ForwardTape t = actor.ratio.forward_tape(Matrix(x));
    a.ratio_index = argmax(gumbel_softmax(t.logits.col(0), tau, rng));
  }
  return a;
}

// ---------------------------------------------------------------------------

class CriticLayout {
 public:
  CriticLayout() = default;
  explicit CriticLayout(const SystemConfig& sys) {
    std::size_t off = 0;
    for (const auto& md : sys.devices) {
      offsets_.push_back(off);
      ratio_counts_.push_back(md.ratios.size());
      bid_scales_.push_back(md.max_bid > 0.0 ? md.max_bid : 1.0);
      off += ObservationEncoder::kSize + 1 + md.ratios.size();
    }
    dim_ = off;
  }

  std::size_t input_dim() const { return dim_; }
  std::size_t device_count() const { return offsets_.size(); }
  std::size_t obs_row(std::size_t k) const { return offsets_[k]; }
  std::size_t bid_row(std::size_t k) const { return offsets_[k] + ObservationEncoder::kSize; }
  std::size_t ratio_row(std::size_t k) const { return bid_row(k) + 1; }
  std::size_t ratio_count(std::size_t k) const { return ratio_counts_[k]; }
  double bid_scale(std::size_t k) const { return bid_scales_[k]; }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> ratio_counts_;
  std::vector<double> bid_scales_;
  std::size_t dim_ = 0;
};

struct DeviceAgent {
  ActorSpec spec;
  ActorNet actor;
  ActorNet target_actor;
  MlpNet critic;
  MlpNet target_critic;
  OptimizerState bid_opt;
  OptimizerState ratio_opt;
  OptimizerState critic_opt;
};

inline std::vector<DeviceAgent> make_agents(const SystemConfig& sys, const TrainConfig& cfg,
                                            RandomStream& rng) {
  const CriticLayout layout(sys);
  std::vector<DeviceAgent> agents;
  for (std::size_t k = 0; k < sys.device_count(); ++k) {
    DeviceAgent a;
    a.spec = make_actor_spec(sys, k, cfg);
    a.actor = make_actor(a.spec, cfg.hidden, rng);
    a.target_actor = a.actor;
    std::vector<std::size_t> sizes{layout.input_dim()};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(1);
    a.critic = MlpNet(sizes, HeadActivation::kIdentity);
    a.critic.initialize(rng);
    a.target_critic = a.critic;
    a.bid_opt = OptimizerState(a.actor.bid, {cfg.actor_lr});
    a.ratio_opt = OptimizerState(a.actor.ratio, {cfg.actor_lr});
    a.critic_opt = OptimizerState(a.critic, {cfg.critic_lr});
    agents.push_back(std::move(a));
  }
  return agents;
}

// All (episode, slot) transitions of a sampled batch, one column each.
struct TransitionBatch {
  std::size_t size = 0;
  std::vector<Matrix> obs;       // per device: kSize x B
  std::vector<Matrix> next_obs;  // per device: kSize x B
  std::vector<Matrix> bids;      // per device: 1 x B
  std::vector<Matrix> ratios;    // per device: |Omega_k| x B one-hot
  std::vector<Matrix> rewards;   // per device: 1 x B
  Matrix nonterminal;            // 1 x B
};

inline TransitionBatch make_batch(const std::vector<const Episode*>& episodes,
                                  const std::vector<DeviceAgent>& agents) {
  detail::require(!episodes.empty(), "make_batch: empty batch");
  const std::size_t K = agents.size();
  std::size_t B = 0;
  for (const Episode* e : episodes) B += e->slot_count();
  TransitionBatch b;
  b.size = B;
  const auto cols = static_cast<Eigen::Index>(B);
  for (std::size_t k = 0; k < K; ++k) {
    b.obs.push_back(Matrix(ObservationEncoder::kSize, cols));
    b.next_obs.push_back(Matrix(ObservationEncoder::kSize, cols));
    b.bids.push_back(Matrix(1, cols));
    b.ratios.push_back(
        Matrix::Zero(static_cast<Eigen::Index>(agents[k].spec.ratio_count), cols));
    b.rewards.push_back(Matrix(1, cols));
  }
  b.nonterminal = Matrix(1, cols);
  Eigen::Index col = 0;
  for (const Episode* e : episodes) {
    const std::size_t N = e->slot_count();
    for (std::size_t n = 0; n < N; ++n, ++col) {
      b.nonterminal(0, col) = n + 1 < N ? 1.0 : 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const Experience& x = e->at(n, k);
        agents[k].spec.encoder.encode(x.obs, b.obs[k].col(col));
        agents[k].spec.encoder.encode(x.next_obs, b.next_obs[k].col(col));
        b.bids[k](0, col) = x.action.bid;
        b.ratios[k](static_cast<Eigen::Index>(x.action.ratio_index), col) = 1.0;
        b.rewards[k](0, col) = x.reward;
      }
    }
  }
  return b;
}

inline Matrix assemble_critic_input(const CriticLayout& layout, const std::vector<Matrix>& obs,
                                    const std::vector<Matrix>& bids,
                                    const std::vector<Matrix>& ratios) {
  const Eigen::Index B = obs.front().cols();
  Matrix x(static_cast<Eigen::Index>(layout.input_dim()), B);
  for (std::size_t k = 0; k < layout.device_count(); ++k) {
    const auto kSize = static_cast<Eigen::Index>(ObservationEncoder::kSize);
    x.middleRows(static_cast<Eigen::Index>(layout.obs_row(k)), kSize) = obs[k];
    x.row(static_cast<Eigen::Index>(layout.bid_row(k))) = bids[k] / layout.bid_scale(k);
    x.middleRows(static_cast<Eigen::Index>(layout.ratio_row(k)),
                 static_cast<Eigen::Index>(layout.ratio_count(k))) = ratios[k];
  }
  return x;
}

inline Matrix one_hot_argmax(const Matrix& probs) {
  Matrix out = Matrix::Zero(probs.rows(), probs.cols());
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    Eigen::Index i = 0;
    probs.col(j).maxCoeff(&i);
    out(i, j) = 1.0;
  }
  return out;
}

// Deterministic target-policy action pi'(O) on a batch of encoded
// observations; bids are clipped to the budget decoded from the observation.
inline void target_actions(const DeviceAgent& a, const Matrix& obs, Matrix& bids, Matrix& ratios) {
  const auto B = obs.cols();
  bids = Matrix::Zero(1, B);
  if (a.spec.max_bid > 0.0) {
    const Matrix raw = a.spec.pre_clip(a.target_actor.bid.forward(obs));
    for (Eigen::Index j = 0; j < B; ++j) {
      bids(0, j) = clip_bid(raw(0, j), a.spec.max_bid, obs(2, j) * a.spec.encoder.budget_scale);
    }
  }
  if (a.spec.pinned_ratio) {
    ratios = Matrix::Zero(static_cast<Eigen::Index>(a.spec.ratio_count), B);
    ratios.row(static_cast<Eigen::Index>(*a.spec.pinned_ratio)).setOnes();
  } else {
    ratios = one_hot_argmax(a.target_actor.ratio.forward(obs));
  }
}

// Squared TD-error step for device k's critic. Target: R_k alone at the last
// slot, R_k + Q'_k(O', pi'(O')) otherwise. Returns the pre-update loss.
inline double critic_update(const TransitionBatch& batch, std::size_t k,
                            std::vector<DeviceAgent>& agents, const CriticLayout& layout) {
  detail::require(batch.size > 0, "critic_update: empty batch");
  const std::size_t K = agents.size();
  std::vector<Matrix> next_bids(K), next_ratios(K);
  for (std::size_t j = 0; j < K; ++j) {
    target_actions(agents[j], batch.next_obs[j], next_bids[j], next_ratios[j]);
  }
  DeviceAgent& a = agents[k];
  const Matrix next_q =
      a.target_critic.forward(assemble_critic_input(layout, batch.next_obs, next_bids, next_ratios));
  const Matrix target = batch.rewards[k] + batch.nonterminal.cwiseProduct(next_q);

  const ForwardTape tape =
      a.critic.forward_tape(assemble_critic_input(layout, batch.obs, batch.bids, batch.ratios));
  const Matrix residual = tape.output - target;
  const double B = static_cast<double>(batch.size);
  const double loss = residual.squaredNorm() / B;
  const GradientBundle g = a.critic.backward(tape, (2.0 / B) * residual);
  optimizer_step(a.critic, g.params, a.critic_opt);
  return loss;
}

struct ActorGradients {
  std::optional<std::vector<DenseLayer>> bid;    // absent when the bid is fixed at 0
  std::optional<std::vector<DenseLayer>> ratio;  // absent when the ratio is pinned
  double objective = 0.0;                        // mean critic value
};

// Gradients of -mean(Q) for device k's actor: device k's action is recomputed
// differentiably (bid head directly, ratio head through a Gumbel-Softmax
// sample) while other devices keep their stored actions.
inline ActorGradients actor_gradients(const TransitionBatch& batch, std::size_t k,
                                      const std::vector<DeviceAgent>& agents,
                                      const CriticLayout& layout, double tau, RandomStream& rng) {
  detail::require(batch.size > 0, "actor_update: empty batch");
  const DeviceAgent& a = agents[k];
  const double B = static_cast<double>(batch.size);
  const auto cols = static_cast<Eigen::Index>(batch.size);

  std::vector<Matrix> bids = batch.bids;
  std::vector<Matrix> ratios = batch.ratios;

  const bool learn_bid = a.spec.max_bid > 0.0;
  ForwardTape bid_tape;
  if (learn_bid) {
    bid_tape = a.actor.bid.forward_tape(batch.obs[k]);
    bids[k] = a.spec.pre_clip(bid_tape.output);
  } else {
    bids[k] = Matrix::Zero(1, cols);
  }

  ForwardTape ratio_tape;
  Matrix relaxed;
  const bool learn_ratio = !a.spec.pinned_ratio.has_value();
  if (learn_ratio) {
    ratio_tape = a.actor.ratio.forward_tape(batch.obs[k]);
    const Matrix noise = gumbel_noise(ratio_tape.logits.rows(), cols, rng);
    relaxed = gumbel_softmax_with_noise(ratio_tape.logits, noise, tau);
    ratios[k] = relaxed;
  }

  const ForwardTape q_tape =
      a.critic.forward_tape(assemble_critic_input(layout, batch.obs, bids, ratios));
  ActorGradients out;
  out.objective = q_tape.output.sum() / B;
  const GradientBundle qg = a.critic.backward(q_tape, Matrix::Constant(1, cols, -1.0 / B));

  if (learn_bid) {
    const Matrix d_bid = qg.input.row(static_cast<Eigen::Index>(layout.bid_row(k))) *
                         (a.spec.stretch() / layout.bid_scale(k));
    out.bid = a.actor.bid.backward(bid_tape, d_bid).params;
  }
  if (learn_ratio) {
    const Matrix d_relaxed = qg.input.middleRows(static_cast<Eigen::Index>(layout.ratio_row(k)),
                                                 static_cast<Eigen::Index>(layout.ratio_count(k)));
    const Matrix d_logits = gumbel_softmax_backward(ratio_tape.logits, relaxed, d_relaxed, tau);
    out.ratio = a.actor.ratio.backward_logits(ratio_tape, d_logits).params;
  }
  return out;
}

// One policy-gradient step for device k's actor, ascending its critic.
// Returns the mean critic value before the step.
inline double actor_update(const TransitionBatch& batch, std::size_t k,
                           std::vector<DeviceAgent>& agents, const CriticLayout& layout,
                           double tau, RandomStream& rng) {
  const ActorGradients g = actor_gradients(batch, k, agents, layout, tau, rng);
  DeviceAgent& a = agents[k];
  if (g.bid) optimizer_step(a.actor.bid, *g.bid, a.bid_opt);
  if (g.ratio) optimizer_step(a.actor.ratio, *g.ratio, a.ratio_opt);
  return g.objective;
}

inline void soft_update_targets(DeviceAgent& a, double tau_critic, double tau_actor) {
  soft_update(a.target_critic, a.critic, tau_critic);
  soft_update(a.target_actor.bid, a.actor.bid, tau_actor);
  soft_update(a.target_actor.ratio, a.actor.ratio, tau_actor);
}

// ---------------------------------------------------------------------------

struct UpdateStats {
  std::vector<double> critic_loss;
  std::vector<double> actor_objective;
};

class MaddpgTrainer {
 public:
  MaddpgTrainer(SystemConfig sys, TrainConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        env_(std::move(sys), seed),
        layout_(env_.config()),
        buffer_(cfg_.buffer_capacity),
        policy_rng_(make_stream(seed, {kPolicyStream})),
        replay_rng_(make_stream(seed, {kReplayStream})) {
    validate(cfg_);
    RandomStream init = make_stream(seed, {kInitStream});
    agents_ = make_agents(env_.config(), cfg_, init);
  }

  const TrainConfig& config() const { return cfg_; }
  const SystemConfig& system() const { return env_.config(); }
  const CriticLayout& layout() const { return layout_; }
  std::vector<DeviceAgent>& agents() { return agents_; }
  const std::vector<DeviceAgent>& agents() const { return agents_; }
  const RingBuffer<Episode>& buffer() const { return buffer_; }
  std::size_t episodes_done() const { return episode_; }

  double temperature() const {
    if (cfg_.episodes <= 1) return cfg_.gumbel_temperature;
    const double frac = std::min(1.0, static_cast<double>(episode_) /
                                          static_cast<double>(cfg_.episodes - 1));
    return std::lerp(cfg_.gumbel_temperature, cfg_.gumbel_temperature_final, frac);
  }

  // Collects one exploratory episode.
  Episode collect(EpisodeMetrics* metrics) {
    const double tau = temperature();
    auto policy = [&](std::size_t k, const Observation& obs) {
      return act_explore(obs, agents_[k].actor, agents_[k].spec, obs.budget, policy_rng_,
                         cfg_.exploration_variance, tau);
    };
    return play_episode(env_, policy, Admission::kBidding, metrics);
  }

  // One model-update pass over a sampled batch of episodes.
  UpdateStats update() {
    const auto idx = buffer_.sample_indices(cfg_.batch_episodes, replay_rng_);
    std::vector<const Episode*> picked;
    picked.reserve(idx.size());
    for (std::size_t i : idx) picked.push_back(&buffer_[i]);
    const TransitionBatch batch = make_batch(picked, agents_);
    UpdateStats stats;
    const double tau = temperature();
    for (std::size_t k = 0; k < agents_.size(); ++k) {
      stats.critic_loss.push_back(critic_update(batch, k, agents_, layout_));
      stats.actor_objective.push_back(actor_update(batch, k, agents_, layout_, tau, policy_rng_));
    }
    for (auto& a : agents_) soft_update_targets(a, cfg_.tau_critic, cfg_.tau_actor);
    return stats;
  }

  // Collect, store, update: one iteration of the training loop.
  EpisodeMetrics step_episode() {
    EpisodeMetrics m;
    buffer_.push(collect(&m));
    for (std::size_t u = 0; u < cfg_.updates_per_episode; ++u) update();
    ++episode_;
    return m;
  }

  std::vector<EpisodeMetrics> train(
      const std::function<void(std::size_t, const EpisodeMetrics&)>& on_episode = {}) {
    std::vector<EpisodeMetrics> trace;
    trace.reserve(cfg_.episodes);
    while (episode_ < cfg_.episodes) {
      trace.push_back(step_episode());
      if (on_episode) on_episode(episode_, trace.back());
    }
    return trace;
  }

 private:
  TrainConfig cfg_;
  Environment env_;
  CriticLayout layout_;
  std::vector<DeviceAgent> agents_;
  RingBuffer<Episode> buffer_;
  RandomStream policy_rng_;
  RandomStream replay_rng_;
  std::size_t episode_ = 0;
};

}  // namespace edgebid
