// Copyright 2026 The edgebid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-device edge inference environment: block-fading uplinks, a sealed-bid
// top-U auction for the server, per-episode bidding budgets, and the
// accuracy/leakage reward.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "edgebid/error.hpp"
#include "edgebid/random.hpp"
#include "edgebid/surrogate.hpp"

namespace edgebid {

struct MdConfig {
  std::size_t index = 0;
  std::size_t feature_dims = 128;
  std::size_t bits_per_dim = 8;
  std::vector<double> ratios{1.0, 0.75, 0.5, 0.25};  // descending
  double max_bid = 1.0;
  double initial_budget = 5.0;
  std::size_t class_count = 10;
  double mean_snr = 1.0;  // linear
  double weight_t1 = 0.2;
  SurrogateParams surrogate{};

  double min_ratio() const { return *std::min_element(ratios.begin(), ratios.end()); }
  double max_entropy() const { return std::log(static_cast<double>(class_count)); }
  double uncompressed_bits() const {
    return static_cast<double>(feature_dims) * static_cast<double>(bits_per_dim);
  }
  std::size_t ratio_index_of(double ratio) const {
    auto it = std::find(ratios.begin(), ratios.end(), ratio);
    detail::require(it != ratios.end(), "ratio not in the device's ratio set");
    return static_cast<std::size_t>(it - ratios.begin());
  }
};

struct SystemConfig {
  std::size_t server_capacity = 1;
  std::size_t horizon = 10;
  double slot_duration = 0.1;  // seconds
  double bandwidth = 50e3;     // Hz
  double weight_t2 = 0.8;
  std::vector<MdConfig> devices;

  std::size_t device_count() const { return devices.size(); }
};

inline void validate(const MdConfig& md) {
  using detail::require_config;
  const std::string who = "device " + std::to_string(md.index + 1) + ": ";
  require_config(md.feature_dims > 0 && md.bits_per_dim > 0, who + "feature size must be positive");
  require_config(!md.ratios.empty(), who + "ratio set must not be empty");
  for (std::size_t i = 0; i < md.ratios.size(); ++i) {
    const double r = md.ratios[i];
    require_config(r > 0.0 && r <= 1.0, who + "ratios must lie in (0,1]");
    require_config(i == 0 || md.ratios[i - 1] > r, who + "ratios must be strictly descending");
  }
  require_config(md.max_bid >= 0.0 && std::isfinite(md.max_bid), who + "max_bid must be >= 0");
  require_config(md.initial_budget >= 0.0 && std::isfinite(md.initial_budget),
                 who + "initial_budget must be >= 0");
  require_config(md.class_count >= 2, who + "class_count must be at least 2");
  require_config(md.mean_snr > 0.0 && std::isfinite(md.mean_snr), who + "mean_snr must be positive");
  require_config(md.weight_t1 > 0.0, who + "weight_t1 must be positive");
  validate(md.surrogate);
}

inline void validate(const SystemConfig& sys) {
  using detail::require_config;
  require_config(sys.device_count() >= 1, "system: at least one device required");
  require_config(sys.server_capacity >= 1 && sys.server_capacity <= sys.device_count(),
                 "system: server capacity U must satisfy 1 <= U <= K");
  require_config(sys.horizon >= 1, "system: horizon N must be >= 1");
  require_config(sys.slot_duration > 0.0 && sys.bandwidth > 0.0,
                 "system: slot duration and bandwidth must be positive");
  require_config(sys.weight_t2 > 0.0, "system: weight_t2 must be positive");
  for (std::size_t k = 0; k < sys.device_count(); ++k) {
    require_config(sys.devices[k].index == k, "system: device indices must be 0..K-1 in order");
    validate(sys.devices[k]);
  }
}

// ---------------------------------------------------------------------------

struct SystemState {
  std::size_t slot = 1;          // 1-based; N + 1 after the last step
  std::vector<double> rates;     // bits per slot
  std::vector<double> budgets;   // remaining bid units
  std::vector<Datum> data;
};

struct Observation {
  double slot = 1.0;
  double rate = 0.0;
  double budget = 0.0;
  double entropy = 0.0;

  static constexpr std::size_t kSize = 4;
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct Action {
  double bid = 0.0;
  std::size_t ratio_index = 0;  // 0-based index into MdConfig::ratios
  friend bool operator==(const Action&, const Action&) = default;
};

struct DeviceOutcome {
  bool admitted = false;  // picked by the server
  bool served = false;    // admitted and delivered (xi = 1)
  bool correct = false;
  double ratio = 1.0;
  double accuracy_loss = 0.0;
  double privacy_leakage = 0.0;
  double reward = 0.0;
  double charged = 0.0;
};

struct StepResult {
  std::vector<DeviceOutcome> devices;
  SystemState next;

  std::vector<double> rewards() const {
    std::vector<double> r;
    for (const auto& d : devices) r.push_back(d.reward);
    return r;
  }
  std::size_t served_count() const {
    return static_cast<std::size_t>(
        std::count_if(devices.begin(), devices.end(), [](const auto& d) { return d.served; }));
  }
};

// ---------------------------------------------------------------------------

inline double payload_bits(double ratio, std::size_t dims, std::size_t bits_per_dim) {
  detail::require(ratio > 0.0 && ratio <= 1.0, "payload_bits: ratio must lie in (0,1]");
  return ratio * static_cast<double>(dims) * static_cast<double>(bits_per_dim);
}

inline double channel_rate(double gain, const MdConfig& md, const SystemConfig& sys) {
  return sys.slot_duration * sys.bandwidth * std::log2(1.0 + md.mean_snr * gain);
}

// Rayleigh block fading: |h|^2 is a unit-mean exponential.
inline double sample_channel_rate(RandomStream& rng, const MdConfig& md, const SystemConfig& sys) {
  return channel_rate(unit_exponential(rng), md, sys);
}

inline double compute_reward(double accuracy_loss, double privacy_leakage, double t1, double t2) {
  return -t1 * accuracy_loss - t2 * privacy_leakage;
}

struct Bid {
  std::size_t device = 0;
  double value = 0.0;
  bool feasible = false;
};

// Admits up to `capacity` feasible positive bidders with the highest bids.
// Every bidder gets a uniform jitter key, so ties at the admission boundary are
// broken uniformly at random; exactly bids.size() draws are consumed.
inline std::vector<std::size_t> run_auction(std::span<const Bid> bids, std::size_t capacity,
                                            RandomStream& rng) {
  struct Keyed {
    std::size_t device;
    double value;
    double jitter;
  };
  std::vector<Keyed> pool;
  pool.reserve(bids.size());
  for (const Bid& b : bids) {
    const double jitter = uniform01(rng);
    if (b.feasible && b.value > 0.0) pool.push_back({b.device, b.value, jitter});
  }
  std::sort(pool.begin(), pool.end(), [](const Keyed& a, const Keyed& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.jitter > b.jitter;
  });
  std::vector<std::size_t> served;
  for (std::size_t i = 0; i < pool.size() && i < capacity; ++i) served.push_back(pool[i].device);
  std::sort(served.begin(), served.end());
  return served;
}

inline Observation observe(const SystemState& s, std::size_t k) {
  detail::require(k < s.rates.size(), "observe: device index out of range");
  return {static_cast<double>(s.slot), s.rates[k], s.budgets[k], s.data[k].entropy};
}

// How the server picks whom to serve in a slot.
enum class Admission {
  kBidding,       // top-U feasible positive bids
  kChannelBlind,  // top-U positive bids, channel ignored; undeliverable picks fall back to local
};

class Environment {
 public:
  Environment(SystemConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        world_(make_stream(seed, {kWorldStream})),
        auction_(make_stream(seed, {kAuctionStream})) {
    validate(cfg_);
    reset();
  }

  const SystemConfig& config() const { return cfg_; }
  const SystemState& state() const { return state_; }
  std::size_t device_count() const { return cfg_.device_count(); }
  bool done() const { return state_.slot > cfg_.horizon; }

  const SystemState& reset() {
    state_.slot = 1;
    state_.budgets.clear();
    for (const auto& md : cfg_.devices) state_.budgets.push_back(md.initial_budget);
    draw_world();
    return state_;
  }

  Observation observe(std::size_t k) const { return edgebid::observe(state_, k); }

  bool deliverable(std::size_t k, std::size_t ratio_index) const {
    const MdConfig& md = cfg_.devices[k];
    return payload_bits(md.ratios[ratio_index], md.feature_dims, md.bits_per_dim) <=
           state_.rates[k];
  }

  // Decentralized step: every device bids, the server runs the auction.
  StepResult step(std::span<const Action> actions, Admission mode = Admission::kBidding) {
    check_step(actions, /*check_budget=*/true);
    std::vector<Bid> bids;
    for (std::size_t k = 0; k < actions.size(); ++k) {
      const bool channel_ok =
          mode == Admission::kChannelBlind || deliverable(k, actions[k].ratio_index);
      bids.push_back({k, actions[k].bid, channel_ok});
    }
    const auto admitted = run_auction(bids, cfg_.server_capacity, auction_);
    return resolve(actions, admitted, /*charge=*/true);
  }

  // Centralized step: the server picks the admitted set directly; bids and
  // budgets play no role. Undeliverable picks fall back to local inference.
  StepResult step_directed(std::span<const Action> actions, std::span<const std::size_t> admitted) {
    check_step(actions, /*check_budget=*/false);
    detail::require(admitted.size() <= cfg_.server_capacity,
                    "step_directed: admitted set exceeds server capacity");
    std::vector<std::size_t> sorted(admitted.begin(), admitted.end());
    std::sort(sorted.begin(), sorted.end());
    detail::require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
                    "step_directed: duplicate device in admitted set");
    for (std::size_t k : sorted) detail::require(k < device_count(), "step_directed: bad device");
    return resolve(actions, sorted, /*charge=*/false);
  }

 private:
  void draw_world() {
    const std::size_t K = cfg_.device_count();
    state_.rates.assign(K, 0.0);
    state_.data.assign(K, Datum{});
    for (std::size_t k = 0; k < K; ++k) {
      state_.rates[k] = sample_channel_rate(world_, cfg_.devices[k], cfg_);
      state_.data[k] = draw_datum(world_, cfg_.devices[k].class_count, cfg_.devices[k].surrogate);
    }
  }

  void check_step(std::span<const Action> actions, bool check_budget) const {
    if (state_.slot > cfg_.horizon) {
      throw ContractViolation("step: slot " + std::to_string(state_.slot) +
                              " is past the horizon " + std::to_string(cfg_.horizon));
    }
    detail::require(actions.size() == device_count(), "step: need one action per device");
    for (std::size_t k = 0; k < actions.size(); ++k) {
      const MdConfig& md = cfg_.devices[k];
      const Action& a = actions[k];
      detail::require(a.ratio_index < md.ratios.size(), "step: ratio index out of range");
      detail::require(std::isfinite(a.bid) && a.bid >= 0.0, "step: bid must be finite and >= 0");
      if (check_budget) {
        detail::require(a.bid <= std::min(md.max_bid, state_.budgets[k]),
                        "step: bid exceeds min(max_bid, remaining budget) for device " +
                            std::to_string(k + 1));
      }
    }
  }

  StepResult resolve(std::span<const Action> actions, std::span<const std::size_t> admitted,
                     bool charge) {
    const std::size_t K = device_count();
    StepResult out;
    out.devices.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      const MdConfig& md = cfg_.devices[k];
      DeviceOutcome& o = out.devices[k];
      const Datum& datum = state_.data[k];
      o.admitted = std::find(admitted.begin(), admitted.end(), k) != admitted.end();
      o.served = o.admitted && deliverable(k, actions[k].ratio_index);
      InferenceOutcome inf;
      if (o.served) {
        o.ratio = md.ratios[actions[k].ratio_index];
        inf = edge_infer(datum, o.ratio, md.ratios, md.surrogate);
        o.privacy_leakage = ssim_surrogate(o.ratio, md.surrogate);
        if (charge) {
          o.charged = actions[k].bid;
          state_.budgets[k] = state_.budgets[k] - actions[k].bid;
        }
      } else {
        inf = local_infer(datum, md.surrogate);
        o.privacy_leakage = 0.0;
      }
      o.correct = inf.correct;
      o.accuracy_loss = inf.ce_proxy;
      o.reward = compute_reward(o.accuracy_loss, o.privacy_leakage, md.weight_t1, cfg_.weight_t2);
    }
    ++state_.slot;
    draw_world();
    out.next = state_;
    return out;
  }

  SystemConfig cfg_;
  RandomStream world_;
  RandomStream auction_;
  SystemState state_;
};

}  // namespace edgebid
