// Copyright 2026 The edgebid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "edgebid/env_core.hpp"
#include "edgebid/error.hpp"
#include "edgebid/random.hpp"

namespace edgebid {

// d_k[n] = (O_k[n], A_k[n], O_k[n+1], R_k[n]).
struct Experience {
  Observation obs;
  Action action;
  Observation next_obs;
  double reward = 0.0;
};

// One episode of experience, slot-major: steps[(n - 1) * K + k].
struct Episode {
  std::size_t device_count = 0;
  std::vector<Experience> steps;

  std::size_t slot_count() const { return device_count == 0 ? 0 : steps.size() / device_count; }
  const Experience& at(std::size_t slot_index, std::size_t k) const {
    return steps[slot_index * device_count + k];
  }
};

// Per-episode, per-device aggregates.
struct EpisodeMetrics {
  std::vector<double> reward;      // cumulative
  std::vector<double> accuracy;    // fraction of slots classified correctly
  std::vector<double> ssim;        // mean leakage over served slots (0 if none)
  std::vector<double> bids_spent;
  std::vector<std::size_t> served;
  std::vector<std::size_t> slots;
};

class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(std::size_t devices)
      : reward_(devices, 0.0), correct_(devices, 0), ssim_(devices, 0.0),
        spent_(devices, 0.0), served_(devices, 0) {}

  void add(const StepResult& r) {
    for (std::size_t k = 0; k < r.devices.size(); ++k) {
      const DeviceOutcome& d = r.devices[k];
      reward_[k] += d.reward;
      correct_[k] += d.correct ? 1 : 0;
      if (d.served) {
        ssim_[k] += d.privacy_leakage;
        ++served_[k];
      }
      spent_[k] += d.charged;
    }
    ++slots_;
  }

  EpisodeMetrics finish() const {
    EpisodeMetrics m;
    const std::size_t K = reward_.size();
    for (std::size_t k = 0; k < K; ++k) {
      m.reward.push_back(reward_[k]);
      m.accuracy.push_back(slots_ ? static_cast<double>(correct_[k]) / static_cast<double>(slots_)
                                  : 0.0);
      m.ssim.push_back(served_[k] ? ssim_[k] / static_cast<double>(served_[k]) : 0.0);
      m.bids_spent.push_back(spent_[k]);
      m.served.push_back(served_[k]);
      m.slots.push_back(slots_);
    }
    return m;
  }

 private:
  std::vector<double> reward_;
  std::vector<std::size_t> correct_;
  std::vector<double> ssim_;
  std::vector<double> spent_;
  std::vector<std::size_t> served_;
  std::size_t slots_ = 0;
};

// Per-slot observer hook; receives the step result and the actions that produced it.
struct NoSlotObserver {
  void operator()(const StepResult&, std::span<const Action>) const {}
};

// Plays one decentralized episode from a fresh reset. `policy(k, obs)` returns
// device k's action.
template <class Policy, class SlotObserver = NoSlotObserver>
Episode play_episode(Environment& env, Policy&& policy, Admission mode, EpisodeMetrics* metrics,
                     SlotObserver&& observer = {}) {
  const std::size_t K = env.device_count();
  env.reset();
  Episode ep;
  ep.device_count = K;
  MetricsAccumulator acc(K);
  std::vector<Observation> obs(K);
  std::vector<Action> actions(K);
  while (!env.done()) {
    for (std::size_t k = 0; k < K; ++k) {
      obs[k] = env.observe(k);
      actions[k] = policy(k, obs[k]);
    }
    const StepResult r = env.step(actions, mode);
    acc.add(r);
    observer(r, std::span<const Action>(actions));
    for (std::size_t k = 0; k < K; ++k) {
      ep.steps.push_back({obs[k], actions[k], edgebid::observe(r.next, k), r.devices[k].reward});
    }
  }
  if (metrics) *metrics = acc.finish();
  return ep;
}

// FIFO store with fixed capacity.
template <class T>
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity) : capacity_(capacity) {
    detail::require(capacity > 0, "RingBuffer: capacity must be positive");
  }

  void push(T item) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(item));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const T& operator[](std::size_t i) const { return items_[i]; }  // 0 = oldest

  // Uniform sample of `count` indices; without replacement when the buffer
  // holds at least `count` items, with replacement otherwise.
  std::vector<std::size_t> sample_indices(std::size_t count, RandomStream& rng) const {
    detail::require(!items_.empty(), "RingBuffer: cannot sample from an empty buffer");
    std::vector<std::size_t> idx;
    idx.reserve(count);
    const std::size_t n = items_.size();
    if (n < count) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t i = 0; i < count; ++i) idx.push_back(pick(rng));
    } else {
      std::vector<std::size_t> all(n);
      for (std::size_t i = 0; i < n; ++i) all[i] = i;
      for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(all[i], all[pick(rng)]);
        idx.push_back(all[i]);
      }
    }
    return idx;
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
};

}  // namespace edgebid
