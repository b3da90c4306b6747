// Copyright 2026 The edgebid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner: configuration schema, calibration, training and
// evaluation orchestration, sweeps, and artifact persistence.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "edgebid/baselines.hpp"
#include "edgebid/env_core.hpp"
#include "edgebid/error.hpp"
#include "edgebid/maddpg.hpp"
#include "edgebid/random.hpp"
#include "edgebid/rollout.hpp"
#include "edgebid/surrogate.hpp"
#include "edgebid/tensor_core.hpp"

namespace edgebid {

// ---------------------------------------------------------------------------
// Algorithms.

enum class Algorithm { kMaddpg, kMaddpgDD, kMaddpgDT, kMaddpgMC, kDqn, kSib };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kMaddpg: return "maddpg";
    case Algorithm::kMaddpgDD: return "maddpg-dd";
    case Algorithm::kMaddpgDT: return "maddpg-dt";
    case Algorithm::kMaddpgMC: return "maddpg-mc";
    case Algorithm::kDqn: return "dqn";
    case Algorithm::kSib: return "sib";
  }
  return "?";
}

inline Algorithm algorithm_from_string(const std::string& s) {
  for (Algorithm a : {Algorithm::kMaddpg, Algorithm::kMaddpgDD, Algorithm::kMaddpgDT,
                      Algorithm::kMaddpgMC, Algorithm::kDqn, Algorithm::kSib}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown algorithm '" + s +
                    "' (expected maddpg, maddpg-dd, maddpg-dt, maddpg-mc, dqn or sib)");
}

inline bool is_actor_critic(Algorithm a) {
  return a == Algorithm::kMaddpg || a == Algorithm::kMaddpgDD || a == Algorithm::kMaddpgDT ||
         a == Algorithm::kMaddpgMC;
}

inline TrainConfig train_config_for(const TrainConfig& base, Algorithm a) {
  switch (a) {
    case Algorithm::kMaddpgDD: return make_variant(base, Variant::kDD);
    case Algorithm::kMaddpgDT: return make_variant(base, Variant::kDT);
    case Algorithm::kMaddpgMC: return make_variant(base, Variant::kMC);
    default: return base;
  }
}

// ---------------------------------------------------------------------------
// Configuration schema. Fields left as "auto" are resolved by prepare_system.

struct SurrogateSpec {
  double local_accuracy = 0.73;
  double edge_accuracy = 0.90;
  double acc_floor_ratio = 0.95;
  double ssim_at_full = 0.6;
  std::optional<double> ssim_exponent;  // auto: anchored at the smallest ratio
  double ssim_anchor = 0.26;
  double difficulty_alpha = 1.0;
  double difficulty_beta = 1.0;
  double entropy_noise_std = 0.05;
  double easy_confidence = 0.99;
  double min_confidence = 0.01;
  double max_confidence = 0.99;

  friend bool operator==(const SurrogateSpec&, const SurrogateSpec&) = default;
};

struct DeviceSpec {
  std::size_t feature_dims = 128;
  std::size_t bits_per_dim = 8;
  std::vector<double> ratios{1.0, 0.75, 0.5, 0.25};
  double max_bid = 1.0;
  double initial_budget = 5.0;
  std::size_t class_count = 10;
  std::optional<double> mean_snr;  // auto: feasibility calibration
  double weight_t1 = 0.2;
  SurrogateSpec surrogate{};

  friend bool operator==(const DeviceSpec&, const DeviceSpec&) = default;
};

struct SystemSpec {
  std::size_t server_capacity = 1;
  std::size_t horizon = 10;
  double slot_duration = 0.1;
  double bandwidth = 50e3;
  double weight_t2 = 0.8;
  double snr_feasibility = 0.5;
  double snr_search_max = 1e9;
  std::vector<DeviceSpec> devices;

  friend bool operator==(const SystemSpec&, const SystemSpec&) = default;
};

struct CalibrationSpec {
  std::uint64_t seed = 2026;
  std::size_t surrogate_draws = 200000;
  std::size_t snr_draws = 100000;

  friend bool operator==(const CalibrationSpec&, const CalibrationSpec&) = default;
};

struct WeightPair {
  std::vector<double> t1;  // per device
  double t2 = 0.8;

  friend bool operator==(const WeightPair&, const WeightPair&) = default;
};

struct TradeoffSweepSpec {
  std::vector<Algorithm> algorithms{Algorithm::kMaddpg, Algorithm::kMaddpgDD, Algorithm::kMaddpgDT,
                                    Algorithm::kMaddpgMC, Algorithm::kDqn, Algorithm::kSib};
  std::vector<WeightPair> weights;
  std::optional<std::size_t> episodes;  // actor-critic only; default: train.episodes
  std::size_t eval_episodes = 100;

  friend bool operator==(const TradeoffSweepSpec&, const TradeoffSweepSpec&) = default;
};

struct BudgetSweepSpec {
  std::vector<double> splits{1, 3, 5, 7, 9};
  double total_budget = 10.0;
  std::vector<double> t1{0.9, 0.9};
  double t2 = 0.1;
  std::optional<std::size_t> episodes;
  std::size_t eval_episodes = 100;

  friend bool operator==(const BudgetSweepSpec&, const BudgetSweepSpec&) = default;
};

struct ExperimentConfig {
  SystemSpec system;
  TrainConfig train;
  DqnConfig dqn;
  SibConfig sib;
  Algorithm algorithm = Algorithm::kMaddpg;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "runs";
  std::size_t eval_episodes = 100;
  CalibrationSpec calibration;
  TradeoffSweepSpec tradeoff;
  BudgetSweepSpec budget;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Two devices with the evaluation defaults.
inline ExperimentConfig default_experiment() {
  ExperimentConfig c;
  DeviceSpec md1;
  md1.feature_dims = 8192;
  md1.ratios = {1.0, 0.8, 0.6, 0.4};
  md1.surrogate.local_accuracy = 0.73;
  md1.surrogate.edge_accuracy = 0.90;
  DeviceSpec md2;
  md2.feature_dims = 128;
  md2.ratios = {1.0, 0.75, 0.5, 0.25};
  md2.surrogate.local_accuracy = 0.72;
  md2.surrogate.edge_accuracy = 0.884;
  c.system.devices = {md1, md2};
  c.tradeoff.weights = {{{1.0, 1.0}, 0.05}, {{1.0, 1.0}, 0.1}, {{1.0, 1.0}, 0.2},
                        {{1.0, 1.0}, 0.4},  {{1.0, 1.0}, 0.6}, {{0.2, 0.2}, 0.8}};
  return c;
}

inline void validate(const ExperimentConfig& c) {
  using detail::require_config;
  const SystemSpec& s = c.system;
  require_config(!s.devices.empty(), "system.devices must not be empty");
  require_config(s.snr_feasibility > 0.0 && s.snr_feasibility < 1.0,
                 "system.snr_feasibility must lie in (0,1)");
  require_config(s.snr_search_max > 0.0, "system.snr_search_max must be positive");
  for (std::size_t k = 0; k < s.devices.size(); ++k) {
    const DeviceSpec& d = s.devices[k];
    const std::string who = "system.devices[" + std::to_string(k) + "]: ";
    if (d.mean_snr) require_config(*d.mean_snr > 0.0, who + "mean_snr must be positive");
    if (d.surrogate.ssim_exponent) {
      require_config(*d.surrogate.ssim_exponent > 0.0, who + "ssim_exponent must be positive");
    }
    require_config(d.surrogate.ssim_anchor > 0.0 && d.surrogate.ssim_anchor <= 1.0,
                   who + "ssim_anchor must lie in (0,1]");
  }
  validate(c.train);
  validate(c.dqn);
  require_config(c.sib.target_ssim > 0.0 && c.sib.target_ssim <= 1.0,
                 "sib.target_ssim must lie in (0,1]");
  if (c.sib.bid) require_config(*c.sib.bid >= 0.0, "sib.bid must be >= 0");
  require_config(!c.seeds.empty(), "seeds must not be empty");
  const std::size_t K = s.devices.size();
  for (const WeightPair& w : c.tradeoff.weights) {
    require_config(w.t1.size() == K, "tradeoff.weights: t1 needs one entry per device");
    for (double t : w.t1) require_config(t > 0.0, "tradeoff.weights: t1 must be positive");
    require_config(w.t2 > 0.0, "tradeoff.weights: t2 must be positive");
  }
  if (c.tradeoff.episodes) require_config(*c.tradeoff.episodes >= 1, "tradeoff.episodes must be >= 1");
  if (c.budget.episodes) require_config(*c.budget.episodes >= 1, "budget.episodes must be >= 1");
  require_config(c.budget.total_budget > 0.0, "budget.total_budget must be positive");
  for (double m : c.budget.splits) {
    require_config(m > 0.0 && m < c.budget.total_budget,
                   "budget.splits: every m must satisfy 0 < m < total_budget");
  }
  require_config(c.budget.t1.size() == K, "budget.t1 needs one entry per device");
  for (double t : c.budget.t1) require_config(t > 0.0, "budget.t1 must be positive");
  require_config(c.budget.t2 > 0.0, "budget.t2 must be positive");
  require_config(c.calibration.surrogate_draws >= 1000 && c.calibration.snr_draws >= 1000,
                 "calibration draws must be >= 1000");
}

// ---------------------------------------------------------------------------
// JSON (de)serialization. Unknown keys are rejected.

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return it.key() == a; });
    if (!known) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void read_auto(const json& j, const char* key, std::optional<double>& out,
                      const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (v.is_string() && v.get<std::string>() == "auto") {
    out.reset();
  } else if (v.is_number()) {
    out = v.get<double>();
  } else {
    throw ConfigError(where + "." + key + ": expected a number or \"auto\"");
  }
}

inline void read_opt_size(const json& j, const char* key, std::optional<std::size_t>& out,
                          const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (v.is_null()) {
    out.reset();
  } else if (v.is_number_unsigned()) {
    out = v.get<std::size_t>();
  } else {
    throw ConfigError(where + "." + key + ": expected a non-negative integer or null");
  }
}

inline json auto_or(const std::optional<double>& v) { return v ? json(*v) : json("auto"); }

inline json opt_size(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  using nlohmann::ordered_json;
  ordered_json j;
  ordered_json sys;
  sys["server_capacity"] = c.system.server_capacity;
  sys["horizon"] = c.system.horizon;
  sys["slot_duration"] = c.system.slot_duration;
  sys["bandwidth"] = c.system.bandwidth;
  sys["weight_t2"] = c.system.weight_t2;
  sys["snr_feasibility"] = c.system.snr_feasibility;
  sys["snr_search_max"] = c.system.snr_search_max;
  sys["devices"] = ordered_json::array();
  for (const DeviceSpec& d : c.system.devices) {
    ordered_json dj;
    dj["feature_dims"] = d.feature_dims;
    dj["bits_per_dim"] = d.bits_per_dim;
    dj["ratios"] = d.ratios;
    dj["max_bid"] = d.max_bid;
    dj["initial_budget"] = d.initial_budget;
    dj["class_count"] = d.class_count;
    dj["mean_snr"] = d.mean_snr ? ordered_json(*d.mean_snr) : ordered_json("auto");
    dj["weight_t1"] = d.weight_t1;
    const SurrogateSpec& s = d.surrogate;
    ordered_json sj;
    sj["local_accuracy"] = s.local_accuracy;
    sj["edge_accuracy"] = s.edge_accuracy;
    sj["acc_floor_ratio"] = s.acc_floor_ratio;
    sj["ssim_at_full"] = s.ssim_at_full;
    sj["ssim_exponent"] = s.ssim_exponent ? ordered_json(*s.ssim_exponent) : ordered_json("auto");
    sj["ssim_anchor"] = s.ssim_anchor;
    sj["difficulty_alpha"] = s.difficulty_alpha;
    sj["difficulty_beta"] = s.difficulty_beta;
    sj["entropy_noise_std"] = s.entropy_noise_std;
    sj["easy_confidence"] = s.easy_confidence;
    sj["min_confidence"] = s.min_confidence;
    sj["max_confidence"] = s.max_confidence;
    dj["surrogate"] = sj;
    sys["devices"].push_back(dj);
  }
  j["system"] = sys;

  const TrainConfig& t = c.train;
  ordered_json tj;
  tj["episodes"] = t.episodes;
  tj["exploration_variance"] = t.exploration_variance;
  tj["gumbel_temperature"] = t.gumbel_temperature;
  tj["gumbel_temperature_final"] = t.gumbel_temperature_final;
  tj["tau_critic"] = t.tau_critic;
  tj["tau_actor"] = t.tau_actor;
  tj["critic_lr"] = t.critic_lr;
  tj["actor_lr"] = t.actor_lr;
  tj["batch_episodes"] = t.batch_episodes;
  tj["buffer_capacity"] = t.buffer_capacity;
  tj["updates_per_episode"] = t.updates_per_episode;
  tj["hidden"] = t.hidden;
  tj["bid_margin"] = t.bid_margin;
  tj["mc_literal"] = t.mc_literal;
  j["train"] = tj;

  const DqnConfig& q = c.dqn;
  ordered_json qj;
  qj["episodes"] = q.episodes;
  qj["epsilon_start"] = q.epsilon_start;
  qj["epsilon_end"] = q.epsilon_end;
  qj["epsilon_decay_episodes"] = q.epsilon_decay_episodes;
  qj["learning_rate"] = q.learning_rate;
  qj["target_rate"] = q.target_rate;
  qj["replay_capacity"] = q.replay_capacity;
  qj["batch_size"] = q.batch_size;
  qj["updates_per_step"] = q.updates_per_step;
  qj["discount"] = q.discount;
  qj["hidden"] = q.hidden;
  qj["max_joint_actions"] = q.max_joint_actions;
  j["dqn"] = qj;

  ordered_json sib;
  sib["target_ssim"] = c.sib.target_ssim;
  sib["bid"] = c.sib.bid ? ordered_json(*c.sib.bid) : ordered_json("auto");
  j["sib"] = sib;

  j["algorithm"] = to_string(c.algorithm);
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["eval_episodes"] = c.eval_episodes;

  ordered_json cal;
  cal["seed"] = c.calibration.seed;
  cal["surrogate_draws"] = c.calibration.surrogate_draws;
  cal["snr_draws"] = c.calibration.snr_draws;
  j["calibration"] = cal;

  ordered_json tr;
  tr["algorithms"] = ordered_json::array();
  for (Algorithm a : c.tradeoff.algorithms) tr["algorithms"].push_back(to_string(a));
  tr["weights"] = ordered_json::array();
  for (const WeightPair& w : c.tradeoff.weights) {
    ordered_json wj;
    wj["t1"] = w.t1;
    wj["t2"] = w.t2;
    tr["weights"].push_back(wj);
  }
  tr["episodes"] = c.tradeoff.episodes ? ordered_json(*c.tradeoff.episodes) : ordered_json(nullptr);
  tr["eval_episodes"] = c.tradeoff.eval_episodes;
  j["tradeoff_sweep"] = tr;

  ordered_json bs;
  bs["splits"] = c.budget.splits;
  bs["total_budget"] = c.budget.total_budget;
  bs["t1"] = c.budget.t1;
  bs["t2"] = c.budget.t2;
  bs["episodes"] = c.budget.episodes ? ordered_json(*c.budget.episodes) : ordered_json(nullptr);
  bs["eval_episodes"] = c.budget.eval_episodes;
  j["budget_sweep"] = bs;
  return j;
}

// Missing keys keep the defaults of default_experiment(); a present
// "system.devices" list replaces the default devices wholesale.
inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read;
  ExperimentConfig c = default_experiment();
  check_keys(j,
             {"system", "train", "dqn", "sib", "algorithm", "seeds", "output_dir", "eval_episodes",
              "calibration", "tradeoff_sweep", "budget_sweep"},
             "config");
  if (j.contains("system")) {
    const auto& s = j.at("system");
    const std::string w = "system";
    check_keys(s,
               {"server_capacity", "horizon", "slot_duration", "bandwidth", "weight_t2",
                "snr_feasibility", "snr_search_max", "devices"},
               w);
    read(s, "server_capacity", c.system.server_capacity, w);
    read(s, "horizon", c.system.horizon, w);
    read(s, "slot_duration", c.system.slot_duration, w);
    read(s, "bandwidth", c.system.bandwidth, w);
    read(s, "weight_t2", c.system.weight_t2, w);
    read(s, "snr_feasibility", c.system.snr_feasibility, w);
    read(s, "snr_search_max", c.system.snr_search_max, w);
    if (s.contains("devices")) {
      if (!s.at("devices").is_array()) throw ConfigError("system.devices: expected an array");
      c.system.devices.clear();
      for (std::size_t k = 0; k < s.at("devices").size(); ++k) {
        const auto& dj = s.at("devices")[k];
        const std::string dw = "system.devices[" + std::to_string(k) + "]";
        check_keys(dj,
                   {"feature_dims", "bits_per_dim", "ratios", "max_bid", "initial_budget",
                    "class_count", "mean_snr", "weight_t1", "surrogate"},
                   dw);
        DeviceSpec d;
        read(dj, "feature_dims", d.feature_dims, dw);
        read(dj, "bits_per_dim", d.bits_per_dim, dw);
        read(dj, "ratios", d.ratios, dw);
        read(dj, "max_bid", d.max_bid, dw);
        read(dj, "initial_budget", d.initial_budget, dw);
        read(dj, "class_count", d.class_count, dw);
        detail::read_auto(dj, "mean_snr", d.mean_snr, dw);
        read(dj, "weight_t1", d.weight_t1, dw);
        if (dj.contains("surrogate")) {
          const auto& sj = dj.at("surrogate");
          const std::string sw = dw + ".surrogate";
          check_keys(sj,
                     {"local_accuracy", "edge_accuracy", "acc_floor_ratio", "ssim_at_full",
                      "ssim_exponent", "ssim_anchor", "difficulty_alpha", "difficulty_beta",
                      "entropy_noise_std", "easy_confidence", "min_confidence", "max_confidence"},
                     sw);
          SurrogateSpec& sp = d.surrogate;
          read(sj, "local_accuracy", sp.local_accuracy, sw);
          read(sj, "edge_accuracy", sp.edge_accuracy, sw);
          read(sj, "acc_floor_ratio", sp.acc_floor_ratio, sw);
          read(sj, "ssim_at_full", sp.ssim_at_full, sw);
          detail::read_auto(sj, "ssim_exponent", sp.ssim_exponent, sw);
          read(sj, "ssim_anchor", sp.ssim_anchor, sw);
          read(sj, "difficulty_alpha", sp.difficulty_alpha, sw);
          read(sj, "difficulty_beta", sp.difficulty_beta, sw);
          read(sj, "entropy_noise_std", sp.entropy_noise_std, sw);
          read(sj, "easy_confidence", sp.easy_confidence, sw);
          read(sj, "min_confidence", sp.min_confidence, sw);
          read(sj, "max_confidence", sp.max_confidence, sw);
        }
        c.system.devices.push_back(d);
      }
    }
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    const std::string w = "train";
    check_keys(t,
               {"episodes", "exploration_variance", "gumbel_temperature",
                "gumbel_temperature_final", "tau_critic", "tau_actor", "critic_lr", "actor_lr",
                "batch_episodes", "buffer_capacity", "updates_per_episode", "hidden", "bid_margin",
                "mc_literal"},
               w);
    read(t, "episodes", c.train.episodes, w);
    read(t, "exploration_variance", c.train.exploration_variance, w);
    read(t, "gumbel_temperature", c.train.gumbel_temperature, w);
    read(t, "gumbel_temperature_final", c.train.gumbel_temperature_final, w);
    read(t, "tau_critic", c.train.tau_critic, w);
    read(t, "tau_actor", c.train.tau_actor, w);
    read(t, "critic_lr", c.train.critic_lr, w);
    read(t, "actor_lr", c.train.actor_lr, w);
    read(t, "batch_episodes", c.train.batch_episodes, w);
    read(t, "buffer_capacity", c.train.buffer_capacity, w);
    read(t, "updates_per_episode", c.train.updates_per_episode, w);
    read(t, "hidden", c.train.hidden, w);
    read(t, "bid_margin", c.train.bid_margin, w);
    read(t, "mc_literal", c.train.mc_literal, w);
  }
  if (j.contains("dqn")) {
    const auto& q = j.at("dqn");
    const std::string w = "dqn";
    check_keys(q,
               {"episodes", "epsilon_start", "epsilon_end", "epsilon_decay_episodes",
                "learning_rate", "target_rate", "replay_capacity", "batch_size",
                "updates_per_step", "discount", "hidden", "max_joint_actions"},
               w);
    read(q, "episodes", c.dqn.episodes, w);
    read(q, "epsilon_start", c.dqn.epsilon_start, w);
    read(q, "epsilon_end", c.dqn.epsilon_end, w);
    read(q, "epsilon_decay_episodes", c.dqn.epsilon_decay_episodes, w);
    read(q, "learning_rate", c.dqn.learning_rate, w);
    read(q, "target_rate", c.dqn.target_rate, w);
    read(q, "replay_capacity", c.dqn.replay_capacity, w);
    read(q, "batch_size", c.dqn.batch_size, w);
    read(q, "updates_per_step", c.dqn.updates_per_step, w);
    read(q, "discount", c.dqn.discount, w);
    read(q, "hidden", c.dqn.hidden, w);
    read(q, "max_joint_actions", c.dqn.max_joint_actions, w);
  }
  if (j.contains("sib")) {
    const auto& s = j.at("sib");
    check_keys(s, {"target_ssim", "bid"}, "sib");
    read(s, "target_ssim", c.sib.target_ssim, "sib");
    detail::read_auto(s, "bid", c.sib.bid, "sib");
  }
  if (j.contains("algorithm")) {
    std::string a;
    read(j, "algorithm", a, "config");
    c.algorithm = algorithm_from_string(a);
  }
  read(j, "seeds", c.seeds, "config");
  read(j, "output_dir", c.output_dir, "config");
  read(j, "eval_episodes", c.eval_episodes, "config");
  if (j.contains("calibration")) {
    const auto& cal = j.at("calibration");
    check_keys(cal, {"seed", "surrogate_draws", "snr_draws"}, "calibration");
    read(cal, "seed", c.calibration.seed, "calibration");
    read(cal, "surrogate_draws", c.calibration.surrogate_draws, "calibration");
    read(cal, "snr_draws", c.calibration.snr_draws, "calibration");
  }
  if (j.contains("tradeoff_sweep")) {
    const auto& tr = j.at("tradeoff_sweep");
    const std::string w = "tradeoff_sweep";
    check_keys(tr, {"algorithms", "weights", "episodes", "eval_episodes"}, w);
    if (tr.contains("algorithms")) {
      std::vector<std::string> names;
      read(tr, "algorithms", names, w);
      c.tradeoff.algorithms.clear();
      for (const auto& n : names) c.tradeoff.algorithms.push_back(algorithm_from_string(n));
    }
    if (tr.contains("weights")) {
      if (!tr.at("weights").is_array()) throw ConfigError(w + ".weights: expected an array");
      c.tradeoff.weights.clear();
      for (const auto& wj : tr.at("weights")) {
        check_keys(wj, {"t1", "t2"}, w + ".weights[]");
        WeightPair p;
        read(wj, "t1", p.t1, w + ".weights[]");
        read(wj, "t2", p.t2, w + ".weights[]");
        c.tradeoff.weights.push_back(p);
      }
    }
    detail::read_opt_size(tr, "episodes", c.tradeoff.episodes, w);
    read(tr, "eval_episodes", c.tradeoff.eval_episodes, w);
  }
  if (j.contains("budget_sweep")) {
    const auto& bs = j.at("budget_sweep");
    const std::string w = "budget_sweep";
    check_keys(bs, {"splits", "total_budget", "t1", "t2", "episodes", "eval_episodes"}, w);
    read(bs, "splits", c.budget.splits, w);
    read(bs, "total_budget", c.budget.total_budget, w);
    read(bs, "t1", c.budget.t1, w);
    read(bs, "t2", c.budget.t2, w);
    detail::read_opt_size(bs, "episodes", c.budget.episodes, w);
    read(bs, "eval_episodes", c.budget.eval_episodes, w);
  }
  validate(c);
  return c;
}

inline ExperimentConfig parse_experiment(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return experiment_from_json(j);
}

inline std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open '" + p.string() + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_text_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + p.string() + "' for writing");
  out << text;
  out.close();
  if (!out) throw Error("failed writing '" + p.string() + "'");
}

inline ExperimentConfig load_experiment(const std::filesystem::path& p) {
  return parse_experiment(read_text_file(p));
}

inline std::string serialize_experiment(const ExperimentConfig& c) {
  return to_json(c).dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// SNR feasibility calibration.

// Finds the mean SNR for which the uncompressed payload fits the slot's
// capacity with probability `target` under Rayleigh fading. The feasibility
// probability is estimated on a fixed set of `draws` fading samples and
// solved by bisection on log SNR over [1e-9, snr_max].
inline double calibrate_snr(const MdConfig& md, const SystemConfig& sys, double target,
                            std::uint64_t seed, std::size_t draws = 100000,
                            double snr_max = 1e9) {
  detail::require_config(target > 0.0 && target < 1.0,
                         "calibrate_snr: target feasibility must lie in (0,1)");
  detail::require(draws > 0, "calibrate_snr: draws must be positive");
  RandomStream rng = make_stream(seed, {kCalibrationStream, 3, md.index});
  std::vector<double> gains(draws);
  for (double& g : gains) g = unit_exponential(rng);
  const double bits = payload_bits(1.0, md.feature_dims, md.bits_per_dim);
  // Feasible iff delta*B*log2(1 + snr*g) >= bits iff snr*g >= 2^(bits/(delta*B)) - 1.
  const double needed = std::expm1(bits / (sys.slot_duration * sys.bandwidth) * std::log(2.0));
  auto feasibility = [&](double snr) {
    std::size_t hits = 0;
    for (double g : gains) hits += snr * g >= needed ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(draws);
  };
  double lo = std::log(1e-9), hi = std::log(snr_max);
  if (feasibility(std::exp(hi)) < target) {
    throw CalibrationError("calibrate_snr: feasibility " + std::to_string(target) +
                           " is unattainable for device " + std::to_string(md.index + 1) +
                           " with mean SNR <= " + std::to_string(snr_max));
  }
  if (feasibility(std::exp(lo)) >= target) return std::exp(lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (feasibility(std::exp(mid)) >= target ? hi : lo) = mid;
  }
  const double snr = std::exp(hi);
  if (std::abs(feasibility(snr) - target) > 0.01) {
    throw CalibrationError("calibrate_snr: could not reach feasibility " + std::to_string(target) +
                           " within 0.01 for device " + std::to_string(md.index + 1));
  }
  return snr;
}

// ---------------------------------------------------------------------------
// Resolved system.

struct PreparedSystem {
  SystemConfig system;
  std::vector<SurrogateCalibration> calibrations;
  std::vector<double> feasibility_at_full;  // P[omega = 1 deliverable] at the chosen SNR
};

inline PreparedSystem prepare_system(const ExperimentConfig& cfg) {
  validate(cfg);
  PreparedSystem out;
  SystemConfig& sys = out.system;
  sys.server_capacity = cfg.system.server_capacity;
  sys.horizon = cfg.system.horizon;
  sys.slot_duration = cfg.system.slot_duration;
  sys.bandwidth = cfg.system.bandwidth;
  sys.weight_t2 = cfg.system.weight_t2;
  for (std::size_t k = 0; k < cfg.system.devices.size(); ++k) {
    const DeviceSpec& d = cfg.system.devices[k];
    MdConfig md;
    md.index = k;
    md.feature_dims = d.feature_dims;
    md.bits_per_dim = d.bits_per_dim;
    md.ratios = d.ratios;
    md.max_bid = d.max_bid;
    md.initial_budget = d.initial_budget;
    md.class_count = d.class_count;
    md.weight_t1 = d.weight_t1;
    sys.devices.push_back(md);
  }
  validate(sys);
  for (std::size_t k = 0; k < sys.devices.size(); ++k) {
    const DeviceSpec& d = cfg.system.devices[k];
    MdConfig& md = sys.devices[k];
    SurrogateParams p;
    p.acc_floor_ratio = d.surrogate.acc_floor_ratio;
    p.ssim_at_full = d.surrogate.ssim_at_full;
    p.ssim_exponent = d.surrogate.ssim_exponent.value_or(1.0);
    p.difficulty = {d.surrogate.difficulty_alpha, d.surrogate.difficulty_beta};
    p.entropy_noise_std = d.surrogate.entropy_noise_std;
    p.easy_confidence = d.surrogate.easy_confidence;
    p.min_confidence = d.surrogate.min_confidence;
    p.max_confidence = d.surrogate.max_confidence;
    CalibrationTargets targets;
    targets.local_mean_acc = d.surrogate.local_accuracy;
    targets.edge_mean_acc_at_full = d.surrogate.edge_accuracy;
    targets.ssim_anchor = d.surrogate.ssim_exponent ? 2.0 : d.surrogate.ssim_anchor;
    targets.anchor_ratio = md.ratios.empty() ? 0.5 : md.min_ratio();
    if (!d.surrogate.ssim_exponent && !(targets.anchor_ratio < 1.0)) {
      targets.ssim_anchor = 2.0;  // single uncompressed ratio: nothing to anchor
    }
    SurrogateCalibration cal = calibrate(p, targets, md.ratios, cfg.calibration.seed + k,
                                         cfg.calibration.surrogate_draws);
    md.surrogate = cal.params;
    out.calibrations.push_back(cal);
  }
  for (std::size_t k = 0; k < sys.devices.size(); ++k) {
    MdConfig& md = sys.devices[k];
    const DeviceSpec& d = cfg.system.devices[k];
    md.mean_snr = d.mean_snr ? *d.mean_snr
                             : calibrate_snr(md, sys, cfg.system.snr_feasibility,
                                             cfg.calibration.seed, cfg.calibration.snr_draws,
                                             cfg.system.snr_search_max);
    const double needed =
        std::expm1(md.uncompressed_bits() / (sys.slot_duration * sys.bandwidth) * std::log(2.0));
    out.feasibility_at_full.push_back(std::exp(-needed / md.mean_snr));
  }
  validate(sys);
  return out;
}

inline nlohmann::ordered_json calibration_report(const PreparedSystem& ps) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < ps.system.device_count(); ++k) {
    const MdConfig& md = ps.system.devices[k];
    const SurrogateCalibration& c = ps.calibrations[k];
    nlohmann::ordered_json d;
    d["device"] = k + 1;
    d["local_accuracy"] = c.local_accuracy;
    d["edge_accuracy_at_full"] = c.edge_accuracy;
    d["local_residual"] = c.local_residual;
    d["edge_residual"] = c.edge_residual;
    d["local_curve"] = {{"intercept", md.surrogate.local_curve.intercept},
                        {"slope", md.surrogate.local_curve.slope}};
    d["edge_curve"] = {{"intercept", md.surrogate.edge_curve.intercept},
                       {"slope", md.surrogate.edge_curve.slope}};
    d["ssim_exponent"] = md.surrogate.ssim_exponent;
    nlohmann::ordered_json ssim = nlohmann::ordered_json::array();
    for (double r : md.ratios) ssim.push_back({{"ratio", r}, {"ssim", ssim_surrogate(r, md.surrogate)}});
    d["ssim_by_ratio"] = ssim;
    d["mean_snr"] = md.mean_snr;
    d["feasibility_at_full"] = ps.feasibility_at_full[k];
    j.push_back(d);
  }
  return j;
}

// Applies per-device t1 and a shared t2.
inline SystemConfig with_weights(SystemConfig sys, const std::vector<double>& t1, double t2) {
  detail::require(t1.size() == sys.device_count(), "with_weights: need one t1 per device");
  for (std::size_t k = 0; k < t1.size(); ++k) sys.devices[k].weight_t1 = t1[k];
  sys.weight_t2 = t2;
  return sys;
}

// ---------------------------------------------------------------------------
// Statistics.

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation over sqrt(n); 0 for fewer than two values.
inline double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// Population standard deviation.
inline double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = r;
    i = j + 1;
  }
  return rank;
}

// Spearman rank correlation with average ranks for ties; 0 when either side
// is constant.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  detail::require(x.size() == y.size(), "spearman: length mismatch");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Shortest round-trip decimal form; identical input gives identical text.
inline std::string format_number(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

// ---------------------------------------------------------------------------
// Policies.

struct TrainedPolicy {
  Algorithm algorithm = Algorithm::kMaddpg;
  std::vector<DeviceAgent> agents;  // actor-critic family
  std::optional<MlpNet> q;          // DQN
  SibConfig sib;
};

struct TrainOutcome {
  TrainedPolicy policy;
  std::vector<EpisodeMetrics> trace;
};

using EpisodeCallback = std::function<void(std::size_t, const EpisodeMetrics&)>;

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  RandomStream r = make_stream(seed, {tag});
  return r();
}

inline TrainOutcome train_algorithm(const SystemConfig& sys, const ExperimentConfig& cfg,
                                    Algorithm algo, std::uint64_t seed, std::size_t episodes,
                                    const EpisodeCallback& on_episode = {}) {
  TrainOutcome out;
  out.policy.algorithm = algo;
  out.policy.sib = cfg.sib;
  if (is_actor_critic(algo)) {
    TrainConfig tc = train_config_for(cfg.train, algo);
    tc.episodes = episodes;
    MaddpgTrainer trainer(sys, tc, seed);
    out.trace = trainer.train(on_episode);
    out.policy.agents = std::move(trainer.agents());
  } else if (algo == Algorithm::kDqn) {
    DqnConfig dc = cfg.dqn;
    dc.episodes = episodes;
    EdgeDqnTask task(sys, seed, dc.max_joint_actions);
    RandomStream init = make_stream(seed, {kInitStream});
    RandomStream rng = make_stream(seed, {kPolicyStream});
    DqnLearner learner(task.state_dim(), task.action_count(), dc, init);
    dqn_train(task, learner, rng, [&](std::size_t ep) {
      out.trace.push_back(task.episode_metrics());
      if (on_episode) on_episode(ep + 1, out.trace.back());
    });
    out.policy.q = learner.q();
  } else {
    Environment env(sys, seed);
    for (std::size_t ep = 0; ep < episodes; ++ep) {
      EpisodeMetrics m;
      play_sib_episode(env, cfg.sib, &m);
      out.trace.push_back(m);
      if (on_episode) on_episode(ep + 1, m);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct DeviceEval {
  double accuracy_mean = 0.0;
  double accuracy_stderr = 0.0;
  double reward_mean = 0.0;
  double reward_stderr = 0.0;
  double ssim_mean = 0.0;  // over served slots
  double ssim_stderr = 0.0;
  double ssim_slot_std = 0.0;
  double served_fraction = 0.0;
  double bids_spent_mean = 0.0;
  std::size_t served_slots = 0;
};

struct EvalSummary {
  Algorithm algorithm = Algorithm::kMaddpg;
  std::size_t episodes = 0;
  std::vector<DeviceEval> devices;
};

// Greedy evaluation on fresh episodes. The evaluation world depends only on
// `seed`, so every algorithm sees the same channels and data.
inline EvalSummary evaluate_policy(const SystemConfig& sys, const TrainedPolicy& policy,
                                   std::size_t episodes, std::uint64_t seed) {
  EvalSummary s;
  s.algorithm = policy.algorithm;
  s.episodes = episodes;
  if (episodes == 0) return s;
  const std::size_t K = sys.device_count();
  const std::uint64_t eval_seed = derive_seed(seed, kEvalStream);
  std::vector<std::vector<double>> acc(K), rew(K), bids(K), leak(K);
  std::vector<std::size_t> served(K, 0);
  std::size_t slots = 0;
  auto record_episode = [&](const EpisodeMetrics& m) {
    for (std::size_t k = 0; k < K; ++k) {
      acc[k].push_back(m.accuracy[k]);
      rew[k].push_back(m.reward[k]);
      bids[k].push_back(m.bids_spent[k]);
    }
    slots += m.slots.empty() ? 0 : m.slots[0];
  };
  auto record_slot = [&](const StepResult& r) {
    for (std::size_t k = 0; k < K; ++k) {
      if (r.devices[k].served) {
        leak[k].push_back(r.devices[k].privacy_leakage);
        ++served[k];
      }
    }
  };

  if (is_actor_critic(policy.algorithm)) {
    detail::require(policy.agents.size() == K, "evaluate: agent count does not match the system");
    Environment env(sys, eval_seed);
    auto act = [&](std::size_t k, const Observation& obs) {
      return act_greedy(obs, policy.agents[k].actor, policy.agents[k].spec, obs.budget);
    };
    for (std::size_t e = 0; e < episodes; ++e) {
      EpisodeMetrics m;
      play_episode(env, act, Admission::kBidding, &m,
                   [&](const StepResult& r, std::span<const Action>) { record_slot(r); });
      record_episode(m);
    }
  } else if (policy.algorithm == Algorithm::kDqn) {
    detail::require(policy.q.has_value(), "evaluate: DQN policy has no network");
    EdgeDqnTask task(sys, eval_seed);
    detail::require(policy.q->input_size() == task.state_dim() &&
                        policy.q->output_size() == task.action_count(),
                    "evaluate: DQN network does not match the system");
    RandomStream unused = make_stream(eval_seed, {kPolicyStream});
    for (std::size_t e = 0; e < episodes; ++e) {
      Vector x = task.reset();
      while (!task.env().done()) {
        const StepResult r = task.execute(dqn_policy_step(x, *policy.q, 0.0, unused));
        record_slot(r);
        x = task.features(r.next);
      }
      record_episode(task.episode_metrics());
    }
  } else {
    Environment env(sys, eval_seed);
    std::vector<SibDecision> decisions;
    for (const auto& md : sys.devices) decisions.push_back(sib_policy(md, sys.horizon, policy.sib));
    auto act = [&](std::size_t k, const Observation& obs) {
      return Action{clip_bid(decisions[k].bid, sys.devices[k].max_bid, obs.budget),
                    decisions[k].ratio_index};
    };
    for (std::size_t e = 0; e < episodes; ++e) {
      EpisodeMetrics m;
      play_episode(env, act, Admission::kChannelBlind, &m,
                   [&](const StepResult& r, std::span<const Action>) { record_slot(r); });
      record_episode(m);
    }
  }

  for (std::size_t k = 0; k < K; ++k) {
    DeviceEval d;
    d.accuracy_mean = mean_of(acc[k]);
    d.accuracy_stderr = stderr_of(acc[k]);
    d.reward_mean = mean_of(rew[k]);
    d.reward_stderr = stderr_of(rew[k]);
    d.ssim_mean = mean_of(leak[k]);
    d.ssim_stderr = stderr_of(leak[k]);
    d.ssim_slot_std = population_std(leak[k]);
    d.served_slots = served[k];
    d.served_fraction = slots ? static_cast<double>(served[k]) / static_cast<double>(slots) : 0.0;
    d.bids_spent_mean = mean_of(bids[k]);
    s.devices.push_back(d);
  }
  return s;
}

inline nlohmann::ordered_json to_json(const EvalSummary& s) {
  nlohmann::ordered_json j;
  j["algorithm"] = to_string(s.algorithm);
  j["episodes"] = s.episodes;
  if (s.episodes == 0) {
    j["status"] = "no data";
    j["devices"] = nlohmann::ordered_json::array();
    return j;
  }
  j["status"] = "ok";
  j["devices"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < s.devices.size(); ++k) {
    const DeviceEval& d = s.devices[k];
    nlohmann::ordered_json dj;
    dj["device"] = k + 1;
    dj["accuracy"] = {{"mean", d.accuracy_mean}, {"stderr", d.accuracy_stderr}};
    dj["reward"] = {{"mean", d.reward_mean}, {"stderr", d.reward_stderr}};
    if (d.served_slots > 0) {
      dj["ssim"] = {{"mean", d.ssim_mean}, {"stderr", d.ssim_stderr}, {"slot_std", d.ssim_slot_std}};
    } else {
      dj["ssim"] = nullptr;
    }
    dj["served_slots"] = d.served_slots;
    dj["served_fraction"] = d.served_fraction;
    dj["bids_spent"] = d.bids_spent_mean;
    j["devices"].push_back(dj);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Persistence.

inline std::string metrics_csv_header(std::size_t K) {
  std::string h = "episode";
  for (std::size_t k = 1; k <= K; ++k) {
    const std::string s = std::to_string(k);
    h += ",reward_" + s + ",accuracy_" + s + ",ssim_" + s + ",bids_spent_" + s + ",served_" + s;
  }
  return h + "\n";
}

inline std::string metrics_csv_row(std::size_t episode, const EpisodeMetrics& m) {
  std::string r = std::to_string(episode);
  for (std::size_t k = 0; k < m.reward.size(); ++k) {
    r += "," + format_number(m.reward[k]) + "," + format_number(m.accuracy[k]) + "," +
         format_number(m.ssim[k]) + "," + format_number(m.bids_spent[k]) + "," +
         std::to_string(m.served[k]);
  }
  return r + "\n";
}

inline std::string metrics_csv(const std::vector<EpisodeMetrics>& trace, std::size_t K) {
  std::string out = metrics_csv_header(K);
  for (std::size_t e = 0; e < trace.size(); ++e) out += metrics_csv_row(e + 1, trace[e]);
  return out;
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw Error("cannot create output directory '" + dir.string() + "'" +
                (ec ? ": " + ec.message() : std::string()));
  }
}

inline void write_json(const std::filesystem::path& p, const nlohmann::ordered_json& j) {
  write_text_file(p, j.dump(2) + "\n");
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  write_text_file(p, j.dump(2) + "\n");
}

inline nlohmann::json actor_to_json(const ActorNet& a) {
  return {{"bid", to_json(a.bid)}, {"ratio", to_json(a.ratio)}};
}

inline ActorNet actor_from_json(const nlohmann::json& j) {
  try {
    return {net_from_json(j.at("bid")), net_from_json(j.at("ratio"))};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed actor checkpoint: ") + e.what());
  }
}

// Writes checkpoints and returns the file names written.
inline std::vector<std::string> save_policy(const TrainedPolicy& p, const std::filesystem::path& dir) {
  std::vector<std::string> files;
  if (is_actor_critic(p.algorithm)) {
    for (std::size_t k = 0; k < p.agents.size(); ++k) {
      const std::string s = std::to_string(k + 1);
      const DeviceAgent& a = p.agents[k];
      const std::vector<std::pair<std::string, nlohmann::json>> items{
          {"actor_" + s + ".json", actor_to_json(a.actor)},
          {"critic_" + s + ".json", to_json(a.critic)},
          {"target_actor_" + s + ".json", actor_to_json(a.target_actor)},
          {"target_critic_" + s + ".json", to_json(a.target_critic)}};
      for (const auto& [name, j] : items) {
        write_json(dir / name, j);
        files.push_back(name);
      }
    }
  } else if (p.algorithm == Algorithm::kDqn) {
    write_json(dir / "dqn.json", to_json(*p.q));
    files.push_back("dqn.json");
  }
  return files;
}

// Rebuilds a policy for `sys` from a checkpoint directory written by run_train.
inline TrainedPolicy load_policy(const SystemConfig& sys, const ExperimentConfig& cfg,
                                 Algorithm algo, const std::filesystem::path& dir) {
  TrainedPolicy p;
  p.algorithm = algo;
  p.sib = cfg.sib;
  auto load = [&](const std::string& name) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) throw Error("missing checkpoint file '" + path.string() + "'");
    try {
      return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
    }
  };
  if (is_actor_critic(algo)) {
    const TrainConfig tc = train_config_for(cfg.train, algo);
    RandomStream scratch = make_stream(0, {kInitStream});
    p.agents = make_agents(sys, tc, scratch);
    for (std::size_t k = 0; k < p.agents.size(); ++k) {
      const std::string s = std::to_string(k + 1);
      DeviceAgent& a = p.agents[k];
      auto check = [&](const MlpNet& want, const MlpNet& got, const std::string& what) {
        if (!want.same_architecture(got)) {
          throw ConfigError("checkpoint " + what + " for device " + s +
                            " does not match the configured architecture");
        }
        return got;
      };
      const ActorNet actor = actor_from_json(load("actor_" + s + ".json"));
      a.actor.bid = check(a.actor.bid, actor.bid, "actor bid head");
      a.actor.ratio = check(a.actor.ratio, actor.ratio, "actor ratio head");
      a.critic = check(a.critic, net_from_json(load("critic_" + s + ".json")), "critic");
      const ActorNet target = actor_from_json(load("target_actor_" + s + ".json"));
      a.target_actor.bid = check(a.target_actor.bid, target.bid, "target actor bid head");
      a.target_actor.ratio = check(a.target_actor.ratio, target.ratio, "target actor ratio head");
      a.target_critic =
          check(a.target_critic, net_from_json(load("target_critic_" + s + ".json")), "target critic");
    }
  } else if (algo == Algorithm::kDqn) {
    MlpNet q = net_from_json(load("dqn.json"));
    const auto actions = enumerate_joint_actions(sys, cfg.dqn.max_joint_actions);
    if (q.input_size() != 1 + 2 * sys.device_count() || q.output_size() != actions.size()) {
      throw ConfigError("DQN checkpoint does not match the configured system");
    }
    p.q = std::move(q);
  }
  return p;
}

struct RunArtifacts {
  std::filesystem::path directory;
  std::vector<std::string> checkpoints;
  std::size_t metrics_rows = 0;
  TrainedPolicy policy;
};

// Trains one algorithm for one seed and writes metrics.csv, checkpoints,
// config.json, calibration.json and manifest.json into `out`.
inline RunArtifacts run_train(const ExperimentConfig& cfg, Algorithm algo, std::uint64_t seed,
                              const std::filesystem::path& out, std::ostream* log = nullptr) {
  ExperimentConfig run_cfg = cfg;
  run_cfg.algorithm = algo;
  run_cfg.seeds = {seed};
  validate(run_cfg);
  ensure_directory(out);
  const PreparedSystem ps = prepare_system(run_cfg);
  const std::size_t K = ps.system.device_count();
  const std::size_t episodes = algo == Algorithm::kDqn ? cfg.dqn.episodes : cfg.train.episodes;
  const std::size_t every = std::max<std::size_t>(1, episodes / 10);
  TrainOutcome t = train_algorithm(ps.system, run_cfg, algo, seed, episodes,
                                   [&](std::size_t ep, const EpisodeMetrics& m) {
                                     if (log && (ep % every == 0 || ep == episodes)) {
                                       *log << to_string(algo) << " seed " << seed << " episode "
                                            << ep << "/" << episodes;
                                       for (std::size_t k = 0; k < K; ++k) {
                                         *log << " R" << k + 1 << "=" << m.reward[k];
                                       }
                                       *log << "\n";
                                     }
                                   });
  RunArtifacts a;
  a.directory = out;
  write_text_file(out / "metrics.csv", metrics_csv(t.trace, K));
  a.metrics_rows = t.trace.size();
  a.checkpoints = save_policy(t.policy, out);
  write_text_file(out / "config.json", serialize_experiment(run_cfg));
  write_json(out / "calibration.json", calibration_report(ps));
  nlohmann::ordered_json manifest;
  manifest["format"] = "edgebid-run";
  manifest["version"] = 1;
  manifest["algorithm"] = to_string(algo);
  manifest["seed"] = seed;
  manifest["episodes"] = t.trace.size();
  manifest["devices"] = K;
  manifest["budgets"] = is_actor_critic(algo) || algo == Algorithm::kSib ? "enforced" : "ignored";
  manifest["checkpoints"] = a.checkpoints;
  write_json(out / "manifest.json", manifest);
  a.policy = std::move(t.policy);
  return a;
}

struct RunManifest {
  Algorithm algorithm = Algorithm::kMaddpg;
  std::uint64_t seed = 0;
};

inline RunManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) throw Error("no manifest.json in '" + dir.string() + "'");
  try {
    const auto j = nlohmann::json::parse(read_text_file(path));
    if (j.at("format").get<std::string>() != "edgebid-run") throw ConfigError("not a run manifest");
    return {algorithm_from_string(j.at("algorithm").get<std::string>()),
            j.at("seed").get<std::uint64_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed manifest '" + path.string() + "': " + e.what());
  }
}

// Greedy evaluation of a saved run under `cfg`'s system.
inline EvalSummary run_eval(const ExperimentConfig& cfg, const std::filesystem::path& ckpt,
                            std::size_t episodes) {
  const RunManifest m = read_manifest(ckpt);
  const PreparedSystem ps = prepare_system(cfg);
  const TrainedPolicy p = load_policy(ps.system, cfg, m.algorithm, ckpt);
  return evaluate_policy(ps.system, p, episodes, m.seed);
}

// ---------------------------------------------------------------------------
// Sweeps.

struct SweepRow {
  Algorithm algorithm = Algorithm::kMaddpg;
  std::size_t point = 0;  // index into the sweep list
  std::uint64_t seed = 0;
  std::size_t device = 0;  // 0-based
  double t1 = 0.0;
  double t2 = 0.0;
  double budget = 0.0;
  double accuracy = 0.0;
  double ssim = 0.0;
  std::size_t served_slots = 0;
  double reward = 0.0;
};

struct SweepAggregate {
  Algorithm algorithm = Algorithm::kMaddpg;
  std::size_t point = 0;
  std::size_t device = 0;
  double t1 = 0.0;
  double t2 = 0.0;
  double budget = 0.0;
  double accuracy_mean = 0.0;
  double accuracy_stderr = 0.0;
  double ssim_mean = 0.0;
  double ssim_stderr = 0.0;
  double reward_mean = 0.0;
  std::size_t seeds = 0;
};

// Seed-averages rows that share (algorithm, point, device), in first-seen order.
inline std::vector<SweepAggregate> aggregate(const std::vector<SweepRow>& rows) {
  std::vector<SweepAggregate> out;
  std::vector<std::vector<const SweepRow*>> groups;
  for (const SweepRow& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SweepAggregate& a) {
      return a.algorithm == r.algorithm && a.point == r.point && a.device == r.device;
    });
    if (it == out.end()) {
      SweepAggregate a;
      a.algorithm = r.algorithm;
      a.point = r.point;
      a.device = r.device;
      a.t1 = r.t1;
      a.t2 = r.t2;
      a.budget = r.budget;
      out.push_back(a);
      groups.emplace_back();
      it = out.end() - 1;
    }
    groups[static_cast<std::size_t>(it - out.begin())].push_back(&r);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::vector<double> acc, ssim, rew;
    for (const SweepRow* r : groups[i]) {
      acc.push_back(r->accuracy);
      if (r->served_slots > 0) ssim.push_back(r->ssim);
      rew.push_back(r->reward);
    }
    out[i].accuracy_mean = mean_of(acc);
    out[i].accuracy_stderr = stderr_of(acc);
    out[i].ssim_mean = mean_of(ssim);
    out[i].ssim_stderr = stderr_of(ssim);
    out[i].reward_mean = mean_of(rew);
    out[i].seeds = groups[i].size();
  }
  return out;
}

inline std::string sweep_rows_csv(const std::vector<SweepRow>& rows) {
  std::string s = "algorithm,point,seed,device,t1,t2,budget,accuracy,ssim,served_slots,reward\n";
  for (const SweepRow& r : rows) {
    s += to_string(r.algorithm) + "," + std::to_string(r.point) + "," + std::to_string(r.seed) +
         "," + std::to_string(r.device + 1) + "," + format_number(r.t1) + "," +
         format_number(r.t2) + "," + format_number(r.budget) + "," + format_number(r.accuracy) +
         "," + format_number(r.ssim) + "," + std::to_string(r.served_slots) + "," +
         format_number(r.reward) + "\n";
  }
  return s;
}

inline std::string sweep_table_csv(const std::vector<SweepAggregate>& agg) {
  std::string s =
      "algorithm,point,device,t1,t2,budget,accuracy_mean,accuracy_stderr,ssim_mean,ssim_stderr,"
      "reward_mean,seeds\n";
  for (const SweepAggregate& a : agg) {
    s += to_string(a.algorithm) + "," + std::to_string(a.point) + "," +
         std::to_string(a.device + 1) + "," + format_number(a.t1) + "," + format_number(a.t2) +
         "," + format_number(a.budget) + "," + format_number(a.accuracy_mean) + "," +
         format_number(a.accuracy_stderr) + "," + format_number(a.ssim_mean) + "," +
         format_number(a.ssim_stderr) + "," + format_number(a.reward_mean) + "," +
         std::to_string(a.seeds) + "\n";
  }
  return s;
}

inline void append_eval_rows(std::vector<SweepRow>& rows, const EvalSummary& e, Algorithm algo,
                             std::size_t point, std::uint64_t seed, const SystemConfig& sys) {
  for (std::size_t k = 0; k < e.devices.size(); ++k) {
    SweepRow r;
    r.algorithm = algo;
    r.point = point;
    r.seed = seed;
    r.device = k;
    r.t1 = sys.devices[k].weight_t1;
    r.t2 = sys.weight_t2;
    r.budget = sys.devices[k].initial_budget;
    r.accuracy = e.devices[k].accuracy_mean;
    r.ssim = e.devices[k].ssim_mean;
    r.served_slots = e.devices[k].served_slots;
    r.reward = e.devices[k].reward_mean;
    rows.push_back(r);
  }
}

// Trains and evaluates every listed algorithm at every weight pair and seed.
// DQN always trains for dqn.episodes; SIB has nothing to train.
inline std::vector<SweepRow> run_tradeoff_sweep(const ExperimentConfig& cfg,
                                                const PreparedSystem& ps,
                                                std::ostream* log = nullptr) {
  detail::require_config(!cfg.tradeoff.weights.empty(), "tradeoff_sweep.weights must not be empty");
  detail::require_config(!cfg.tradeoff.algorithms.empty(),
                         "tradeoff_sweep.algorithms must not be empty");
  const std::size_t episodes = cfg.tradeoff.episodes.value_or(cfg.train.episodes);
  std::vector<SweepRow> rows;
  for (Algorithm algo : cfg.tradeoff.algorithms) {
    for (std::size_t p = 0; p < cfg.tradeoff.weights.size(); ++p) {
      const WeightPair& w = cfg.tradeoff.weights[p];
      const SystemConfig sys = with_weights(ps.system, w.t1, w.t2);
      for (std::uint64_t seed : cfg.seeds) {
        const std::size_t n = algo == Algorithm::kSib   ? 0
                              : algo == Algorithm::kDqn ? cfg.dqn.episodes
                                                        : episodes;
        const TrainOutcome t = train_algorithm(sys, cfg, algo, seed, n);
        const EvalSummary e = evaluate_policy(sys, t.policy, cfg.tradeoff.eval_episodes, seed);
        append_eval_rows(rows, e, algo, p, seed, sys);
        if (log) {
          *log << "tradeoff " << to_string(algo) << " point " << p << " seed " << seed;
          for (const auto& d : e.devices) *log << " acc=" << d.accuracy_mean << " ssim=" << d.ssim_mean;
          *log << "\n";
        }
      }
    }
  }
  return rows;
}

// Trains MADDPG at every budget split M1 = m, M2 = total - m.
inline std::vector<SweepRow> run_budget_sweep(const ExperimentConfig& cfg, const PreparedSystem& ps,
                                              std::ostream* log = nullptr) {
  detail::require_config(!cfg.budget.splits.empty(), "budget_sweep.splits must not be empty");
  detail::require_config(ps.system.device_count() == 2, "budget_sweep needs exactly two devices");
  const std::size_t episodes = cfg.budget.episodes.value_or(cfg.train.episodes);
  std::vector<SweepRow> rows;
  for (std::size_t p = 0; p < cfg.budget.splits.size(); ++p) {
    const double m = cfg.budget.splits[p];
    SystemConfig sys = with_weights(ps.system, cfg.budget.t1, cfg.budget.t2);
    sys.devices[0].initial_budget = m;
    sys.devices[1].initial_budget = cfg.budget.total_budget - m;
    for (std::uint64_t seed : cfg.seeds) {
      const TrainOutcome t = train_algorithm(sys, cfg, Algorithm::kMaddpg, seed, episodes);
      const EvalSummary e = evaluate_policy(sys, t.policy, cfg.budget.eval_episodes, seed);
      append_eval_rows(rows, e, Algorithm::kMaddpg, p, seed, sys);
      if (log) {
        *log << "budget m=" << m << " seed " << seed;
        for (const auto& d : e.devices) *log << " acc=" << d.accuracy_mean;
        *log << "\n";
      }
    }
  }
  return rows;
}

}  // namespace edgebid
