// Copyright 2026 The edgebid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Stochastic stand-ins for the split classifiers, the inversion attacker and
// the image data. Each datum carries a difficulty u in [0, 1]; local and edge
// confidences are affine, nonincreasing functions of u; compression scales the
// edge confidence by a piecewise-linear penalty; leakage follows a power law in
// the kept-dimension ratio.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "edgebid/error.hpp"
#include "edgebid/random.hpp"

namespace edgebid {

struct BetaShape {
  double alpha = 1.0;
  double beta = 1.0;
};

// q(u) = clamp(intercept - slope * u, min_confidence, max_confidence).
struct ConfidenceCurve {
  double intercept = 0.99;
  double slope = 0.0;
};

struct SurrogateParams {
  double local_mean_acc = 0.73;
  double edge_mean_acc_at_full = 0.90;
  double acc_floor_ratio = 0.95;  // edge confidence multiplier at the smallest ratio
  double ssim_at_full = 0.6;
  double ssim_exponent = 1.0;
  BetaShape difficulty{};
  double entropy_noise_std = 0.05;
  double easy_confidence = 0.99;  // q(0) before clamping, shared by both curves
  double min_confidence = 0.01;
  double max_confidence = 0.99;
  // Fitted by calibrate().
  ConfidenceCurve local_curve{0.99, 0.52};
  ConfidenceCurve edge_curve{0.99, 0.18};
};

struct Datum {
  double difficulty = 0.0;
  double entropy = 0.0;         // nats, in [0, ln C]
  double correctness_seed = 0.5;  // shared by local and edge evaluation
};

struct InferenceOutcome {
  bool correct = false;
  double ce_proxy = 0.0;    // -ln(confidence)
  double confidence = 0.5;  // probability assigned to the true class
};

inline void validate(const SurrogateParams& p) {
  using detail::require_config;
  auto prob = [](double x) { return x > 0.0 && x < 1.0; };
  require_config(prob(p.local_mean_acc), "surrogate: local_mean_acc must lie in (0,1)");
  require_config(prob(p.edge_mean_acc_at_full), "surrogate: edge_mean_acc_at_full must lie in (0,1)");
  require_config(p.edge_mean_acc_at_full >= p.local_mean_acc,
                 "surrogate: edge accuracy must not be below local accuracy");
  require_config(p.acc_floor_ratio > 0.0 && p.acc_floor_ratio <= 1.0,
                 "surrogate: acc_floor_ratio must lie in (0,1]");
  require_config(p.ssim_at_full > 0.0 && p.ssim_at_full <= 1.0,
                 "surrogate: ssim_at_full must lie in (0,1]");
  require_config(p.ssim_exponent > 0.0 && std::isfinite(p.ssim_exponent),
                 "surrogate: ssim_exponent must be positive");
  require_config(p.difficulty.alpha > 0.0 && p.difficulty.beta > 0.0,
                 "surrogate: difficulty shape parameters must be positive");
  require_config(p.entropy_noise_std >= 0.0, "surrogate: entropy_noise_std must be >= 0");
  require_config(prob(p.min_confidence) && prob(p.max_confidence) &&
                     p.min_confidence < p.max_confidence,
                 "surrogate: confidence bounds must satisfy 0 < min < max < 1");
  require_config(p.easy_confidence > 0.0 && p.easy_confidence < 1.0,
                 "surrogate: easy_confidence must lie in (0,1)");
}

inline double confidence_at(const ConfidenceCurve& curve, double u, const SurrogateParams& p) {
  return std::clamp(curve.intercept - curve.slope * u, p.min_confidence, p.max_confidence);
}

inline Datum draw_datum(RandomStream& rng, std::size_t class_count, const SurrogateParams& p) {
  const double max_entropy = std::log(static_cast<double>(class_count));
  Datum d;
  d.difficulty = beta_sample(rng, p.difficulty.alpha, p.difficulty.beta);
  const double noise = p.entropy_noise_std > 0.0 ? p.entropy_noise_std * standard_normal(rng) : 0.0;
  d.entropy = std::clamp(d.difficulty * max_entropy + noise, 0.0, max_entropy);
  d.correctness_seed = uniform01(rng);
  return d;
}

inline InferenceOutcome make_outcome(const Datum& d, double confidence) {
  return {d.correctness_seed < confidence, -std::log(confidence), confidence};
}

inline InferenceOutcome local_infer(const Datum& d, const SurrogateParams& p) {
  return make_outcome(d, confidence_at(p.local_curve, d.difficulty, p));
}

// a(omega): 1 at omega = 1, acc_floor_ratio at the smallest admissible ratio,
// linear in between.
inline double compression_penalty(double ratio, std::span<const double> ratios,
                                  const SurrogateParams& p) {
  const double lo = *std::min_element(ratios.begin(), ratios.end());
  if (lo >= 1.0) return 1.0;
  const double t = std::clamp((ratio - lo) / (1.0 - lo), 0.0, 1.0);
  return p.acc_floor_ratio + t * (1.0 - p.acc_floor_ratio);
}

inline InferenceOutcome edge_infer(const Datum& d, double ratio, std::span<const double> ratios,
                                   const SurrogateParams& p) {
  const bool admissible = std::find(ratios.begin(), ratios.end(), ratio) != ratios.end();
  detail::require(admissible, "edge_infer: ratio " + std::to_string(ratio) +
                                  " is not in the device's ratio set");
  const double conf = confidence_at(p.edge_curve, d.difficulty, p) *
                      compression_penalty(ratio, ratios, p);
  return make_outcome(d, std::clamp(conf, p.min_confidence, p.max_confidence));
}

inline double ssim_surrogate(double ratio, const SurrogateParams& p) {
  detail::require(ratio > 0.0 && ratio <= 1.0, "ssim_surrogate: ratio must lie in (0,1]");
  return p.ssim_at_full * std::pow(ratio, p.ssim_exponent);
}

// ---------------------------------------------------------------------------
// Exact global SSIM between two pixel grids.

struct PixelGrid {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // channel-major: [c][row][col]

  std::size_t plane_size() const { return height * width; }
};

struct SsimConstants {
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

inline double ssim_exact(const PixelGrid& x, const PixelGrid& y, SsimConstants k = {}) {
  detail::require(x.channels == y.channels && x.height == y.height && x.width == y.width,
                  "ssim_exact: shape mismatch");
  const std::size_t n = x.plane_size();
  detail::require(n > 0 && x.channels > 0, "ssim_exact: empty grid");
  detail::require(x.pixels.size() == n * x.channels && y.pixels.size() == n * y.channels,
                  "ssim_exact: pixel buffer does not match the declared shape");
  detail::require(k.c1 > 0.0 && k.c2 > 0.0, "ssim_exact: constants must be positive");

  double total = 0.0;
  for (std::size_t c = 0; c < x.channels; ++c) {
    std::span<const double> a(x.pixels.data() + c * n, n);
    std::span<const double> b(y.pixels.data() + c * n, n);
    double mu_a = 0.0, mu_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mu_a += a[i];
      mu_b += b[i];
    }
    mu_a /= static_cast<double>(n);
    mu_b /= static_cast<double>(n);
    double var_a = 0.0, var_b = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double da = a[i] - mu_a;
      const double db = b[i] - mu_b;
      var_a += da * da;
      var_b += db * db;
      cov += da * db;
    }
    var_a /= static_cast<double>(n);
    var_b /= static_cast<double>(n);
    cov /= static_cast<double>(n);
    total += ((2.0 * mu_a * mu_b + k.c1) * (2.0 * cov + k.c2)) /
             ((mu_a * mu_a + mu_b * mu_b + k.c1) * (var_a + var_b + k.c2));
  }
  return total / static_cast<double>(x.channels);
}

// ---------------------------------------------------------------------------
// Calibration of the free curve parameters against reported endpoints.

struct CalibrationTargets {
  double local_mean_acc = 0.73;
  double edge_mean_acc_at_full = 0.90;
  double ssim_anchor = 0.26;  // leakage allowed at the anchor ratio
  double anchor_ratio = 0.4;  // usually the smallest admissible ratio
};

struct SurrogateCalibration {
  SurrogateParams params;
  double local_accuracy = 0.0;  // Monte-Carlo check on a fresh sample
  double edge_accuracy = 0.0;
  double ssim_at_anchor = 0.0;
  double local_residual = 0.0;
  double edge_residual = 0.0;
};

namespace detail {

// Solves mean(clamp(intercept - slope * u)) = target for slope >= 0 by bisection.
inline double fit_slope(std::span<const double> u, double intercept, double target,
                        const SurrogateParams& p) {
  auto mean_conf = [&](double slope) {
    double s = 0.0;
    for (double x : u) s += std::clamp(intercept - slope * x, p.min_confidence, p.max_confidence);
    return s / static_cast<double>(u.size());
  };
  const double at_zero = mean_conf(0.0);
  if (target > at_zero + 1e-12) {
    throw CalibrationError("calibrate: target accuracy " + std::to_string(target) +
                           " exceeds the easy-datum confidence " + std::to_string(at_zero));
  }
  if (target <= p.min_confidence) {
    throw CalibrationError("calibrate: target accuracy " + std::to_string(target) +
                           " is at or below the confidence floor");
  }
  if (at_zero - target <= 1e-12) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (mean_conf(hi) > target) {
    hi *= 2.0;
    if (hi > 1e9) throw CalibrationError("calibrate: slope search diverged");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_conf(mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

inline SurrogateCalibration calibrate(SurrogateParams params, const CalibrationTargets& targets,
                                      std::span<const double> ratios, std::uint64_t seed,
                                      std::size_t draws = 200000) {
  params.local_mean_acc = targets.local_mean_acc;
  params.edge_mean_acc_at_full = targets.edge_mean_acc_at_full;
  validate(params);
  if (targets.edge_mean_acc_at_full < targets.local_mean_acc) {
    throw CalibrationError("calibrate: edge target below local target");
  }
  detail::require(draws > 0, "calibrate: draws must be positive");

  RandomStream rng = make_stream(seed, {kCalibrationStream, 1});
  std::vector<double> u(draws);
  for (double& x : u) x = beta_sample(rng, params.difficulty.alpha, params.difficulty.beta);

  const double intercept = std::min(params.easy_confidence, params.max_confidence);
  params.local_curve = {intercept, detail::fit_slope(u, intercept, targets.local_mean_acc, params)};
  if (targets.edge_mean_acc_at_full == targets.local_mean_acc) {
    params.edge_curve = params.local_curve;
    params.acc_floor_ratio = 1.0;
  } else {
    params.edge_curve = {intercept,
                         detail::fit_slope(u, intercept, targets.edge_mean_acc_at_full, params)};
  }

  if (targets.ssim_anchor < params.ssim_at_full) {
    detail::require_config(targets.anchor_ratio > 0.0 && targets.anchor_ratio < 1.0,
                           "calibrate: the SSIM anchor needs a ratio strictly below 1");
    double gamma = std::log(targets.ssim_anchor / params.ssim_at_full) /
                   std::log(targets.anchor_ratio);
    params.ssim_exponent = gamma;
    while (ssim_surrogate(targets.anchor_ratio, params) > targets.ssim_anchor) {
      gamma = std::nextafter(gamma, 1e300);
      params.ssim_exponent = gamma;
    }
  }

  // Independent verification sample.
  SurrogateCalibration out;
  RandomStream check = make_stream(seed, {kCalibrationStream, 2});
  const std::size_t n = std::max<std::size_t>(draws / 2, 1);
  std::size_t local_hits = 0, edge_hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Datum d = draw_datum(check, 2, params);
    local_hits += local_infer(d, params).correct ? 1 : 0;
    const double conf = confidence_at(params.edge_curve, d.difficulty, params);
    edge_hits += d.correctness_seed < conf ? 1 : 0;
  }
  out.params = params;
  out.local_accuracy = static_cast<double>(local_hits) / static_cast<double>(n);
  out.edge_accuracy = static_cast<double>(edge_hits) / static_cast<double>(n);
  out.ssim_at_anchor = ssim_surrogate(targets.anchor_ratio, params);
  out.local_residual = out.local_accuracy - targets.local_mean_acc;
  out.edge_residual = out.edge_accuracy - targets.edge_mean_acc_at_full;
  return out;
}

}  // namespace edgebid
