// Copyright 2026 The edgebid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small dense feed-forward networks with exact reverse-mode gradients, an
// Adam optimizer, Polyak (soft) target updates and the Gumbel-Softmax
// relaxation. Batches are column-major: one sample per column.

#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "edgebid/error.hpp"
#include "edgebid/random.hpp"

namespace edgebid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class HeadActivation {
  kIdentity,
  kBounded,  // scale * logistic(z), range (0, scale)
  kSoftmax,
};

inline std::string to_string(HeadActivation h) {
  switch (h) {
    case HeadActivation::kIdentity: return "identity";
    case HeadActivation::kBounded: return "bounded";
    case HeadActivation::kSoftmax: return "softmax";
  }
  return "identity";
}

inline HeadActivation head_from_string(const std::string& s) {
  if (s == "identity") return HeadActivation::kIdentity;
  if (s == "bounded") return HeadActivation::kBounded;
  if (s == "softmax") return HeadActivation::kSoftmax;
  throw ConfigError("unknown head activation '" + s + "'");
}

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
};

// Column-wise softmax, max-shifted.
inline Matrix softmax_columns(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double m = z.col(j).maxCoeff();
    out.col(j) = (z.col(j).array() - m).exp().matrix();
    out.col(j) /= out.col(j).sum();
  }
  return out;
}

inline Matrix log_softmax_columns(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double m = z.col(j).maxCoeff();
    const double lse = m + std::log((z.col(j).array() - m).exp().sum());
    out.col(j) = z.col(j).array() - lse;
  }
  return out;
}

// Cached intermediate values of one forward pass.
struct ForwardTape {
  std::vector<Matrix> activations;  // input followed by each hidden output
  Matrix logits;                    // pre-head values of the last layer
  Matrix output;
};

struct GradientBundle {
  std::vector<DenseLayer> params;
  Matrix input;  // gradient w.r.t. the input batch
};

class MlpNet {
 public:
  MlpNet() = default;

  // sizes = {in, hidden..., out}; hidden layers use ReLU.
  MlpNet(std::vector<std::size_t> sizes, HeadActivation head, double head_scale = 1.0)
      : sizes_(std::move(sizes)), head_(head), head_scale_(head_scale) {
    if (sizes_.size() < 2) throw NumericError("MlpNet: need at least input and output sizes");
    for (std::size_t s : sizes_) {
      if (s == 0) throw NumericError("MlpNet: layer sizes must be positive");
    }
    if (head_ == HeadActivation::kBounded && !(head_scale_ > 0.0)) {
      throw NumericError("MlpNet: bounded head needs a positive scale");
    }
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      DenseLayer layer;
      layer.weights = Matrix::Zero(static_cast<Eigen::Index>(sizes_[l + 1]),
                                   static_cast<Eigen::Index>(sizes_[l]));
      layer.bias = Vector::Zero(static_cast<Eigen::Index>(sizes_[l + 1]));
      layers_.push_back(std::move(layer));
    }
  }

  // Uniform fan-in initialization (the common default for small MLPs).
  void initialize(RandomStream& rng) {
    for (DenseLayer& layer : layers_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weights.cols()));
      for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
        layer.weights.data()[i] = bound * (2.0 * uniform01(rng) - 1.0);
      }
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
        layer.bias[i] = bound * (2.0 * uniform01(rng) - 1.0);
      }
    }
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  HeadActivation head() const { return head_; }
  double head_scale() const { return head_scale_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

  bool same_architecture(const MlpNet& other) const {
    return sizes_ == other.sizes_ && head_ == other.head_ && head_scale_ == other.head_scale_;
  }

  Matrix apply_head(const Matrix& logits) const {
    switch (head_) {
      case HeadActivation::kIdentity: return logits;
      case HeadActivation::kBounded:
        return (head_scale_ / (1.0 + (-logits.array()).exp())).matrix();
      case HeadActivation::kSoftmax: return softmax_columns(logits);
    }
    return logits;
  }

  ForwardTape forward_tape(const Matrix& input) const {
    check_input(input.rows());
    ForwardTape tape;
    tape.activations.reserve(layers_.size());
    tape.activations.push_back(input);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = layers_[l].weights * tape.activations.back();
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) {
        tape.activations.push_back(z.cwiseMax(0.0));
      } else {
        tape.logits = std::move(z);
      }
    }
    tape.output = apply_head(tape.logits);
    return tape;
  }

  Matrix forward(const Matrix& input) const { return forward_tape(input).output; }

  Vector forward(const Vector& input) const {
    return forward_tape(Matrix(input)).output.col(0);
  }

  // Gradients given dL/d(output); parameter gradients are summed over the batch.
  GradientBundle backward(const ForwardTape& tape, const Matrix& upstream) const {
    check_upstream(tape, upstream);
    Matrix g_logits;
    switch (head_) {
      case HeadActivation::kIdentity: g_logits = upstream; break;
      case HeadActivation::kBounded:
        g_logits = (upstream.array() * tape.output.array() *
                    (1.0 - tape.output.array() / head_scale_))
                       .matrix();
        break;
      case HeadActivation::kSoftmax: {
        g_logits.resize(upstream.rows(), upstream.cols());
        for (Eigen::Index j = 0; j < upstream.cols(); ++j) {
          const double dot = tape.output.col(j).dot(upstream.col(j));
          g_logits.col(j) =
              (tape.output.col(j).array() * (upstream.col(j).array() - dot)).matrix();
        }
        break;
      }
    }
    return backward_logits(tape, g_logits);
  }

  // Gradients given dL/d(logits), bypassing the head activation.
  GradientBundle backward_logits(const ForwardTape& tape, const Matrix& g_logits) const {
    check_upstream(tape, g_logits);
    GradientBundle out;
    out.params.resize(layers_.size());
    Matrix g = g_logits;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Matrix& a = tape.activations[l];
      out.params[l].weights.noalias() = g * a.transpose();
      out.params[l].bias = g.rowwise().sum();
      Matrix g_prev = layers_[l].weights.transpose() * g;
      if (l > 0) g_prev = g_prev.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
      g = std::move(g_prev);
    }
    out.input = std::move(g);
    return out;
  }

  GradientBundle backward(const Vector& input, const Vector& upstream) const {
    return backward(forward_tape(Matrix(input)), Matrix(upstream));
  }

 private:
  void check_input(Eigen::Index rows) const {
    if (layers_.empty()) throw NumericError("MlpNet: network has no layers");
    if (static_cast<std::size_t>(rows) != sizes_.front()) {
      throw NumericError("MlpNet: input has " + std::to_string(rows) + " rows, expected " +
                         std::to_string(sizes_.front()));
    }
  }
  void check_upstream(const ForwardTape& tape, const Matrix& upstream) const {
    if (upstream.rows() != tape.logits.rows() || upstream.cols() != tape.logits.cols()) {
      throw NumericError("MlpNet: upstream gradient shape does not match the output");
    }
  }

  std::vector<std::size_t> sizes_;
  HeadActivation head_ = HeadActivation::kIdentity;
  double head_scale_ = 1.0;
  std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------
// Adam.

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config{};
  std::size_t step = 0;
  std::vector<DenseLayer> first_moment;
  std::vector<DenseLayer> second_moment;

  OptimizerState() = default;
  OptimizerState(const MlpNet& net, AdamConfig cfg) : config(cfg) {
    for (const auto& l : net.layers()) {
      first_moment.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()),
                              Vector::Zero(l.bias.size())});
    }
    second_moment = first_moment;
  }
};

// One descent step on `grads` (which must point uphill on the loss).
inline void optimizer_step(MlpNet& net, const std::vector<DenseLayer>& grads,
                           OptimizerState& state) {
  auto& layers = net.layers();
  if (grads.size() != layers.size() || state.first_moment.size() != layers.size()) {
    throw NumericError("optimizer_step: gradient/state shape mismatch");
  }
  for (const auto& g : grads) {
    if (!g.weights.allFinite() || !g.bias.allFinite()) {
      throw NumericError("optimizer_step: non-finite gradient");
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
      m = c.beta1 * m + (1.0 - c.beta1) * grad;
      v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
      param.array() -= c.learning_rate * (m.array() / bc1) /
                       ((v.array() / bc2).sqrt() + c.epsilon);
    };
    update(layers[l].weights, grads[l].weights, state.first_moment[l].weights,
           state.second_moment[l].weights);
    update(layers[l].bias, grads[l].bias, state.first_moment[l].bias,
           state.second_moment[l].bias);
  }
}

// ---------------------------------------------------------------------------

// target <- tau * online + (1 - tau) * target.
inline void soft_update(MlpNet& target, const MlpNet& online, double tau) {
  if (!target.same_architecture(online)) throw NumericError("soft_update: architecture mismatch");
  if (!(tau > 0.0 && tau <= 1.0)) throw NumericError("soft_update: tau must lie in (0,1]");
  for (std::size_t l = 0; l < target.layers().size(); ++l) {
    auto& t = target.layers()[l];
    const auto& o = online.layers()[l];
    if (tau == 1.0) {
      t = o;
    } else {
      t.weights = tau * o.weights + (1.0 - tau) * t.weights;
      t.bias = tau * o.bias + (1.0 - tau) * t.bias;
    }
  }
}

// ---------------------------------------------------------------------------
// Gumbel-Softmax: softmax((log_softmax(logits) + g) / tau), g ~ Gumbel(0, 1).

inline Matrix gumbel_softmax_with_noise(const Matrix& logits, const Matrix& noise, double tau) {
  if (!(tau > 0.0)) throw NumericError("gumbel_softmax: temperature must be positive");
  return softmax_columns((log_softmax_columns(logits) + noise) / tau);
}

inline Matrix gumbel_noise(Eigen::Index rows, Eigen::Index cols, RandomStream& rng) {
  Matrix g(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = standard_gumbel(rng);
  }
  return g;
}

inline Vector gumbel_softmax(const Vector& logits, double tau, RandomStream& rng) {
  const Matrix g = gumbel_noise(logits.size(), 1, rng);
  return gumbel_softmax_with_noise(Matrix(logits), g, tau).col(0);
}

// dL/dlogits given the relaxed sample y and dL/dy (noise held fixed).
inline Matrix gumbel_softmax_backward(const Matrix& logits, const Matrix& sample,
                                      const Matrix& upstream, double tau) {
  const Matrix probs = softmax_columns(logits);
  Matrix g(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double dot = sample.col(j).dot(upstream.col(j));
    const Vector gz = (sample.col(j).array() * (upstream.col(j).array() - dot)).matrix() / tau;
    g.col(j) = gz - probs.col(j) * gz.sum();
  }
  return g;
}

// ---------------------------------------------------------------------------
// Persistence: {"format", "version", "layer_sizes", "head", "head_scale", "parameters"}
// with parameters flattened layer by layer, weights row-major then bias.

inline constexpr int kNetFormatVersion = 1;

inline nlohmann::json to_json(const MlpNet& net) {
  nlohmann::json j;
  j["format"] = "edgebid-mlp";
  j["version"] = kNetFormatVersion;
  j["layer_sizes"] = net.sizes();
  j["head"] = to_string(net.head());
  j["head_scale"] = net.head_scale();
  std::vector<double> flat;
  flat.reserve(net.parameter_count());
  for (const auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) flat.push_back(l.weights(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) flat.push_back(l.bias[r]);
  }
  j["parameters"] = std::move(flat);
  return j;
}

inline MlpNet net_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "edgebid-mlp") {
      throw ConfigError("network document has the wrong format tag");
    }
    if (j.at("version").get<int>() != kNetFormatVersion) {
      throw ConfigError("unsupported network document version");
    }
    MlpNet net(j.at("layer_sizes").get<std::vector<std::size_t>>(),
               head_from_string(j.at("head").get<std::string>()),
               j.at("head_scale").get<double>());
    const auto flat = j.at("parameters").get<std::vector<double>>();
    if (flat.size() != net.parameter_count()) {
      throw ConfigError("network document parameter count does not match its layer sizes");
    }
    std::size_t i = 0;
    for (auto& l : net.layers()) {
      for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = flat[i++];
      }
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = flat[i++];
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed network document: ") + e.what());
  }
}

}  // namespace edgebid
