#pragma once

// Multilayer perceptron trained with mini-batch SGD and momentum.
// Classification uses a softmax output with cross-entropy, regression a
// linear output with half squared error.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common.hpp"

namespace neuroloop::ml {

struct MlpParams {
  std::vector<std::size_t> hidden = {64};
  enum class Activation { relu, tanh } activation = Activation::relu;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::size_t epochs = 200;
  std::size_t batch = 32;
};

inline void validate(const MlpParams& p) {
  if (p.hidden.empty()) throw ValidationError("mlp.hidden", "need at least one hidden layer");
  for (auto h : p.hidden)
    if (h < 1) throw ValidationError("mlp.hidden", "layer widths must be positive");
  if (!(p.learning_rate > 0.0)) throw ValidationError("mlp.lr", "must be positive");
  if (!(p.momentum >= 0.0 && p.momentum < 1.0)) throw ValidationError("mlp.momentum", "must lie in [0, 1)");
  if (p.epochs < 1) throw ValidationError("mlp.epochs", "must be at least 1");
  if (p.batch < 1) throw ValidationError("mlp.batch", "must be at least 1");
}

/// Network with all weights in one flat vector. Layer l maps sizes[l] to
/// sizes[l+1]; its weights are row-major (out x in) followed by out biases.
struct Mlp {
  std::vector<std::size_t> sizes;
  MlpParams::Activation activation = MlpParams::Activation::relu;
  Task task = Task::classify;
  std::vector<double> theta;

  static Mlp create(std::size_t in, std::size_t out, const MlpParams& p, Task task) {
    Mlp m;
    m.sizes.push_back(in);
    m.sizes.insert(m.sizes.end(), p.hidden.begin(), p.hidden.end());
    m.sizes.push_back(out);
    m.activation = p.activation;
    m.task = task;
    m.theta.assign(m.offset(m.layers()), 0.0);
    return m;
  }

  std::size_t layers() const { return sizes.size() - 1; }

  /// Flat offset of layer l's weight block.
  std::size_t offset(std::size_t l) const {
    std::size_t o = 0;
    for (std::size_t i = 0; i < l; ++i) o += sizes[i + 1] * (sizes[i] + 1);
    return o;
  }

  /// He-style initialisation for weights, zero biases.
  void initialise(Rng& rng) {
    for (std::size_t l = 0; l < layers(); ++l) {
      const double s = std::sqrt(2.0 / static_cast<double>(sizes[l]));
      const std::size_t o = offset(l), nw = sizes[l + 1] * sizes[l];
      for (std::size_t i = 0; i < nw; ++i) theta[o + i] = s * rng.normal();
      for (std::size_t i = 0; i < sizes[l + 1]; ++i) theta[o + nw + i] = 0.0;
    }
  }

  double act(double z) const {
    return activation == MlpParams::Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
  }
  /// Derivative from pre-activation z and activation a. ReLU'(0) = 0.
  double dact(double z, double a) const {
    return activation == MlpParams::Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - a * a;
  }

  /// Pre-activations and activations of every layer; acts[0] is the input.
  void forward(const Row& x, std::vector<Row>& pre, std::vector<Row>& acts) const {
    pre.assign(layers(), {});
    acts.assign(layers() + 1, {});
    acts[0] = x;
    for (std::size_t l = 0; l < layers(); ++l) {
      const std::size_t in = sizes[l], out = sizes[l + 1], o = offset(l);
      Row z(out);
      for (std::size_t r = 0; r < out; ++r) {
        double s = theta[o + out * in + r];
        const double* w = &theta[o + r * in];
        for (std::size_t c = 0; c < in; ++c) s += w[c] * acts[l][c];
        z[r] = s;
      }
      Row a(out);
      const bool last = l + 1 == layers();
      if (!last) {
        for (std::size_t r = 0; r < out; ++r) a[r] = act(z[r]);
      } else if (task == Task::classify) {
        const double mx = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (std::size_t r = 0; r < out; ++r) sum += (a[r] = std::exp(z[r] - mx));
        for (double& v : a) v /= sum;
      } else {
        a = z;
      }
      pre[l] = std::move(z);
      acts[l + 1] = std::move(a);
    }
  }

  Row output(const Row& x) const {
    std::vector<Row> pre, acts;
    forward(x, pre, acts);
    return acts.back();
  }

  /// Weighted mean loss over `idx`, times `scale`; gradient accumulated into
  /// `grad` (resized and zeroed here). Targets are class indices for
  /// classification, values for regression.
  double loss_and_gradient(const Matrix& x, const std::vector<double>& target,
                           const std::vector<double>& w, const std::vector<std::size_t>& idx,
                           std::vector<double>& grad, double scale = 1.0) const {
    grad.assign(theta.size(), 0.0);
    double wsum = 0.0;
    for (auto i : idx) wsum += w[i];
    double loss = 0.0;
    std::vector<Row> pre, acts;
    for (auto i : idx) {
      forward(x[i], pre, acts);
      const double k = scale * w[i] / wsum;
      const Row& out = acts.back();
      Row delta(out.size());
      if (task == Task::classify) {
        const auto c = static_cast<std::size_t>(target[i]);
        loss -= k * std::log(std::max(out[c], 1e-300));
        for (std::size_t r = 0; r < out.size(); ++r) delta[r] = k * (out[r] - (r == c ? 1.0 : 0.0));
      } else {
        const double e = out[0] - target[i];
        loss += k * 0.5 * e * e;
        delta[0] = k * e;
      }
      for (std::size_t l = layers(); l-- > 0;) {
        const std::size_t in = sizes[l], outn = sizes[l + 1], o = offset(l);
        for (std::size_t r = 0; r < outn; ++r) {
          double* g = &grad[o + r * in];
          for (std::size_t c = 0; c < in; ++c) g[c] += delta[r] * acts[l][c];
          grad[o + outn * in + r] += delta[r];
        }
        if (l == 0) break;
        Row prev(in, 0.0);
        for (std::size_t r = 0; r < outn; ++r) {
          const double* wr = &theta[o + r * in];
          for (std::size_t c = 0; c < in; ++c) prev[c] += wr[c] * delta[r];
        }
        for (std::size_t c = 0; c < in; ++c) prev[c] *= dact(pre[l - 1][c], acts[l][c]);
        delta = std::move(prev);
      }
    }
    return loss;
  }

  double loss(const Matrix& x, const std::vector<double>& target, const std::vector<double>& w,
              const std::vector<std::size_t>& idx, double scale = 1.0) const {
    double wsum = 0.0;
    for (auto i : idx) wsum += w[i];
    double l = 0.0;
    for (auto i : idx) {
      const Row out = output(x[i]);
      const double k = scale * w[i] / wsum;
      if (task == Task::classify)
        l -= k * std::log(std::max(out[static_cast<std::size_t>(target[i])], 1e-300));
      else
        l += k * 0.5 * (out[0] - target[i]) * (out[0] - target[i]);
    }
    return l;
  }
};

/// Trains on every sample of x in the given order; epoch e shuffles with
/// stream derive_seed(seed, 1, e). Returns the per-epoch mean training loss.
inline std::vector<double> train_mlp(Mlp& net, const Matrix& x, const std::vector<double>& target,
                                     const std::vector<double>& w, const MlpParams& p,
                                     std::uint64_t seed) {
  Rng init(derive_seed(seed, 0));
  net.initialise(init);
  std::vector<double> velocity(net.theta.size(), 0.0), grad;
  std::vector<std::size_t> order(x.size());
  std::vector<double> curve;
  for (std::size_t e = 0; e < p.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 1, e));
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += p.batch) {
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(b + p.batch, order.size())));
      const double l = net.loss_and_gradient(x, target, w, batch, grad);
      total += l * static_cast<double>(batch.size());
      for (std::size_t i = 0; i < net.theta.size(); ++i) {
        velocity[i] = p.momentum * velocity[i] - p.learning_rate * grad[i];
        net.theta[i] += velocity[i];
      }
    }
    curve.push_back(total / static_cast<double>(order.size()));
  }
  return curve;
}

/// Largest relative discrepancy between the analytic gradient and central
/// differences with step h: |g - n| / max(|g|, |n|, 1e-6).
inline double gradient_check(const Mlp& net, const Matrix& x, const std::vector<double>& target,
                             double h = 1e-5, double scale = 1.0) {
  std::vector<double> w(x.size(), 1.0), grad;
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  net.loss_and_gradient(x, target, w, idx, grad, scale);
  Mlp probe = net;
  double worst = 0.0;
  for (std::size_t i = 0; i < net.theta.size(); ++i) {
    probe.theta[i] = net.theta[i] + h;
    const double up = probe.loss(x, target, w, idx, scale);
    probe.theta[i] = net.theta[i] - h;
    const double down = probe.loss(x, target, w, idx, scale);
    probe.theta[i] = net.theta[i];
    const double num = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(grad[i] - num) / std::max({std::abs(grad[i]), std::abs(num), 1e-6}));
  }
  return worst;
}

inline void to_json(nlohmann::json& j, const Mlp& m) {
  j = {{"sizes", m.sizes},
       {"activation", m.activation == MlpParams::Activation::relu ? "relu" : "tanh"},
       {"task", to_string(m.task)},
       {"theta", m.theta}};
}

inline void from_json(const nlohmann::json& j, Mlp& m) {
  j.at("sizes").get_to(m.sizes);
  m.activation = j.at("activation") == "relu" ? MlpParams::Activation::relu : MlpParams::Activation::tanh;
  m.task = parse_task(j.at("task").get<std::string>());
  j.at("theta").get_to(m.theta);
}

}  // namespace neuroloop::ml
