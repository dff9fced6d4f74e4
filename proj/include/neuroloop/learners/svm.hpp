#pragma once

// Linear one-vs-rest SVM trained with Pegasos (stochastic sub-gradient on
// the regularised hinge loss). The bias is a constant input feature and is
// regularised with the weights.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common.hpp"

namespace neuroloop::ml {

struct SvmParams {
  double lambda = 1e-4;
  std::size_t epochs = 50;
};

inline void validate(const SvmParams& p) {
  if (!(p.lambda > 0.0)) throw ValidationError("svm.lambda", "must be positive");
  if (p.epochs < 1) throw ValidationError("svm.epochs", "must be at least 1");
}

struct Svm {
  /// One weight vector per class, last entry multiplies the constant 1.
  std::vector<Row> w;

  double margin(std::size_t c, const Row& x) const {
    double s = w[c].back();
    for (std::size_t j = 0; j < x.size(); ++j) s += w[c][j] * x[j];
    return s;
  }

  std::vector<double> scores(const Row& x) const {
    std::vector<double> s(w.size());
    for (std::size_t c = 0; c < w.size(); ++c) s[c] = margin(c, x);
    return s;
  }

  /// Mean over classes of lambda/2 |w|^2 + weighted mean hinge loss.
  double objective(const Matrix& x, const std::vector<std::size_t>& cls,
                   const std::vector<double>& sw, double lambda) const {
    double total = 0.0;
    double wsum = 0.0;
    for (double v : sw) wsum += v;
    for (std::size_t c = 0; c < w.size(); ++c) {
      double reg = 0.0;
      for (double v : w[c]) reg += v * v;
      double hinge = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double y = cls[i] == c ? 1.0 : -1.0;
        hinge += sw[i] * std::max(0.0, 1.0 - y * margin(c, x[i]));
      }
      total += 0.5 * lambda * reg + hinge / wsum;
    }
    return total / static_cast<double>(w.size());
  }
};

/// Returns the objective after each epoch. Binary problems still train one
/// separator per class so scores are symmetric.
inline std::vector<double> train_svm(Svm& m, const Matrix& x, const std::vector<std::size_t>& cls,
                                     const std::vector<double>& sw, std::size_t n_classes,
                                     const SvmParams& p, std::uint64_t seed) {
  validate(p);
  const std::size_t width = x.empty() ? 0 : x.front().size();
  m.w.assign(n_classes, Row(width + 1, 0.0));
  std::vector<double> curve;
  std::vector<std::size_t> order(x.size());
  const double radius = 1.0 / std::sqrt(p.lambda);
  std::size_t t = 0;
  for (std::size_t e = 0; e < p.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 2, e));
    rng.shuffle(order);
    for (auto i : order) {
      ++t;
      const double eta = 1.0 / (p.lambda * static_cast<double>(t));
      for (std::size_t c = 0; c < n_classes; ++c) {
        auto& wc = m.w[c];
        const double y = cls[i] == c ? 1.0 : -1.0;
        const bool violated = y * m.margin(c, x[i]) < 1.0;
        const double shrink = 1.0 - eta * p.lambda;
        for (double& v : wc) v *= shrink;
        if (violated) {
          const double step = eta * y * sw[i];
          for (std::size_t j = 0; j < width; ++j) wc[j] += step * x[i][j];
          wc[width] += step;
        }
        double norm = 0.0;
        for (double v : wc) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > radius)
          for (double& v : wc) v *= radius / norm;
      }
    }
    curve.push_back(m.objective(x, cls, sw, p.lambda));
  }
  return curve;
}

inline void to_json(nlohmann::json& j, const Svm& m) { j = {{"w", m.w}}; }
inline void from_json(const nlohmann::json& j, Svm& m) { j.at("w").get_to(m.w); }

}  // namespace neuroloop::ml
