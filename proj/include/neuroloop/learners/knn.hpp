#pragma once

// Brute-force k-nearest neighbours.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common.hpp"

namespace neuroloop::ml {

struct KnnParams {
  std::size_t k = 5;
  enum class Distance { euclidean, manhattan } distance = Distance::euclidean;
};

inline void validate(const KnnParams& p) {
  if (p.k < 1) throw ValidationError("knn.k", "must be at least 1");
}

struct Knn {
  KnnParams params;
  Matrix x;                      // standardised training set, caller order
  std::vector<std::size_t> cls;  // classify
  std::vector<double> y;         // regress
  std::size_t n_classes = 0;

  double distance(const Row& a, const Row& b) const {
    double d = 0.0;
    if (params.distance == KnnParams::Distance::euclidean) {
      for (std::size_t j = 0; j < a.size(); ++j) d += (a[j] - b[j]) * (a[j] - b[j]);
    } else {
      for (std::size_t j = 0; j < a.size(); ++j) d += std::abs(a[j] - b[j]);
    }
    return d;  // squared for euclidean; ordering is what matters
  }

  /// Indices of the k nearest training samples; equal distances resolve to
  /// the lower training index.
  std::vector<std::size_t> neighbours(const Row& q) const {
    std::vector<std::pair<double, std::size_t>> d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = {distance(q, x[i]), i};
    const std::size_t k = std::min(params.k, d.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
    return out;
  }

  /// Vote fractions per class.
  std::vector<double> scores(const Row& q) const {
    std::vector<double> votes(n_classes, 0.0);
    const auto nb = neighbours(q);
    for (auto i : nb) votes[cls[i]] += 1.0;
    for (double& v : votes) v /= static_cast<double>(nb.size());
    return votes;
  }

  double regress(const Row& q) const {
    const auto nb = neighbours(q);
    double s = 0.0;
    for (auto i : nb) s += y[i];
    return s / static_cast<double>(nb.size());
  }
};

inline void to_json(nlohmann::json& j, const Knn& m) {
  j = {{"k", m.params.k},
       {"distance", m.params.distance == KnnParams::Distance::euclidean ? "euclidean" : "manhattan"},
       {"x", m.x},
       {"cls", m.cls},
       {"y", m.y},
       {"n_classes", m.n_classes}};
}

inline void from_json(const nlohmann::json& j, Knn& m) {
  m.params.k = j.at("k").get<std::size_t>();
  m.params.distance = j.at("distance") == "euclidean" ? KnnParams::Distance::euclidean
                                                      : KnnParams::Distance::manhattan;
  j.at("x").get_to(m.x);
  j.at("cls").get_to(m.cls);
  j.at("y").get_to(m.y);
  j.at("n_classes").get_to(m.n_classes);
}

}  // namespace neuroloop::ml
