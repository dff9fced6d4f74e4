#pragma once

// Shared pieces for the learners: data views, standardisation, class
// encoding and canonical sample ordering.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "../core.hpp"
#include <json.hpp>

namespace neuroloop::ml {

using Row = std::vector<double>;
using Matrix = std::vector<Row>;

enum class Task { classify, regress };

inline std::string_view to_string(Task t) { return t == Task::classify ? "classify" : "regress"; }

inline Task parse_task(std::string_view s) {
  if (s == "classify") return Task::classify;
  if (s == "regress") return Task::regress;
  throw UsageError("task must be classify or regress");
}

inline void check_dims(const Matrix& x, std::size_t width, const char* what = "features") {
  for (const auto& r : x)
    if (r.size() != width)
      throw UsageError(std::string(what) + ": expected dimension " + std::to_string(width) +
                       ", got " + std::to_string(r.size()));
}

inline void check_finite(const Matrix& x, const std::vector<double>& y) {
  for (std::size_t i = 0; i < x.size(); ++i)
    for (double v : x[i])
      if (!std::isfinite(v))
        throw ValidationError("features", "non-finite value in sample " + std::to_string(i));
  for (double v : y)
    if (!std::isfinite(v)) throw ValidationError("labels", "non-finite label");
}

/// Per-feature z-scoring from training statistics. Features whose training
/// std is below the floor carry no information and are dropped.
struct Standardizer {
  std::vector<double> mean, scale;
  std::vector<std::size_t> kept;
  std::size_t input_width = 0;

  static Standardizer fit(const Matrix& x, double floor = 1e-12) {
    Standardizer s;
    s.input_width = x.empty() ? 0 : x.front().size();
    const auto n = static_cast<double>(x.size());
    s.mean.assign(s.input_width, 0.0);
    s.scale.assign(s.input_width, 1.0);
    for (const auto& r : x)
      for (std::size_t j = 0; j < s.input_width; ++j) s.mean[j] += r[j];
    for (double& m : s.mean) m /= n;
    std::vector<double> var(s.input_width, 0.0);
    for (const auto& r : x)
      for (std::size_t j = 0; j < s.input_width; ++j) var[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
    for (std::size_t j = 0; j < s.input_width; ++j) {
      const double sd = std::sqrt(var[j] / n);
      s.scale[j] = sd;
      if (sd >= floor) s.kept.push_back(j);
    }
    return s;
  }

  std::size_t width() const { return kept.size(); }

  Row transform(const Row& r) const {
    if (r.size() != input_width)
      throw UsageError("feature dimension " + std::to_string(r.size()) + " does not match the " +
                       std::to_string(input_width) + " seen in training");
    Row out(kept.size());
    for (std::size_t k = 0; k < kept.size(); ++k) out[k] = (r[kept[k]] - mean[kept[k]]) / scale[kept[k]];
    return out;
  }

  Matrix transform(const Matrix& x) const {
    Matrix out;
    out.reserve(x.size());
    for (const auto& r : x) out.push_back(transform(r));
    return out;
  }
};

inline void to_json(nlohmann::json& j, const Standardizer& s) {
  j = {{"mean", s.mean}, {"scale", s.scale}, {"kept", s.kept}, {"input_width", s.input_width}};
}

inline void from_json(const nlohmann::json& j, Standardizer& s) {
  j.at("mean").get_to(s.mean);
  j.at("scale").get_to(s.scale);
  j.at("kept").get_to(s.kept);
  j.at("input_width").get_to(s.input_width);
}

/// Sorted distinct class labels; labels must be integral.
inline std::vector<int> class_list(const std::vector<double>& y) {
  std::vector<int> c;
  for (double v : y) {
    if (v != std::round(v)) throw ValidationError("labels", "classification labels must be integers");
    c.push_back(static_cast<int>(v));
  }
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

inline std::vector<std::size_t> encode(const std::vector<double>& y, const std::vector<int>& classes) {
  std::vector<std::size_t> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto it = std::lower_bound(classes.begin(), classes.end(), static_cast<int>(y[i]));
    out[i] = static_cast<std::size_t>(it - classes.begin());
  }
  return out;
}

/// Inverse-frequency sample weights normalised to mean 1.
inline std::vector<double> balanced_weights(const std::vector<std::size_t>& cls, std::size_t n_classes) {
  std::vector<double> count(n_classes, 0.0);
  for (auto c : cls) count[c] += 1.0;
  std::vector<double> w(cls.size());
  const double n = static_cast<double>(cls.size());
  for (std::size_t i = 0; i < cls.size(); ++i)
    w[i] = n / (static_cast<double>(n_classes) * count[cls[i]]);
  return w;
}

/// Order of samples sorted by content (features, then label). Fitting on
/// this order makes results independent of how the caller ordered rows.
inline std::vector<std::size_t> canonical_order(const Matrix& x, const std::vector<double>& y) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });
  return idx;
}

/// Index of the largest score; first (smallest class id) on ties.
inline std::size_t argmax_first(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace neuroloop::ml
