#pragma once

// CART decision tree: Gini impurity for classification, squared error for
// regression. Splits are axis-aligned thresholds at midpoints between
// consecutive distinct values.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common.hpp"

namespace neuroloop::ml {

struct TreeParams {
  std::size_t max_depth = 12;
  std::size_t min_leaf = 5;
  /// Features examined at each split; 0 means all.
  std::size_t features_per_split = 0;
};

inline void validate(const TreeParams& p) {
  if (p.max_depth < 1) throw ValidationError("dtree.max_depth", "must be at least 1");
  if (p.min_leaf < 1) throw ValidationError("dtree.min_leaf", "must be at least 1");
}

struct TreeNode {
  int feature = -1;  // -1: leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  std::vector<double> value;  // class distribution, or {mean}
  double impurity = 0.0;
  double weight = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;
  Task task = Task::classify;
  std::size_t n_classes = 0;

  const TreeNode& leaf_for(const Row& x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0)
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold
                                       ? nodes[i].left
                                       : nodes[i].right);
    return nodes[i];
  }

  std::vector<double> scores(const Row& x) const { return leaf_for(x).value; }
  std::size_t predict_class(const Row& x) const { return argmax_first(leaf_for(x).value); }
  double regress(const Row& x) const { return leaf_for(x).value[0]; }

  std::size_t depth() const {
    std::vector<std::size_t> d(nodes.size(), 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].feature >= 0) {
        d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
        d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
        best = std::max(best, d[i] + 1);
      }
    return best;
  }
};

namespace tree_detail {

/// Threshold strictly between a < b so that b always goes right.
inline double midpoint(double a, double b) {
  const double m = a + (b - a) / 2.0;
  return m < b ? m : a;
}

struct Builder {
  const Matrix& x;
  const std::vector<double>& target;  // class index or regression value
  const std::vector<double>& w;
  const TreeParams& p;
  Task task;
  std::size_t n_classes;
  Rng* rng;  // null when every feature is examined
  Tree tree;

  std::vector<double> node_value(const std::vector<std::size_t>& idx, double& impurity,
                                 double& weight) const {
    weight = 0.0;
    if (task == Task::classify) {
      std::vector<double> c(n_classes, 0.0);
      for (auto i : idx) {
        c[static_cast<std::size_t>(target[i])] += w[i];
        weight += w[i];
      }
      double g = 1.0;
      for (double& v : c) {
        v /= weight;
        g -= v * v;
      }
      impurity = g;
      return c;
    }
    double s = 0.0, s2 = 0.0;
    for (auto i : idx) {
      s += w[i] * target[i];
      s2 += w[i] * target[i] * target[i];
      weight += w[i];
    }
    const double mean = s / weight;
    impurity = std::max(0.0, s2 / weight - mean * mean);
    return {mean};
  }

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;  // weighted child impurity
  };

  Split best_split(const std::vector<std::size_t>& idx, double parent_impurity, double parent_w) {
    const std::size_t width = x.empty() ? 0 : x.front().size();
    std::vector<std::size_t> feats(width);
    std::iota(feats.begin(), feats.end(), 0);
    if (rng && p.features_per_split > 0 && p.features_per_split < width) {
      // Partial Fisher-Yates; the chosen subset is examined in index order.
      for (std::size_t i = 0; i < p.features_per_split; ++i)
        std::swap(feats[i], feats[i + rng->below(width - i)]);
      feats.resize(p.features_per_split);
      std::sort(feats.begin(), feats.end());
    }
    Split best;
    best.score = parent_impurity * parent_w;
    std::vector<std::size_t> order = idx;
    for (auto f : feats) {
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return x[a][f] < x[b][f]; });
      if (task == Task::classify) {
        std::vector<double> left(n_classes, 0.0), right(n_classes, 0.0);
        double lw = 0.0, rw = 0.0;
        for (auto i : order) {
          right[static_cast<std::size_t>(target[i])] += w[i];
          rw += w[i];
        }
        for (std::size_t k = 0; k + 1 < order.size(); ++k) {
          const auto i = order[k];
          const auto c = static_cast<std::size_t>(target[i]);
          left[c] += w[i];
          right[c] -= w[i];
          lw += w[i];
          rw -= w[i];
          const double a = x[i][f], b = x[order[k + 1]][f];
          if (a == b || k + 1 < p.min_leaf || order.size() - k - 1 < p.min_leaf) continue;
          double gl = 1.0, gr = 1.0;
          for (std::size_t c2 = 0; c2 < n_classes; ++c2) {
            gl -= (left[c2] / lw) * (left[c2] / lw);
            gr -= (right[c2] / rw) * (right[c2] / rw);
          }
          const double score = lw * gl + rw * gr;
          if (score < best.score - 1e-12) best = {static_cast<int>(f), midpoint(a, b), score};
        }
      } else {
        double ls = 0.0, ls2 = 0.0, lw = 0.0, rs = 0.0, rs2 = 0.0, rw = 0.0;
        for (auto i : order) {
          rs += w[i] * target[i];
          rs2 += w[i] * target[i] * target[i];
          rw += w[i];
        }
        for (std::size_t k = 0; k + 1 < order.size(); ++k) {
          const auto i = order[k];
          const double wy = w[i] * target[i];
          ls += wy;
          ls2 += wy * target[i];
          lw += w[i];
          rs -= wy;
          rs2 -= wy * target[i];
          rw -= w[i];
          const double a = x[i][f], b = x[order[k + 1]][f];
          if (a == b || k + 1 < p.min_leaf || order.size() - k - 1 < p.min_leaf) continue;
          const double score = std::max(0.0, ls2 - ls * ls / lw) + std::max(0.0, rs2 - rs * rs / rw);
          if (score < best.score - 1e-12) best = {static_cast<int>(f), midpoint(a, b), score};
        }
      }
    }
    return best;
  }

  int build(const std::vector<std::size_t>& idx, std::size_t depth) {
    TreeNode node;
    node.value = node_value(idx, node.impurity, node.weight);
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(node);
    if (depth >= p.max_depth || idx.size() < 2 * p.min_leaf || node.impurity <= 1e-15) return id;
    const Split s = best_split(idx, node.impurity, node.weight);
    if (s.feature < 0) return id;
    std::vector<std::size_t> l, r;
    for (auto i : idx) (x[i][static_cast<std::size_t>(s.feature)] <= s.threshold ? l : r).push_back(i);
    const int li = build(l, depth + 1);
    const int ri = build(r, depth + 1);
    auto& n = tree.nodes[static_cast<std::size_t>(id)];
    n.feature = s.feature;
    n.threshold = s.threshold;
    n.left = li;
    n.right = ri;
    return id;
  }
};

}  // namespace tree_detail

/// Grows a tree on samples `idx` of (x, target) with weights `w`.
/// `target` holds class indices for classification.
inline Tree grow_tree(const Matrix& x, const std::vector<double>& target, const std::vector<double>& w,
                      const std::vector<std::size_t>& idx, const TreeParams& p, Task task,
                      std::size_t n_classes, std::uint64_t seed) {
  validate(p);
  const std::size_t width = x.empty() ? 0 : x.front().size();
  Rng rng(seed);
  const bool subsample = p.features_per_split > 0 && p.features_per_split < width;
  tree_detail::Builder b{x, target, w, p, task, n_classes, subsample ? &rng : nullptr, {}};
  b.tree.task = task;
  b.tree.n_classes = n_classes;
  b.build(idx, 0);
  return std::move(b.tree);
}

inline void to_json(nlohmann::json& j, const Tree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes)
    nodes.push_back({{"f", n.feature}, {"th", n.threshold}, {"l", n.left}, {"r", n.right}, {"v", n.value}});
  j = {{"nodes", nodes}, {"n_classes", t.n_classes}, {"task", to_string(t.task)}};
}

inline void from_json(const nlohmann::json& j, Tree& t) {
  t.nodes.clear();
  for (const auto& n : j.at("nodes")) {
    TreeNode node;
    n.at("f").get_to(node.feature);
    n.at("th").get_to(node.threshold);
    n.at("l").get_to(node.left);
    n.at("r").get_to(node.right);
    n.at("v").get_to(node.value);
    t.nodes.push_back(std::move(node));
  }
  j.at("n_classes").get_to(t.n_classes);
  t.task = parse_task(j.at("task").get<std::string>());
}

}  // namespace neuroloop::ml
