#pragma once

// Model specification, fitting, prediction and the versioned JSON artifact.

#include <fstream>
#include <string>
#include <variant>

#include "../featwin.hpp"
#include "common.hpp"
#include "forest.hpp"
#include "knn.hpp"
#include "mlp.hpp"
#include "svm.hpp"
#include "tree.hpp"

namespace neuroloop::ml {

inline constexpr int kModelFormatVersion = 1;

enum class Kind { svm, knn, dtree, rforest, mlp };

inline std::string_view to_string(Kind k) {
  switch (k) {
    case Kind::svm: return "svm";
    case Kind::knn: return "knn";
    case Kind::dtree: return "dtree";
    case Kind::rforest: return "rforest";
    case Kind::mlp: return "mlp";
  }
  return "?";
}

inline Kind parse_kind(std::string_view s) {
  for (auto k : {Kind::svm, Kind::knn, Kind::dtree, Kind::rforest, Kind::mlp})
    if (to_string(k) == s) return k;
  throw UsageError("unknown model '" + std::string(s) + "' (svm, knn, dtree, rforest, mlp)");
}

struct ModelSpec {
  Kind kind = Kind::rforest;
  Task task = Task::classify;
  KnnParams knn;
  TreeParams dtree;
  ForestParams rforest;
  MlpParams mlp;
  SvmParams svm;
  std::uint64_t seed = 0;
  /// Inverse-frequency sample weights (classification only).
  bool class_weights = false;
  /// Smallest training set accepted.
  std::size_t min_samples = 10;
  /// Worker threads for forest training; results do not depend on it.
  unsigned jobs = 1;
};

inline void validate(const ModelSpec& s) {
  if (s.kind == Kind::svm && s.task == Task::regress)
    throw ValidationError("model.task", "svm supports classification only");
  switch (s.kind) {
    case Kind::svm: validate(s.svm); break;
    case Kind::knn: validate(s.knn); break;
    case Kind::dtree: validate(s.dtree); break;
    case Kind::rforest: validate(s.rforest); break;
    case Kind::mlp: validate(s.mlp); break;
  }
  if (s.min_samples < 1) throw ValidationError("model.min_samples", "must be at least 1");
}

namespace model_detail {

inline std::size_t to_count(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw UsageError("parameter " + key + " expects a nonnegative integer, got '" + v + "'");
  }
}

inline double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError("parameter " + key + " expects a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("parameter " + key + " expects true or false");
}

}  // namespace model_detail

/// Sets one hyperparameter from text, e.g. ("k", "3") or ("hidden", "32,16").
/// Keys apply to the spec's model kind.
inline void set_param(ModelSpec& s, const std::string& key, const std::string& v) {
  using namespace model_detail;
  if (key == "seed") { s.seed = to_count(key, v); return; }
  if (key == "class_weights") { s.class_weights = to_bool(key, v); return; }
  if (key == "min_samples") { s.min_samples = to_count(key, v); return; }
  switch (s.kind) {
    case Kind::knn:
      if (key == "k") { s.knn.k = to_count(key, v); return; }
      if (key == "distance") {
        if (v == "euclidean") s.knn.distance = KnnParams::Distance::euclidean;
        else if (v == "manhattan") s.knn.distance = KnnParams::Distance::manhattan;
        else throw UsageError("distance must be euclidean or manhattan");
        return;
      }
      break;
    case Kind::dtree:
    case Kind::rforest: {
      TreeParams& t = s.kind == Kind::dtree ? s.dtree : s.rforest.tree;
      if (key == "max_depth") { t.max_depth = to_count(key, v); return; }
      if (key == "min_leaf") { t.min_leaf = to_count(key, v); return; }
      if (key == "features_per_split") {
        (s.kind == Kind::dtree ? s.dtree.features_per_split : s.rforest.features_per_split) = to_count(key, v);
        return;
      }
      if (s.kind == Kind::rforest && key == "trees") { s.rforest.trees = to_count(key, v); return; }
      if (s.kind == Kind::rforest && key == "bootstrap") { s.rforest.bootstrap = to_bool(key, v); return; }
      break;
    }
    case Kind::mlp:
      if (key == "hidden") {
        s.mlp.hidden.clear();
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) s.mlp.hidden.push_back(to_count(key, item));
        return;
      }
      if (key == "activation") {
        if (v == "relu") s.mlp.activation = MlpParams::Activation::relu;
        else if (v == "tanh") s.mlp.activation = MlpParams::Activation::tanh;
        else throw UsageError("activation must be relu or tanh");
        return;
      }
      if (key == "lr") { s.mlp.learning_rate = to_real(key, v); return; }
      if (key == "momentum") { s.mlp.momentum = to_real(key, v); return; }
      if (key == "epochs") { s.mlp.epochs = to_count(key, v); return; }
      if (key == "batch") { s.mlp.batch = to_count(key, v); return; }
      break;
    case Kind::svm:
      if (key == "lambda") { s.svm.lambda = to_real(key, v); return; }
      if (key == "epochs") { s.svm.epochs = to_count(key, v); return; }
      break;
  }
  throw UsageError("unknown parameter '" + key + "' for " + std::string(to_string(s.kind)));
}

inline nlohmann::json spec_to_json(const ModelSpec& s) {
  nlohmann::json j = {{"kind", to_string(s.kind)},
                      {"task", to_string(s.task)},
                      {"seed", s.seed},
                      {"class_weights", s.class_weights},
                      {"min_samples", s.min_samples}};
  auto tree = [](const TreeParams& t) {
    return nlohmann::json{{"max_depth", t.max_depth}, {"min_leaf", t.min_leaf},
                          {"features_per_split", t.features_per_split}};
  };
  switch (s.kind) {
    case Kind::knn:
      j["params"] = {{"k", s.knn.k},
                     {"distance", s.knn.distance == KnnParams::Distance::euclidean ? "euclidean" : "manhattan"}};
      break;
    case Kind::dtree:
      j["params"] = tree(s.dtree);
      j["params"]["split"] = s.task == Task::classify ? "gini" : "mse";
      break;
    case Kind::rforest:
      j["params"] = tree(s.rforest.tree);
      j["params"]["trees"] = s.rforest.trees;
      j["params"]["bootstrap"] = s.rforest.bootstrap;
      j["params"]["features_per_split"] = s.rforest.features_per_split;
      break;
    case Kind::mlp:
      j["params"] = {{"hidden", s.mlp.hidden},
                     {"activation", s.mlp.activation == MlpParams::Activation::relu ? "relu" : "tanh"},
                     {"output", s.task == Task::classify ? "softmax" : "linear"},
                     {"lr", s.mlp.learning_rate},
                     {"momentum", s.mlp.momentum},
                     {"epochs", s.mlp.epochs},
                     {"batch", s.mlp.batch}};
      break;
    case Kind::svm:
      j["params"] = {{"lambda", s.svm.lambda}, {"epochs", s.svm.epochs}};
      break;
  }
  return j;
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.kind = parse_kind(j.at("kind").get<std::string>());
  s.task = parse_task(j.at("task").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.class_weights = j.value("class_weights", false);
  s.min_samples = j.value("min_samples", std::size_t{10});
  for (const auto& [k, v] : j.at("params").items()) {
    if (k == "split" || k == "output") continue;
    std::string text;
    if (v.is_string()) text = v.get<std::string>();
    else if (v.is_boolean()) text = v.get<bool>() ? "true" : "false";
    else if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i) text += (i ? "," : "") + std::to_string(v[i].get<std::size_t>());
    } else if (v.is_number_float()) {
      std::ostringstream os;
      os << std::setprecision(17) << v.get<double>();
      text = os.str();
    } else text = std::to_string(v.get<std::uint64_t>());
    set_param(s, k, text);
  }
  return s;
}

using Learned = std::variant<Knn, Tree, Forest, Mlp, Svm>;

struct TrainedModel {
  ModelSpec spec;
  Standardizer standardizer;
  std::vector<int> classes;  // classification only, ascending
  Learned learned;
  std::vector<double> loss_curve;
  std::size_t train_size = 0;

  std::size_t input_width() const { return standardizer.input_width; }
};

struct Prediction {
  /// Class labels (as reals) or regression values.
  std::vector<double> values;
  /// Per-class scores, classification only.
  std::vector<std::vector<double>> scores;
};

inline TrainedModel fit(const ModelSpec& spec, const Matrix& x, const std::vector<double>& y) {
  validate(spec);
  if (x.size() != y.size()) throw ValidationError("features", "features and labels differ in length");
  if (x.size() < spec.min_samples)
    throw ValidationError("features", "need at least " + std::to_string(spec.min_samples) +
                                          " samples, got " + std::to_string(x.size()));
  check_dims(x, x.front().size());
  check_finite(x, y);
  TrainedModel m;
  m.spec = spec;
  m.train_size = x.size();
  m.standardizer = Standardizer::fit(x);
  std::size_t n_classes = 0;
  if (spec.task == Task::classify) {
    m.classes = class_list(y);
    if (m.classes.size() < 2) throw ValidationError("labels", "single-class training set");
    n_classes = m.classes.size();
  }

  if (spec.kind == Kind::knn) {
    Knn k;
    k.params = spec.knn;
    k.x = m.standardizer.transform(x);
    k.n_classes = n_classes;
    if (spec.task == Task::classify) k.cls = encode(y, m.classes);
    else k.y = y;
    m.learned = std::move(k);
    return m;
  }

  // Everything else sees samples in canonical content order.
  const auto order = canonical_order(x, y);
  Matrix z;
  std::vector<double> target;
  z.reserve(x.size());
  for (auto i : order) {
    z.push_back(m.standardizer.transform(x[i]));
    target.push_back(y[i]);
  }
  std::vector<std::size_t> cls;
  if (spec.task == Task::classify) {
    cls = encode(target, m.classes);
    for (std::size_t i = 0; i < cls.size(); ++i) target[i] = static_cast<double>(cls[i]);
  }
  const std::vector<double> w = spec.task == Task::classify && spec.class_weights
                                    ? balanced_weights(cls, n_classes)
                                    : std::vector<double>(z.size(), 1.0);
  std::vector<std::size_t> all(z.size());
  std::iota(all.begin(), all.end(), 0);

  switch (spec.kind) {
    case Kind::dtree:
      m.learned = grow_tree(z, target, w, all, spec.dtree, spec.task, n_classes, spec.seed);
      break;
    case Kind::rforest:
      m.learned = grow_forest(z, target, w, spec.rforest, spec.task, n_classes, spec.seed, spec.jobs);
      break;
    case Kind::mlp: {
      Mlp net = Mlp::create(m.standardizer.width(), spec.task == Task::classify ? n_classes : 1,
                            spec.mlp, spec.task);
      m.loss_curve = train_mlp(net, z, target, w, spec.mlp, spec.seed);
      m.learned = std::move(net);
      break;
    }
    case Kind::svm: {
      Svm s;
      m.loss_curve = train_svm(s, z, cls, w, n_classes, spec.svm, spec.seed);
      m.learned = std::move(s);
      break;
    }
    case Kind::knn: break;
  }
  return m;
}

inline TrainedModel fit(const ModelSpec& spec, const FeatureMatrix& f) {
  return fit(spec, f.windows, f.labels);
}

/// Scores for one sample (classification) or {value} (regression).
inline std::vector<double> raw_output(const TrainedModel& m, const Row& x) {
  const Row z = m.standardizer.transform(x);
  return std::visit(
      [&](const auto& l) -> std::vector<double> {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Knn>) {
          return m.spec.task == Task::classify ? l.scores(z) : std::vector<double>{l.regress(z)};
        } else if constexpr (std::is_same_v<T, Tree> || std::is_same_v<T, Forest>) {
          return m.spec.task == Task::classify ? l.scores(z) : std::vector<double>{l.regress(z)};
        } else if constexpr (std::is_same_v<T, Mlp>) {
          return l.output(z);
        } else {
          return l.scores(z);
        }
      },
      m.learned);
}

inline Prediction predict(const TrainedModel& m, const Matrix& x) {
  Prediction p;
  p.values.reserve(x.size());
  for (const auto& r : x) {
    auto out = raw_output(m, r);
    if (m.spec.task == Task::classify) {
      const auto c = argmax_first(out);
      p.values.push_back(static_cast<double>(m.classes[c]));
      p.scores.push_back(std::move(out));
    } else {
      p.values.push_back(out[0]);
    }
  }
  return p;
}

inline Prediction predict(const TrainedModel& m, const FeatureMatrix& f) { return predict(m, f.windows); }

// ---------------------------------------------------------------------------
// Artifact

inline nlohmann::json model_to_json(const TrainedModel& m) {
  nlohmann::json learned;
  std::visit([&](const auto& l) { learned = l; }, m.learned);
  return {{"format", "neuroloop-model"},
          {"version", kModelFormatVersion},
          {"spec", spec_to_json(m.spec)},
          {"standardizer", m.standardizer},
          {"classes", m.classes},
          {"learned", learned},
          {"metadata", {{"loss_curve", m.loss_curve}, {"seed", m.spec.seed}, {"train_size", m.train_size}}}};
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "neuroloop-model") throw ValidationError("format", "not a model artifact");
  if (j.at("version").get<int>() != kModelFormatVersion)
    throw VersionError("model version " + std::to_string(j.at("version").get<int>()) + " is not supported");
  TrainedModel m;
  m.spec = spec_from_json(j.at("spec"));
  j.at("standardizer").get_to(m.standardizer);
  j.at("classes").get_to(m.classes);
  const auto& l = j.at("learned");
  switch (m.spec.kind) {
    case Kind::knn: m.learned = l.get<Knn>(); break;
    case Kind::dtree: m.learned = l.get<Tree>(); break;
    case Kind::rforest: m.learned = l.get<Forest>(); break;
    case Kind::mlp: m.learned = l.get<Mlp>(); break;
    case Kind::svm: m.learned = l.get<Svm>(); break;
  }
  j.at("metadata").at("loss_curve").get_to(m.loss_curve);
  j.at("metadata").at("train_size").get_to(m.train_size);
  return m;
}

inline void save_model(const TrainedModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << model_to_json(m).dump() << '\n';
}

inline TrainedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(1, e.what());
  }
  return model_from_json(j);
}

}  // namespace neuroloop::ml
