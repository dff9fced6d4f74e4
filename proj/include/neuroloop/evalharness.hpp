#pragma once

// Splits, metrics, cross-condition transfer, feature-subset ablation and the
// label-shuffle control.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "featwin.hpp"
#include "learners/model.hpp"
#include "pipeline.hpp"

namespace neuroloop {

// ---------------------------------------------------------------------------
// Metrics

struct ClassMetrics {
  int label = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::size_t support = 0;
};

struct MetricsReport {
  ml::Task task = ml::Task::classify;
  std::size_t samples = 0;
  // classification
  std::vector<int> classes;
  std::vector<ClassMetrics> per_class;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  // regression
  double mse = 0.0, mae = 0.0, r2 = 0.0;
  nlohmann::json metadata = nlohmann::json::object();

  const ClassMetrics* for_class(int c) const {
    for (const auto& m : per_class)
      if (m.label == c) return &m;
    return nullptr;
  }
};

/// Per-class precision/recall/F1 with 0/0 taken as 0. Classes are the union
/// of `classes`, the true labels and the predictions.
inline MetricsReport classification_metrics(const std::vector<double>& truth,
                                            const std::vector<double>& pred,
                                            std::vector<int> classes = {}) {
  if (truth.size() != pred.size()) throw ValidationError("predictions", "length differs from labels");
  for (double v : truth) classes.push_back(static_cast<int>(std::lround(v)));
  for (double v : pred) classes.push_back(static_cast<int>(std::lround(v)));
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  MetricsReport r;
  r.task = ml::Task::classify;
  r.samples = truth.size();
  r.classes = classes;
  const std::size_t c = classes.size();
  r.confusion.assign(c, std::vector<std::size_t>(c, 0));
  auto index = [&](double v) {
    return static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), static_cast<int>(std::lround(v))) -
                                    classes.begin());
  };
  for (std::size_t i = 0; i < truth.size(); ++i) ++r.confusion[index(truth[i])][index(pred[i])];
  std::size_t trace = 0;
  double f1_sum = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t tp = r.confusion[k][k], row = 0, col = 0;
    for (std::size_t j = 0; j < c; ++j) {
      row += r.confusion[k][j];
      col += r.confusion[j][k];
    }
    ClassMetrics m;
    m.label = classes[k];
    m.support = row;
    m.precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    m.recall = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    f1_sum += m.f1;
    trace += tp;
    r.per_class.push_back(m);
  }
  r.macro_f1 = c ? f1_sum / static_cast<double>(c) : 0.0;
  r.accuracy = truth.empty() ? 0.0 : static_cast<double>(trace) / static_cast<double>(truth.size());
  return r;
}

inline MetricsReport regression_metrics(const std::vector<double>& truth, const std::vector<double>& pred) {
  if (truth.size() != pred.size()) throw ValidationError("predictions", "length differs from labels");
  if (truth.empty()) throw ValidationError("predictions", "empty evaluation set");
  MetricsReport r;
  r.task = ml::Task::regress;
  r.samples = truth.size();
  const double n = static_cast<double>(truth.size());
  double mean = 0.0;
  for (double v : truth) mean += v;
  mean /= n;
  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = pred[i] - truth[i];
    ss_res += e * e;
    abs_sum += std::abs(e);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  r.mse = ss_res / n;
  r.mae = abs_sum / n;
  r.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return r;
}

// ---------------------------------------------------------------------------
// Datasets and splits

/// Windows of one demonstration with the identifiers splits work on.
struct DemoFeatures {
  std::string demo_id;
  std::string participant_id;
  Condition condition = Condition::passive;
  FeatureMatrix features;
};

/// Features of each demonstration. `ids` default to participant ids. With
/// `skipped`, demonstrations too short for one window are left out and
/// their ids recorded.
inline std::vector<DemoFeatures> demo_feature_set(const std::vector<Demonstration>& demos,
                                                  const FeatureOptions& opt, unsigned jobs = 1,
                                                  std::vector<std::string> ids = {},
                                                  std::vector<std::string>* skipped = nullptr) {
  if (ids.empty())
    for (const auto& d : demos) ids.push_back(d.participant_id);
  if (ids.size() != demos.size()) throw UsageError("one id per demonstration required");
  {
    std::set<std::string> unique(ids.begin(), ids.end());
    if (unique.size() != ids.size()) throw ValidationError("demo_id", "demonstration ids are not unique");
  }
  std::vector<DemoFeatures> out(demos.size());
  std::vector<char> keep(demos.size(), 1);
  parallel_for(demos.size(), jobs, [&](std::size_t i) {
    if (skipped && !long_enough(demos[i], opt.window)) {
      keep[i] = 0;
      return;
    }
    out[i] = {ids[i], demos[i].participant_id, demos[i].condition, demo_features(demos[i], opt)};
  });
  std::vector<DemoFeatures> kept;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (keep[i]) kept.push_back(std::move(out[i]));
    else skipped->push_back(ids[i]);
  }
  return kept;
}

enum class SplitUnit { demonstration, participant };

inline std::string_view to_string(SplitUnit u) {
  return u == SplitUnit::demonstration ? "demonstration" : "participant";
}

struct SplitPlan {
  SplitUnit unit = SplitUnit::demonstration;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  std::optional<Condition> condition;  // unset: both
  std::vector<std::string> train_demos, test_demos;
};

/// Parses "demo:0.8" or "participant:0.75".
inline SplitPlan parse_split(const std::string& text, std::uint64_t seed = 0) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("split must look like demo:0.8");
  SplitPlan p;
  p.seed = seed;
  const std::string unit = text.substr(0, colon);
  if (unit == "demo" || unit == "demonstration") p.unit = SplitUnit::demonstration;
  else if (unit == "participant") p.unit = SplitUnit::participant;
  else throw UsageError("split unit must be demo or participant");
  try {
    p.train_fraction = std::stod(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw UsageError("bad split fraction in '" + text + "'");
  }
  if (!(p.train_fraction > 0.0 && p.train_fraction < 1.0))
    throw UsageError("split fraction must lie in (0, 1)");
  return p;
}

/// Assigns units to train/test: units are sorted, shuffled with the plan's
/// seed and the first round(fraction * n) go to training.
inline SplitPlan make_split(const std::vector<DemoFeatures>& data, SplitPlan plan) {
  std::vector<std::string> units;
  for (const auto& d : data) {
    if (plan.condition && d.condition != *plan.condition) continue;
    units.push_back(plan.unit == SplitUnit::demonstration ? d.demo_id : d.participant_id);
  }
  std::sort(units.begin(), units.end());
  units.erase(std::unique(units.begin(), units.end()), units.end());
  if (units.size() < 2) throw ValidationError("split", "need at least two units to split");
  Rng rng(derive_seed(plan.seed, 0x5B11ULL));
  rng.shuffle(units);
  auto n_train = static_cast<std::size_t>(std::llround(plan.train_fraction * static_cast<double>(units.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, units.size() - 1);
  const std::set<std::string> train_units(units.begin(), units.begin() + static_cast<std::ptrdiff_t>(n_train));
  plan.train_demos.clear();
  plan.test_demos.clear();
  for (const auto& d : data) {
    if (plan.condition && d.condition != *plan.condition) continue;
    const auto& u = plan.unit == SplitUnit::demonstration ? d.demo_id : d.participant_id;
    (train_units.count(u) ? plan.train_demos : plan.test_demos).push_back(d.demo_id);
  }
  return plan;
}

inline nlohmann::json to_json(const SplitPlan& p) {
  return {{"unit", to_string(p.unit)},
          {"train_fraction", p.train_fraction},
          {"seed", p.seed},
          {"condition", p.condition ? nlohmann::json(to_string(*p.condition)) : nlohmann::json("both")},
          {"train", p.train_demos},
          {"test", p.test_demos}};
}

/// Windows of the listed demonstrations, in dataset order.
inline FeatureMatrix gather(const std::vector<DemoFeatures>& data, const std::vector<std::string>& ids) {
  const std::set<std::string> want(ids.begin(), ids.end());
  FeatureMatrix out;
  for (const auto& d : data)
    if (want.count(d.demo_id)) {
      FeatureMatrix f = d.features;
      f.groups.assign(f.rows(), d.demo_id);
      out.append(f);
    }
  return out;
}

/// Throws if any demonstration contributes windows to both sides.
inline void assert_no_leakage(const FeatureMatrix& train, const FeatureMatrix& test) {
  const std::set<std::string> a(train.groups.begin(), train.groups.end());
  for (const auto& g : test.groups)
    if (a.count(g)) throw ValidationError("split", "demonstration " + g + " appears in train and test");
}

// ---------------------------------------------------------------------------
// Experiments

inline MetricsReport score(const ml::ModelSpec& spec, const ml::TrainedModel& model, const FeatureMatrix& test) {
  const auto pred = ml::predict(model, test);
  return spec.task == ml::Task::classify ? classification_metrics(test.labels, pred.values, model.classes)
                                         : regression_metrics(test.labels, pred.values);
}

inline MetricsReport evaluate(const ml::ModelSpec& spec, const FeatureMatrix& train, const FeatureMatrix& test) {
  if (train.rows() == 0) throw ValidationError("split.train", "no training windows");
  if (test.rows() == 0) throw ValidationError("split.test", "no test windows");
  assert_no_leakage(train, test);
  const auto model = ml::fit(spec, train);
  auto r = score(spec, model, test);
  r.metadata["model"] = ml::spec_to_json(spec);
  r.metadata["train_windows"] = train.rows();
  r.metadata["test_windows"] = test.rows();
  return r;
}

inline MetricsReport evaluate(const ml::ModelSpec& spec, const std::vector<DemoFeatures>& data,
                              const SplitPlan& split) {
  auto r = evaluate(spec, gather(data, split.train_demos), gather(data, split.test_demos));
  r.metadata["split"] = to_json(split);
  return r;
}

struct TransferReport {
  /// cells[a][b]: trained on condition a, tested on condition b
  /// (index 0 passive, 1 active).
  MetricsReport cells[2][2];
  /// Trained on the union of both training sets; tested on passive, active
  /// and both test sets.
  std::optional<MetricsReport> pooled[3];
  SplitPlan splits[2];
};

/// Each condition is split on its own; every cell tests on the held-out
/// demonstrations of the test condition, so diagonal cells never see
/// training demonstrations.
inline TransferReport transfer_matrix(const ml::ModelSpec& spec, const std::vector<DemoFeatures>& data,
                                      const SplitPlan& base, bool pooled = false) {
  bool seen[2] = {false, false};
  for (const auto& d : data) seen[d.condition == Condition::active] = true;
  if (!seen[0] || !seen[1]) throw ValidationError("dataset", "transfer needs both passive and active demonstrations");
  TransferReport t;
  for (int c = 0; c < 2; ++c) {
    SplitPlan p = base;
    p.condition = c == 0 ? Condition::passive : Condition::active;
    p.seed = derive_seed(base.seed, static_cast<std::uint64_t>(c));
    t.splits[c] = make_split(data, p);
  }
  for (int a = 0; a < 2; ++a) {
    const auto train = gather(data, t.splits[a].train_demos);
    const auto model = ml::fit(spec, train);
    for (int b = 0; b < 2; ++b) {
      const auto test = gather(data, t.splits[b].test_demos);
      assert_no_leakage(train, test);
      auto r = score(spec, model, test);
      r.metadata["model"] = ml::spec_to_json(spec);
      r.metadata["train_condition"] = a == 0 ? "passive" : "active";
      r.metadata["test_condition"] = b == 0 ? "passive" : "active";
      r.metadata["train_demos"] = t.splits[a].train_demos;
      r.metadata["test_demos"] = t.splits[b].test_demos;
      t.cells[a][b] = std::move(r);
    }
  }
  if (pooled) {
    std::vector<std::string> train_ids = t.splits[0].train_demos;
    train_ids.insert(train_ids.end(), t.splits[1].train_demos.begin(), t.splits[1].train_demos.end());
    std::vector<std::string> both = t.splits[0].test_demos;
    both.insert(both.end(), t.splits[1].test_demos.begin(), t.splits[1].test_demos.end());
    const auto train = gather(data, train_ids);
    const auto model = ml::fit(spec, train);
    const std::vector<std::string>* tests[3] = {&t.splits[0].test_demos, &t.splits[1].test_demos, &both};
    const char* names[3] = {"passive", "active", "both"};
    for (int k = 0; k < 3; ++k) {
      const auto test = gather(data, *tests[k]);
      assert_no_leakage(train, test);
      auto r = score(spec, model, test);
      r.metadata["model"] = ml::spec_to_json(spec);
      r.metadata["train_condition"] = "pooled";
      r.metadata["test_condition"] = names[k];
      r.metadata["train_demos"] = train_ids;
      r.metadata["test_demos"] = *tests[k];
      t.pooled[k] = std::move(r);
    }
  }
  return t;
}

/// Columns of `f` restricted to `subset` (which must be drawn from f's
/// statistics), keeping channel-major order.
inline FeatureMatrix select_statistics(const FeatureMatrix& f, const std::vector<Statistic>& subset) {
  std::vector<std::size_t> pos;
  for (auto s : subset) {
    const auto it = std::find(f.statistics.begin(), f.statistics.end(), s);
    if (it == f.statistics.end())
      throw ValidationError("statistics", std::string(to_string(s)) + " was not extracted");
    pos.push_back(static_cast<std::size_t>(it - f.statistics.begin()));
  }
  FeatureMatrix out = f;
  out.statistics = subset;
  const std::size_t k = f.statistics.size();
  for (std::size_t w = 0; w < f.rows(); ++w) {
    std::vector<double> r;
    r.reserve(f.channels * subset.size());
    for (std::size_t m = 0; m < f.channels; ++m)
      for (auto p : pos) r.push_back(f.windows[w][m * k + p]);
    out.windows[w] = std::move(r);
  }
  return out;
}

/// Statistic names to statistics; unknown names are a validation error.
inline std::vector<Statistic> statistics_from_names(const std::vector<std::string>& names) {
  if (names.empty()) throw ValidationError("statistics", "empty statistic subset");
  std::vector<Statistic> out;
  for (const auto& n : names) {
    try {
      out.push_back(parse_statistic(n));
    } catch (const UsageError&) {
      throw ValidationError("statistics", "unknown statistic '" + n + "'");
    }
  }
  return out;
}

struct AblationRow {
  std::vector<Statistic> statistics;
  MetricsReport report;
};

/// One evaluation per statistic subset, all on the same split.
inline std::vector<AblationRow> ablate_features(const ml::ModelSpec& spec, const std::vector<DemoFeatures>& data,
                                                const SplitPlan& split,
                                                const std::vector<std::vector<Statistic>>& subsets) {
  if (subsets.empty()) throw ValidationError("subsets", "no statistic subsets given");
  std::vector<AblationRow> rows;
  for (const auto& subset : subsets) {
    if (subset.empty()) throw ValidationError("statistics", "empty statistic subset");
    std::vector<DemoFeatures> view = data;
    for (auto& d : view) d.features = select_statistics(d.features, subset);
    auto r = evaluate(spec, view, split);
    r.metadata["statistics"] = join_statistics(subset);
    rows.push_back({subset, std::move(r)});
  }
  return rows;
}

/// Macro-F1 after permuting the training labels, once per seed.
inline std::vector<double> shuffle_control(const ml::ModelSpec& spec, const std::vector<DemoFeatures>& data,
                                           const SplitPlan& split, const std::vector<std::uint64_t>& seeds) {
  const auto train = gather(data, split.train_demos);
  const auto test = gather(data, split.test_demos);
  assert_no_leakage(train, test);
  std::vector<double> out;
  for (auto s : seeds) {
    FeatureMatrix shuffled = train;
    Rng rng(derive_seed(s, 0x5407ULL));
    rng.shuffle(shuffled.labels);
    ml::ModelSpec sp = spec;
    sp.seed = s;
    const auto model = ml::fit(sp, shuffled);
    out.push_back(score(sp, model, test).macro_f1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {{"task", to_string(r.task)}, {"samples", r.samples}, {"metadata", r.metadata}};
  if (r.task == ml::Task::classify) {
    nlohmann::json pc = nlohmann::json::array();
    for (const auto& c : r.per_class)
      pc.push_back({{"class", c.label}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1},
                    {"support", c.support}});
    j["classes"] = r.classes;
    j["per_class"] = pc;
    j["macro_f1"] = r.macro_f1;
    j["accuracy"] = r.accuracy;
    j["confusion"] = r.confusion;
  } else {
    j["mse"] = r.mse;
    j["mae"] = r.mae;
    j["r2"] = r.r2;
  }
  return j;
}

inline nlohmann::json to_json(const TransferReport& t) {
  const char* names[2] = {"passive", "active"};
  nlohmann::json grid = nlohmann::json::object();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) grid[std::string(names[a]) + "->" + names[b]] = to_json(t.cells[a][b]);
  nlohmann::json j = {{"grid", grid}, {"splits", {to_json(t.splits[0]), to_json(t.splits[1])}}};
  if (t.pooled[0]) {
    const char* tests[3] = {"passive", "active", "both"};
    for (int k = 0; k < 3; ++k) j["pooled"][tests[k]] = to_json(*t.pooled[k]);
  }
  return j;
}

inline std::string text_table(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  if (r.task == ml::Task::regress) {
    os << "mse " << r.mse << "  mae " << r.mae << "  r2 " << r.r2 << "  (n=" << r.samples << ")\n";
    return os.str();
  }
  os << "class  precision  recall  f1     support\n";
  for (const auto& c : r.per_class)
    os << std::setw(5) << c.label << "  " << std::setw(9) << c.precision << "  " << std::setw(6) << c.recall << "  "
       << std::setw(5) << c.f1 << "  " << c.support << '\n';
  os << "macro-F1 " << r.macro_f1 << "  accuracy " << r.accuracy << "  (n=" << r.samples << ")\n";
  return os.str();
}

}  // namespace neuroloop
