#pragma once

// Synthetic demonstration generation and dataset-level feature extraction.

#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "envsim.hpp"
#include "featwin.hpp"
#include "neurosynth.hpp"
#include "optlabel.hpp"
#include "policybank.hpp"
#include "preproc.hpp"

namespace neuroloop {

struct GenOptions {
  Domain domain = Domain::reach;
  Condition condition = Condition::passive;
  std::size_t demonstrations = 10;
  std::size_t bank_size = 10;
  std::uint64_t seed = 0;
  InjectionConfig injection{0.3, InjectionMode::mixed};
  SynthConfig synth;
  EnvConfig env;
  BankOptions bank;
  CalibrationOptions calibration;
  /// Regressor scale as a multiple of theta_2 (continuous source only).
  double regressor_theta2_multiple = 2.0;
  unsigned jobs = 1;
};

/// Ground truth the generator knows and the labeller must recover.
struct InjectionTruth {
  std::optional<double> switch_time;
  std::optional<InjectionMode> mode;
  std::size_t member = 0;
  Outcome outcome = Outcome::ongoing;
};

struct GeneratedDemo {
  Demonstration demo;
  InjectionTruth truth;
};

inline std::string participant_name(std::size_t i) {
  std::ostringstream os;
  os << "synthetic-" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

inline PolicyBank make_calibrated_bank(const GenOptions& opt) {
  auto bank = build_bank(opt.domain, opt.bank_size, derive_seed(opt.seed, 0xBA4BULL), opt.env, opt.bank);
  auto cal = opt.calibration;
  cal.injection = opt.injection;
  calibrate_bank(bank, derive_seed(opt.seed, 0xCA1ULL), opt.env, cal);
  return bank;
}

/// Synthetic config with the regressor scaled for this bank's thresholds.
inline SynthConfig synth_for(const GenOptions& opt, const LabelThresholds& th) {
  SynthConfig s = opt.synth;
  if (s.source == RegressorSource::continuous) s.continuous_scale = opt.regressor_theta2_multiple * th.worst_case;
  return s;
}

inline nlohmann::json calibration_block(const PolicyBank& bank, ActionRepresentation rep,
                                        const LabelThresholds& th, const SynthConfig& synth) {
  return {{"representation", to_string(rep)},
          {"thresholds", to_json(th)},
          {"bank", {{"domain", to_string(bank.domain)}, {"seed", bank.seed}, {"size", bank.size()}}},
          {"synth", {{"source", to_string(synth.source)}, {"continuous_scale", synth.continuous_scale},
                     {"white_sigma", synth.noise.white_sigma}, {"gains", synth.gains}}}};
}

/// Demonstration i of a generated dataset: one watch (or simulated play)
/// episode after the baseline, labelled and paired with synthetic signals.
inline GeneratedDemo generate_demo(const PolicyBank& bank, const GenOptions& opt, std::size_t i) {
  const std::uint64_t s = derive_seed(opt.seed, 0xDE30ULL, i);
  const auto rep = representation_for(opt.domain, opt.condition);
  const auto* th = bank.thresholds_for(rep);
  if (!th) throw ValidationError("bank.thresholds", "bank has no thresholds for " + std::string(to_string(rep)));
  WatchOptions w;
  w.episode_id = 0;
  w.t0 = opt.synth.baseline_s;
  w.record_one_hot = opt.condition == Condition::active && is_discrete(opt.domain);
  auto trace = run_watch_episode(bank, opt.injection, s, w, opt.env);
  trace.task.condition = opt.condition;
  GeneratedDemo g;
  g.truth = {trace.switch_time, trace.injected_mode, trace.member, trace.outcome};
  auto& d = g.demo;
  d.participant_id = participant_name(i);
  d.domain = opt.domain;
  d.condition = opt.condition;
  d.rng_seed = s;
  d.labels = label_task(trace.task, bank, *th, opt.env);
  const SynthConfig synth = synth_for(opt, *th);
  d.neural = synthesize(d.labels, trace.task.timestamps, synth, derive_seed(s, 0x5A17ULL));
  d.task = std::move(trace.task);
  d.calibration = calibration_block(bank, rep, *th, synth);
  nlohmann::json truth = {{"member", g.truth.member}, {"outcome", to_string(g.truth.outcome)}};
  truth["switch_time"] = g.truth.switch_time ? nlohmann::json(*g.truth.switch_time) : nlohmann::json();
  truth["mode"] = g.truth.mode ? nlohmann::json(to_string(*g.truth.mode)) : nlohmann::json();
  d.calibration["injection"] = truth;
  return g;
}

inline std::vector<GeneratedDemo> generate_dataset(const PolicyBank& bank, const GenOptions& opt) {
  std::vector<GeneratedDemo> out(opt.demonstrations);
  parallel_for(out.size(), opt.jobs, [&](std::size_t i) { out[i] = generate_demo(bank, opt, i); });
  return out;
}

/// Recomputes a demonstration's labels against `bank` and re-records the
/// calibration metadata. Neural data is left untouched.
inline void relabel(Demonstration& d, const PolicyBank& bank, const EnvConfig& cfg = {}) {
  if (bank.domain != d.domain) throw ValidationError("bank.domain", "bank domain differs from the demonstration");
  const auto rep = representation_for(d.domain, d.condition);
  const auto* th = bank.thresholds_for(rep);
  if (!th) throw ValidationError("bank.thresholds", "bank has not been calibrated");
  d.labels = label_task(d.task, bank, *th, cfg);
  nlohmann::json block = {{"representation", to_string(rep)},
                          {"thresholds", to_json(*th)},
                          {"bank", {{"domain", to_string(bank.domain)}, {"seed", bank.seed}, {"size", bank.size()}}}};
  for (const auto& key : {"synth", "injection"})
    if (d.calibration.contains(key)) block[key] = d.calibration[key];
  d.calibration = block;
}

struct FeatureOptions {
  FilterSpec filter;
  WindowSpec window;
  LabelKind labels = LabelKind::binary;
  double min_baseline_s = kDefaultBaselineSeconds;
};

/// Preprocessed, windowed features of one demonstration; windows are
/// grouped under the participant id.
inline FeatureMatrix demo_features(const Demonstration& d, const FeatureOptions& opt) {
  const auto pre = preprocess(d.neural, opt.filter, opt.min_baseline_s);
  return extract(pre.record, d.task, d.labels, opt.window, opt.labels, d.participant_id);
}

/// Post-baseline duration needed for at least one window.
inline bool long_enough(const Demonstration& d, const WindowSpec& w) {
  const auto need = static_cast<std::size_t>(std::llround(w.duration_s * d.neural.sample_rate_hz));
  return d.neural.size() - d.neural.first_post_baseline() >= need;
}

/// Features of every demonstration, concatenated in input order. When
/// `skipped` is given, demonstrations shorter than one window are left out
/// and their ids recorded there; otherwise they are an error.
inline FeatureMatrix dataset_features(const std::vector<Demonstration>& demos,
                                      const FeatureOptions& opt, unsigned jobs = 1,
                                      std::vector<std::string>* skipped = nullptr) {
  std::vector<FeatureMatrix> parts(demos.size());
  std::vector<char> keep(demos.size(), 1);
  parallel_for(demos.size(), jobs, [&](std::size_t i) {
    if (skipped && !long_enough(demos[i], opt.window)) {
      keep[i] = 0;
      return;
    }
    parts[i] = demo_features(demos[i], opt);
  });
  FeatureMatrix all;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (keep[i]) all.append(parts[i]);
    else skipped->push_back(demos[i].participant_id);
  }
  return all;
}

/// Demonstration files of a directory, sorted by name.
inline std::vector<std::string> demo_files(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError(dir + " is not a directory");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

inline std::string demo_file_name(std::size_t i) {
  std::ostringstream os;
  os << "demo_" << std::setw(4) << std::setfill('0') << i << ".jsonl";
  return os.str();
}

}  // namespace neuroloop
