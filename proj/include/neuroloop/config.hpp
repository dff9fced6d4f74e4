#pragma once

// TOML-style configuration for the generator constants. Supported syntax:
// `[section]` / `[section.sub]` headers, `key = value` lines, `#` comments;
// values are numbers, true/false, "strings" or [arrays of numbers].

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "envsim.hpp"
#include "neurosynth.hpp"
#include "optlabel.hpp"
#include "policybank.hpp"

namespace neuroloop {

struct PipelineConfig {
  EnvConfig env;
  SynthConfig synth;
  InjectionConfig injection{0.3, InjectionMode::mixed};
  std::size_t bank_size = 10;
  BankOptions bank;
  CalibrationOptions calibration;
  double regressor_theta2_multiple = 2.0;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Strips a trailing comment that is not inside a string.
inline std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

struct Value {
  std::string text;
  std::size_t line = 0;

  double number() const {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size() || !std::isfinite(v)) throw ParseError(line, "expected a number, got '" + text + "'");
    return v;
  }
  int integer() const {
    const double v = number();
    if (v != std::floor(v) || std::abs(v) > 2e9) throw ParseError(line, "expected an integer, got '" + text + "'");
    return static_cast<int>(v);
  }
  std::size_t count() const {
    const int v = integer();
    if (v < 0) throw ParseError(line, "expected a non-negative integer");
    return static_cast<std::size_t>(v);
  }
  bool boolean() const {
    if (text == "true") return true;
    if (text == "false") return false;
    throw ParseError(line, "expected true or false, got '" + text + "'");
  }
  std::string string() const {
    if (text.size() < 2 || text.front() != '"' || text.back() != '"')
      throw ParseError(line, "expected a quoted string, got '" + text + "'");
    return text.substr(1, text.size() - 2);
  }
  std::vector<double> numbers() const {
    if (text.size() < 2 || text.front() != '[' || text.back() != ']')
      throw ParseError(line, "expected an array, got '" + text + "'");
    std::vector<double> out;
    std::stringstream ss(text.substr(1, text.size() - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      out.push_back(Value{item, line}.number());
    }
    return out;
  }
};

}  // namespace config_detail

/// Flat "section.key" -> value map of a config text.
inline std::map<std::string, config_detail::Value> parse_config_text(std::istream& in) {
  using config_detail::trim;
  std::map<std::string, config_detail::Value> out;
  std::string line, section;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = trim(config_detail::strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(n, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ParseError(n, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(n, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError(n, "expected key = value");
    const std::string full = section.empty() ? key : section + "." + key;
    if (out.count(full)) throw ParseError(n, "duplicate key " + full);
    out[full] = {value, n};
  }
  return out;
}

/// Applies a config text on top of `base`. Unknown keys are parse errors.
inline PipelineConfig apply_config(std::istream& in, PipelineConfig base = {}) {
  using V = config_detail::Value;
  auto& c = base;
  const std::map<std::string, std::function<void(const V&)>> setters = {
      {"env.dt", [&](const V& v) { c.env.dt = v.number(); }},
      {"env.max_steps", [&](const V& v) { c.env.max_steps = v.integer(); }},
      {"env.flappy.height", [&](const V& v) { c.env.flappy.height = v.number(); }},
      {"env.flappy.gravity", [&](const V& v) { c.env.flappy.gravity = v.number(); }},
      {"env.flappy.flap_velocity", [&](const V& v) { c.env.flappy.flap_velocity = v.number(); }},
      {"env.flappy.max_fall_speed", [&](const V& v) { c.env.flappy.max_fall_speed = v.number(); }},
      {"env.flappy.scroll_speed", [&](const V& v) { c.env.flappy.scroll_speed = v.number(); }},
      {"env.flappy.pipe_spacing", [&](const V& v) { c.env.flappy.pipe_spacing = v.number(); }},
      {"env.flappy.pipe_width", [&](const V& v) { c.env.flappy.pipe_width = v.number(); }},
      {"env.flappy.gap_height", [&](const V& v) { c.env.flappy.gap_height = v.number(); }},
      {"env.flappy.gap_low", [&](const V& v) { c.env.flappy.gap_low = v.number(); }},
      {"env.flappy.gap_high", [&](const V& v) { c.env.flappy.gap_high = v.number(); }},
      {"env.flappy.first_pipe", [&](const V& v) { c.env.flappy.first_pipe = v.number(); }},
      {"env.flappy.start_height", [&](const V& v) { c.env.flappy.start_height = v.number(); }},
      {"env.lander.gravity", [&](const V& v) { c.env.lander.gravity = v.number(); }},
      {"env.lander.main_thrust", [&](const V& v) { c.env.lander.main_thrust = v.number(); }},
      {"env.lander.side_thrust", [&](const V& v) { c.env.lander.side_thrust = v.number(); }},
      {"env.lander.start_x", [&](const V& v) { c.env.lander.start_x = v.number(); }},
      {"env.lander.start_y_low", [&](const V& v) { c.env.lander.start_y_low = v.number(); }},
      {"env.lander.start_y_high", [&](const V& v) { c.env.lander.start_y_high = v.number(); }},
      {"env.lander.pad_half_width", [&](const V& v) { c.env.lander.pad_half_width = v.number(); }},
      {"env.lander.safe_vy", [&](const V& v) { c.env.lander.safe_vy = v.number(); }},
      {"env.lander.safe_vx", [&](const V& v) { c.env.lander.safe_vx = v.number(); }},
      {"env.lander.x_limit", [&](const V& v) { c.env.lander.x_limit = v.number(); }},
      {"env.lander.y_limit", [&](const V& v) { c.env.lander.y_limit = v.number(); }},
      {"env.reach.arena", [&](const V& v) { c.env.reach.arena = v.number(); }},
      {"env.reach.step_size", [&](const V& v) { c.env.reach.step_size = v.number(); }},
      {"env.reach.start_spread", [&](const V& v) { c.env.reach.start_spread = v.number(); }},
      {"env.reach.goal_distance_low", [&](const V& v) { c.env.reach.goal_distance_low = v.number(); }},
      {"env.reach.goal_distance_high", [&](const V& v) { c.env.reach.goal_distance_high = v.number(); }},
      {"env.reach.tolerance", [&](const V& v) { c.env.reach.tolerance = v.number(); }},
      {"hrf.peak_time", [&](const V& v) { c.synth.hrf.peak_time = v.number(); }},
      {"hrf.undershoot_time", [&](const V& v) { c.synth.hrf.undershoot_time = v.number(); }},
      {"hrf.undershoot_ratio", [&](const V& v) { c.synth.hrf.undershoot_ratio = v.number(); }},
      {"hrf.duration", [&](const V& v) { c.synth.hrf.duration = v.number(); }},
      {"noise.cardiac_hz", [&](const V& v) { c.synth.noise.cardiac_hz = v.number(); }},
      {"noise.cardiac_amp", [&](const V& v) { c.synth.noise.cardiac_amp = v.number(); }},
      {"noise.respiration_hz", [&](const V& v) { c.synth.noise.respiration_hz = v.number(); }},
      {"noise.respiration_amp", [&](const V& v) { c.synth.noise.respiration_amp = v.number(); }},
      {"noise.mayer_hz", [&](const V& v) { c.synth.noise.mayer_hz = v.number(); }},
      {"noise.mayer_amp", [&](const V& v) { c.synth.noise.mayer_amp = v.number(); }},
      {"noise.drift_slope", [&](const V& v) { c.synth.noise.drift_slope = v.number(); }},
      {"noise.white_sigma", [&](const V& v) { c.synth.noise.white_sigma = v.number(); }},
      {"noise.motion_spike_rate", [&](const V& v) { c.synth.noise.motion_spike_rate = v.number(); }},
      {"noise.motion_spike_amp", [&](const V& v) { c.synth.noise.motion_spike_amp = v.number(); }},
      {"noise.motion_spike_decay", [&](const V& v) { c.synth.noise.motion_spike_decay = v.number(); }},
      {"synth.channels", [&](const V& v) { c.synth.channels = v.count(); }},
      {"synth.sample_rate_hz", [&](const V& v) { c.synth.sample_rate_hz = v.number(); }},
      {"synth.baseline_s", [&](const V& v) { c.synth.baseline_s = v.number(); }},
      {"synth.regressor_theta2_multiple", [&](const V& v) { c.regressor_theta2_multiple = v.number(); }},
      {"synth.source",
       [&](const V& v) {
         const auto s = v.string();
         if (s == "binary") c.synth.source = RegressorSource::binary;
         else if (s == "continuous") c.synth.source = RegressorSource::continuous;
         else throw ParseError(v.line, "synth.source must be \"binary\" or \"continuous\"");
       }},
      {"coupling.gains", [&](const V& v) { c.synth.gains = v.numbers(); }},
      {"injection.p_switch", [&](const V& v) { c.injection.p_switch = v.number(); }},
      {"injection.mode",
       [&](const V& v) {
         try {
           c.injection.mode = parse_injection_mode(v.string());
         } catch (const UsageError& e) {
           throw ParseError(v.line, e.what());
         }
       }},
      {"injection.mass_shift", [&](const V& v) { c.injection.mass_shift = v.number(); }},
      {"injection.continuous",
       [&](const V& v) {
         const auto s = v.string();
         if (s == "goal_shift") c.injection.continuous = ContinuousMechanism::goal_shift;
         else if (s == "additive_noise") c.injection.continuous = ContinuousMechanism::additive_noise;
         else throw ParseError(v.line, "injection.continuous must be \"goal_shift\" or \"additive_noise\"");
       }},
      {"injection.sigma_inj", [&](const V& v) { c.injection.sigma_inj = v.number(); }},
      {"injection.goal_offset", [&](const V& v) { c.injection.goal_offset = v.number(); }},
      {"bank.size", [&](const V& v) { c.bank_size = v.count(); }},
      {"bank.eval_episodes", [&](const V& v) { c.bank.eval_episodes = v.integer(); }},
      {"bank.success_bar", [&](const V& v) { c.bank.success_bar = v.number(); }},
      {"bank.max_rejections", [&](const V& v) { c.bank.max_rejections = v.integer(); }},
      {"bank.jitter", [&](const V& v) { c.bank.jitter = v.number(); }},
      {"calibration.episodes_per_policy", [&](const V& v) { c.calibration.episodes_per_policy = v.integer(); }},
      {"calibration.state_stride", [&](const V& v) { c.calibration.state_stride = v.integer(); }},
      {"calibration.pof_window", [&](const V& v) { c.calibration.pof_window = v.integer(); }},
      {"calibration.eps_floor", [&](const V& v) { c.calibration.eps_floor = v.number(); }},
      {"calibration.sigma", [&](const V& v) { c.calibration.sigma = v.number(); }},
      {"calibration.suboptimal_percentile", [&](const V& v) { c.calibration.suboptimal_percentile = v.number(); }},
      {"calibration.worst_case_percentile", [&](const V& v) { c.calibration.worst_case_percentile = v.number(); }},
      {"calibration.action_noise", [&](const V& v) { c.calibration.action_noise = v.number(); }},
  };
  for (const auto& [key, value] : parse_config_text(in)) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ParseError(value.line, "unknown key " + key);
    it->second(value);
  }
  return base;
}

inline PipelineConfig load_config(const std::string& path, PipelineConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  return apply_config(in, std::move(base));
}

}  // namespace neuroloop
