#pragma once

// Synthetic prefrontal hemodynamic signals.
//
// An event regressor derived from the optimality labels is convolved with a
// double-gamma haemodynamic response and mixed into each channel with a
// per-channel coupling gain, on top of physiological oscillations, drift,
// white noise and motion spikes. A 20 s event-free baseline precedes the task.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <string>
#include <vector>

#include "core.hpp"
#include "dataset.hpp"

namespace neuroloop {

struct HrfParams {
  double peak_time = 6.0;         // s
  double undershoot_time = 16.0;  // s
  double undershoot_ratio = 1.0 / 6.0;
  double duration = 30.0;         // s
};

inline void validate(const HrfParams& p) {
  if (!(p.peak_time > 0.0 && p.peak_time < p.undershoot_time))
    throw ValidationError("hrf.peak_time", "need 0 < peak_time < undershoot_time");
  if (!(p.undershoot_ratio > 0.0 && p.undershoot_ratio < 1.0))
    throw ValidationError("hrf.undershoot_ratio", "must lie in (0, 1)");
  if (!(p.duration > p.peak_time)) throw ValidationError("hrf.duration", "must exceed peak_time");
}

namespace synth_detail {

/// Gamma density with unit scale: t^(shape-1) e^-t / Gamma(shape).
inline double gamma_pdf(double t, double shape) {
  if (t <= 0.0) return 0.0;
  return std::exp((shape - 1.0) * std::log(t) - t - std::lgamma(shape));
}

}  // namespace synth_detail

/// Double-gamma impulse response sampled at `sample_rate_hz`, scaled to a
/// peak of exactly 1. The positive lobe's mode sits at peak_time.
inline std::vector<double> hrf_kernel(const HrfParams& p, double sample_rate_hz) {
  validate(p);
  if (!(sample_rate_hz > 0.0)) throw ValidationError("sample_rate_hz", "must be positive");
  const auto n = static_cast<std::size_t>(std::floor(p.duration * sample_rate_hz)) + 1;
  std::vector<double> k(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate_hz;
    k[i] = synth_detail::gamma_pdf(t, p.peak_time + 1.0) -
           p.undershoot_ratio * synth_detail::gamma_pdf(t, p.undershoot_time + 1.0);
  }
  const double peak = *std::max_element(k.begin(), k.end());
  for (double& x : k) x /= peak;
  return k;
}

struct NoiseParams {
  double cardiac_hz = 1.1, cardiac_amp = 0.1;
  double respiration_hz = 0.3, respiration_amp = 0.1;
  double mayer_hz = 0.1, mayer_amp = 0.1;
  double drift_slope = 0.002;      // units/s, random sign per channel
  double white_sigma = 0.25;
  double motion_spike_rate = 0.5;  // events/min
  double motion_spike_amp = 0.5;
  double motion_spike_decay = 2.0; // s

  static NoiseParams none() {
    return {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0};
  }
};

inline void validate(const NoiseParams& n, double sample_rate_hz) {
  const double nyquist = 0.5 * sample_rate_hz;
  for (double f : {n.cardiac_hz, n.respiration_hz, n.mayer_hz})
    if (!(f >= 0.0 && f < nyquist))
      throw ValidationError("noise", "oscillation frequencies must lie below Nyquist");
  for (double a : {n.cardiac_amp, n.respiration_amp, n.mayer_amp, n.white_sigma,
                   n.motion_spike_rate, n.motion_spike_amp})
    if (!(a >= 0.0)) throw ValidationError("noise", "amplitudes and rates must be nonnegative");
  if (!(n.motion_spike_decay > 0.0))
    throw ValidationError("noise.motion_spike_decay", "must be positive");
}

enum class RegressorSource { binary, continuous };

inline std::string_view to_string(RegressorSource s) {
  return s == RegressorSource::binary ? "binary" : "continuous";
}

inline std::vector<double> default_coupling_gains(std::size_t channels = kDefaultChannels) {
  std::vector<double> g{1.0, 0.8, -0.5, 0.3};
  g.resize(channels, 0.0);
  return g;
}

struct SynthConfig {
  std::size_t channels = kDefaultChannels;
  double sample_rate_hz = kDefaultSampleRateHz;
  double baseline_s = kDefaultBaselineSeconds;
  HrfParams hrf;
  NoiseParams noise;
  /// One gain per channel; 0 makes a channel non-responsive.
  std::vector<double> gains = default_coupling_gains();
  RegressorSource source = RegressorSource::continuous;
  /// Continuous errors are divided by this and clipped to [0, 1].
  double continuous_scale = 1.0;
};

inline void validate(const SynthConfig& c) {
  if (c.channels < 1) throw ValidationError("channels", "must be at least 1");
  if (c.gains.size() != c.channels)
    throw ValidationError("coupling.gains", "expected " + std::to_string(c.channels) +
                                                " gains, got " + std::to_string(c.gains.size()));
  if (!(c.sample_rate_hz > 0.0)) throw ValidationError("sample_rate_hz", "must be positive");
  if (!(c.baseline_s >= 0.0)) throw ValidationError("baseline_s", "must be nonnegative");
  if (!(c.continuous_scale > 0.0)) throw ValidationError("continuous_scale", "must be positive");
  validate(c.hrf);
  validate(c.noise, c.sample_rate_hz);
}

/// Per-task-step event strength in [0, 1].
inline std::vector<double> event_regressor(const OptimalityLabels& labels, RegressorSource source,
                                           double continuous_scale = 1.0) {
  std::vector<double> e(labels.size());
  for (std::size_t t = 0; t < e.size(); ++t)
    e[t] = source == RegressorSource::binary
               ? static_cast<double>(labels.binary[t])
               : std::clamp(labels.continuous[t] / continuous_scale, 0.0, 1.0);
  return e;
}

/// Incremental generator of the nuisance components for all channels.
/// Successive calls to next() yield samples 0, 1, 2, ... of the stream.
class NoiseGenerator {
 public:
  NoiseGenerator(const NoiseParams& p, std::size_t channels, double sample_rate_hz,
                 std::uint64_t seed)
      : p_(p), sr_(sample_rate_hz), rng_(derive_seed(seed, 0x4015EULL)) {
    Rng setup(derive_seed(seed, 0x5E7ULL));
    channels_.resize(channels);
    for (auto& c : channels_) {
      for (double& ph : c.phase) ph = setup.uniform(0.0, 2.0 * std::numbers::pi);
      c.drift_sign = setup.bernoulli(0.5) ? 1.0 : -1.0;
    }
  }

  std::vector<double> next() {
    const double t = static_cast<double>(n_++) / sr_;
    const double spike_p = p_.motion_spike_rate / 60.0 / sr_;
    const double decay = std::exp(-1.0 / (sr_ * p_.motion_spike_decay));
    std::vector<double> out(channels_.size());
    for (std::size_t m = 0; m < channels_.size(); ++m) {
      auto& c = channels_[m];
      const double two_pi_t = 2.0 * std::numbers::pi * t;
      double v = p_.cardiac_amp * std::sin(two_pi_t * p_.cardiac_hz + c.phase[0]) +
                 p_.respiration_amp * std::sin(two_pi_t * p_.respiration_hz + c.phase[1]) +
                 p_.mayer_amp * std::sin(two_pi_t * p_.mayer_hz + c.phase[2]) +
                 c.drift_sign * p_.drift_slope * t;
      // Draw every stream every sample so the sequence does not depend on
      // which components are switched on.
      const double white = rng_.normal();
      const bool spike = rng_.uniform() < spike_p;
      const double spike_sign = rng_.bernoulli(0.5) ? 1.0 : -1.0;
      c.spike = c.spike * decay + (spike ? spike_sign * p_.motion_spike_amp : 0.0);
      v += p_.white_sigma * white + c.spike;
      out[m] = v;
    }
    return out;
  }

 private:
  struct Channel {
    double phase[3] = {0.0, 0.0, 0.0};
    double drift_sign = 1.0;
    double spike = 0.0;
  };
  NoiseParams p_;
  double sr_;
  Rng rng_;
  std::vector<Channel> channels_;
  std::uint64_t n_ = 0;
};

/// Causal convolution with a unit-area kernel: a sustained regressor of 1
/// settles at 1, so coupling gains are in signal units.
class HemodynamicFilter {
 public:
  HemodynamicFilter(const HrfParams& p, double sample_rate_hz) : kernel_(hrf_kernel(p, sample_rate_hz)) {
    double area = 0.0;
    for (double k : kernel_) area += k;
    for (double& k : kernel_) k /= area;
  }

  const std::vector<double>& kernel() const { return kernel_; }

  /// Pushes the next regressor sample and returns the filtered value.
  double push(double e) {
    history_.push_front(e);
    if (history_.size() > kernel_.size()) history_.pop_back();
    double y = 0.0;
    for (std::size_t k = 0; k < history_.size(); ++k) y += kernel_[k] * history_[k];
    return y;
  }

 private:
  std::vector<double> kernel_;
  std::deque<double> history_;
};

/// Neural sample grid for a task: t_n = n / sample_rate from 0 through the
/// last task timestamp. Task timestamps are expected on the same grid.
inline std::vector<double> neural_grid(double last_time, double sample_rate_hz) {
  const auto n = static_cast<std::size_t>(std::llround(last_time * sample_rate_hz)) + 1;
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i) / sample_rate_hz;
  return t;
}

/// Regressor resampled onto neural samples by zero-order hold of the latest
/// task step at or before each sample; zero before the first step.
inline std::vector<double> hold_on_grid(const std::vector<double>& values,
                                        const std::vector<double>& value_times,
                                        const std::vector<double>& grid, double sample_rate_hz) {
  std::vector<double> out(grid.size(), 0.0);
  const double tol = 0.25 / sample_rate_hz;
  std::size_t j = 0;
  bool started = false;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    while (j < value_times.size() && value_times[j] <= grid[n] + tol) {
      ++j;
      started = true;
    }
    if (started) out[n] = values[j - 1];
  }
  return out;
}

/// Event-driven component of every channel, no noise.
inline std::vector<std::vector<double>> clean_channels(const std::vector<double>& regressor,
                                                       const SynthConfig& cfg) {
  std::vector<std::vector<double>> out(cfg.channels, std::vector<double>(regressor.size(), 0.0));
  HemodynamicFilter filter(cfg.hrf, cfg.sample_rate_hz);
  for (std::size_t n = 0; n < regressor.size(); ++n) {
    const double y = filter.push(regressor[n]);
    for (std::size_t m = 0; m < cfg.channels; ++m) out[m][n] = cfg.gains[m] * y;
  }
  return out;
}

/// Neural record for a per-task-step regressor. The baseline is
/// [0, cfg.baseline_s); the task is expected to start at cfg.baseline_s.
inline NeuralRecord synthesize_from_regressor(const std::vector<double>& regressor,
                                              const std::vector<double>& task_times,
                                              const SynthConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  if (regressor.empty() || regressor.size() != task_times.size())
    throw ValidationError("labels", "regressor must be nonempty and parallel to the task");
  if (task_times.front() < cfg.baseline_s - 1e-9)
    throw ValidationError("task.timestamps", "task starts inside the baseline");
  NeuralRecord rec;
  rec.channels = cfg.channels;
  rec.sample_rate_hz = cfg.sample_rate_hz;
  rec.timestamps = neural_grid(task_times.back(), cfg.sample_rate_hz);
  rec.baseline_span = {0.0, cfg.baseline_s};
  const auto e = hold_on_grid(regressor, task_times, rec.timestamps, cfg.sample_rate_hz);
  rec.values = clean_channels(e, cfg);
  NoiseGenerator noise(cfg.noise, cfg.channels, cfg.sample_rate_hz, seed);
  for (std::size_t n = 0; n < rec.size(); ++n) {
    const auto v = noise.next();
    for (std::size_t m = 0; m < cfg.channels; ++m) rec.values[m][n] += v[m];
  }
  return rec;
}

inline NeuralRecord synthesize(const OptimalityLabels& labels,
                               const std::vector<double>& task_times, const SynthConfig& cfg,
                               std::uint64_t seed) {
  if (labels.size() == 0) throw ValidationError("labels", "empty label sequence");
  return synthesize_from_regressor(event_regressor(labels, cfg.source, cfg.continuous_scale),
                                   task_times, cfg, seed);
}

/// Sample-by-sample synthesiser for live sessions. Produces exactly the
/// stream synthesize_from_regressor() would for the same regressor.
class OnlineSynthesizer {
 public:
  OnlineSynthesizer(const SynthConfig& cfg, std::uint64_t seed)
      : cfg_((validate(cfg), cfg)),
        filter_(cfg.hrf, cfg.sample_rate_hz),
        noise_(cfg.noise, cfg.channels, cfg.sample_rate_hz, seed) {}

  std::vector<double> next(double regressor) {
    const double y = filter_.push(regressor);
    auto v = noise_.next();
    for (std::size_t m = 0; m < cfg_.channels; ++m) v[m] += cfg_.gains[m] * y;
    return v;
  }

  const SynthConfig& config() const { return cfg_; }

 private:
  SynthConfig cfg_;
  HemodynamicFilter filter_;
  NoiseGenerator noise_;
};

}  // namespace neuroloop
