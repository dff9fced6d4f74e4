#include <gtest/gtest.h>

#include "neuroloop/neurosynth.hpp"

using namespace neuroloop;

namespace {

NoiseParams silent() {
  NoiseParams n;
  n.cardiac_amp = n.respiration_amp = n.mayer_amp = 0.0;
  n.drift_slope = 0.0;
  n.white_sigma = 0.0;
  n.motion_spike_rate = 0.0;
  return n;
}

// Task steps at 10 Hz starting after the 20 s baseline.
std::vector<double> task_times(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = 20.0 + 0.1 * static_cast<double>(i);
  return t;
}

OptimalityLabels labels_from(const std::vector<double>& e) {
  OptimalityLabels l;
  l.continuous = e;
  for (double x : e) {
    l.binary.push_back(x > 0.0);
    l.discrete.push_back(x > 0.0);
  }
  return l;
}

double double_gamma(double t, const HrfParams& p) {
  const auto g = [](double x, double a) { return x <= 0 ? 0.0 : std::exp((a - 1) * std::log(x) - x - std::lgamma(a)); };
  return g(t, p.peak_time + 1) - p.undershoot_ratio * g(t, p.undershoot_time + 1);
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= a.size(), mb /= b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Hrf, PeakAtSixSeconds) {
  const auto k = hrf_kernel({}, 10.0);
  const auto peak = std::max_element(k.begin(), k.end()) - k.begin();
  EXPECT_NEAR(static_cast<double>(peak), 60.0, 1.0);
  EXPECT_EQ(k[0], 0.0);
  EXPECT_EQ(*std::max_element(k.begin(), k.end()), 1.0);
  EXPECT_EQ(k.size(), 301u);
}

TEST(Hrf, ShapeMatchesDoubleGamma) {
  const HrfParams p;
  const auto k = hrf_kernel(p, 10.0);
  double top = 0.0;
  for (int i = 0; i < 300; ++i) top = std::max(top, double_gamma(i / 10.0, p));
  for (int i = 0; i < 300; ++i) EXPECT_NEAR(k[i], double_gamma(i / 10.0, p) / top, 1e-9) << i;
}

TEST(Hrf, RejectsNonsense) {
  HrfParams p;
  p.peak_time = 20.0;
  EXPECT_THROW(hrf_kernel(p, 10.0), ValidationError);
  p = {};
  p.undershoot_ratio = 1.5;
  EXPECT_THROW(hrf_kernel(p, 10.0), ValidationError);
  NoiseParams n;
  n.cardiac_hz = 6.0;
  EXPECT_THROW(validate(n, 10.0), ValidationError);
}

TEST(Synth, ZeroLabelsZeroNoiseIsFlat) {
  SynthConfig cfg;
  cfg.noise = silent();
  const auto r = synthesize(labels_from(std::vector<double>(300, 0.0)), task_times(300), cfg, 1);
  EXPECT_EQ(r.channels, 8u);
  EXPECT_EQ(r.size(), 200u + 300u);
  for (const auto& row : r.values)
    for (double v : row) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(r.baseline_span[0], 0.0);
  EXPECT_EQ(r.baseline_span[1], 20.0);
}

TEST(Synth, ImpulseGivesScaledKernel) {
  SynthConfig cfg;
  cfg.noise = silent();
  std::vector<double> e(400, 0.0);
  e[50] = 1.0;
  const auto r = synthesize(labels_from(e), task_times(400), cfg, 1);
  auto k = hrf_kernel(cfg.hrf, 10.0);
  double area = 0.0;
  for (double x : k) area += x;
  const std::size_t at = 200 + 50;
  for (std::size_t m = 0; m < cfg.channels; ++m)
    for (std::size_t n = 0; n < r.size(); ++n) {
      const double want = n >= at && n - at < k.size() ? cfg.gains[m] * k[n - at] / area : 0.0;
      EXPECT_NEAR(r.values[m][n], want, 1e-12);
    }
}

TEST(Synth, SustainedEventSettlesAtGain) {
  SynthConfig cfg;
  cfg.noise = silent();
  const auto r = synthesize(labels_from(std::vector<double>(600, 1.0)), task_times(600), cfg, 1);
  for (std::size_t m = 0; m < cfg.channels; ++m) EXPECT_NEAR(r.values[m].back(), cfg.gains[m], 1e-9);
}

TEST(Synth, CausalLinearAndQuietBaseline) {
  SynthConfig cfg;
  cfg.noise = silent();
  Rng rng(3);
  std::vector<double> e(300);
  for (auto& x : e) x = rng.uniform();
  auto half = e;
  for (auto& x : half) x *= 0.5;
  const auto a = synthesize_from_regressor(e, task_times(300), cfg, 1);
  const auto b = synthesize_from_regressor(half, task_times(300), cfg, 1);
  for (std::size_t m = 0; m < cfg.channels; ++m)
    for (std::size_t n = 0; n < a.size(); ++n) {
      EXPECT_NEAR(b.values[m][n], 0.5 * a.values[m][n], 1e-12);
      if (n < 200) EXPECT_EQ(a.values[m][n], 0.0);
    }
  // Changing late events leaves earlier samples untouched.
  auto late = e;
  for (std::size_t t = 150; t < late.size(); ++t) late[t] = 0.0;
  const auto c = synthesize_from_regressor(late, task_times(300), cfg, 1);
  for (std::size_t m = 0; m < cfg.channels; ++m)
    for (std::size_t n = 0; n < 200 + 150; ++n) EXPECT_EQ(c.values[m][n], a.values[m][n]);
}

TEST(Synth, DeterministicPerSeed) {
  const SynthConfig cfg;
  const auto l = labels_from(std::vector<double>(100, 0.3));
  EXPECT_EQ(synthesize(l, task_times(100), cfg, 9).values, synthesize(l, task_times(100), cfg, 9).values);
  EXPECT_NE(synthesize(l, task_times(100), cfg, 9).values, synthesize(l, task_times(100), cfg, 10).values);
}

TEST(Synth, SnrSweepCorrelation) {
  SynthConfig cfg;
  cfg.noise = silent();
  cfg.channels = 1;
  cfg.gains = {1.0};
  cfg.source = RegressorSource::binary;
  double mean_corr = 0.0;
  int above = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(derive_seed(s, 1));
    // Alternating blocks of events and rest.
    std::vector<double> e(600, 0.0);
    std::size_t t = 0;
    while (t < e.size()) {
      const std::size_t on = 50 + rng.below(100), off = 50 + rng.below(100);
      for (std::size_t i = t; i < std::min(e.size(), t + on); ++i) e[i] = 1.0;
      t += on + off;
    }
    const auto clean = synthesize(labels_from(e), task_times(600), cfg, s);
    auto noisy_cfg = cfg;
    noisy_cfg.noise.white_sigma = 0.25 * cfg.gains[0];
    const auto noisy = synthesize(labels_from(e), task_times(600), noisy_cfg, s);
    const std::vector<double> a(clean.values[0].begin() + 200, clean.values[0].end());
    const std::vector<double> b(noisy.values[0].begin() + 200, noisy.values[0].end());
    const double c = correlation(a, b);
    mean_corr += c / 100.0;
    above += c > 0.7;
  }
  EXPECT_GT(mean_corr, 0.7);
  EXPECT_GE(above, 95);
}

TEST(Synth, ValidationErrors) {
  SynthConfig cfg;
  cfg.gains = {1.0, 2.0};
  EXPECT_THROW(synthesize(labels_from({0.1}), task_times(1), cfg, 1), ValidationError);
  EXPECT_THROW(synthesize(OptimalityLabels{}, {}, SynthConfig{}, 1), ValidationError);
  std::vector<double> early = {5.0};
  EXPECT_THROW(synthesize(labels_from({0.1}), early, SynthConfig{}, 1), ValidationError);
}

TEST(Synth, RegressorSources) {
  OptimalityLabels l;
  l.binary = {0, 1, 1};
  l.discrete = {0, 1, 2};
  l.continuous = {0.2, 0.5, 4.0};
  EXPECT_EQ(event_regressor(l, RegressorSource::binary), (std::vector<double>{0, 1, 1}));
  EXPECT_EQ(event_regressor(l, RegressorSource::continuous, 2.0), (std::vector<double>{0.1, 0.25, 1.0}));
}

TEST(Synth, OnlineMatchesBatch) {
  const SynthConfig cfg;
  Rng rng(5);
  std::vector<double> e(200);
  for (auto& x : e) x = rng.uniform();
  const auto batch = synthesize_from_regressor(e, task_times(200), cfg, 4);
  const auto grid = neural_grid(task_times(200).back(), 10.0);
  const auto held = hold_on_grid(e, task_times(200), grid, 10.0);
  OnlineSynthesizer online(cfg, 4);
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto v = online.next(held[n]);
    for (std::size_t m = 0; m < cfg.channels; ++m) EXPECT_EQ(v[m], batch.values[m][n]);
  }
}

TEST(Synth, HoldOnGridBruteForce) {
  const std::vector<double> vals = {1, 2, 3};
  const std::vector<double> times = {0.3, 0.5, 0.52};
  const auto grid = neural_grid(1.0, 10.0);
  const auto held = hold_on_grid(vals, times, grid, 10.0);
  for (std::size_t n = 0; n < grid.size(); ++n) {
    double want = 0.0;
    for (std::size_t j = 0; j < times.size(); ++j)
      if (times[j] <= grid[n] + 0.025) want = vals[j];
    EXPECT_EQ(held[n], want) << n;
  }
}
