#pragma once

// Shared fixtures for the test binaries.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "neuroloop/neuroloop.hpp"

namespace testing_support {

using namespace neuroloop;

/// A random Demonstration satisfying every documented invariant.
inline Demonstration random_demo(std::uint64_t seed) {
  Rng rng(seed);
  Demonstration d;
  d.participant_id = "p" + std::to_string(rng.below(100000));
  d.domain = static_cast<Domain>(rng.below(3));
  d.condition = rng.bernoulli(0.5) ? Condition::active : Condition::passive;
  d.rng_seed = rng.next();
  auto& n = d.neural;
  n.channels = 1 + rng.below(4);
  n.sample_rate_hz = 10.0;
  const std::size_t task_len = 1 + rng.below(60);
  const std::size_t samples = 200 + task_len + rng.below(5);
  for (std::size_t i = 0; i < samples; ++i) n.timestamps.push_back(static_cast<double>(i) / 10.0);
  n.values.assign(n.channels, {});
  for (auto& row : n.values)
    for (std::size_t i = 0; i < samples; ++i) {
      double v = rng.normal() * std::pow(10.0, rng.uniform(-8.0, 8.0));
      if (rng.below(50) == 0) v = 0.0;
      row.push_back(v);
    }
  n.baseline_span = {0.0, 20.0};

  auto& t = d.task;
  t.domain = d.domain;
  t.condition = d.condition;
  const std::size_t obs = 4;
  const std::size_t width = action_width(d.domain);
  std::int64_t ep = static_cast<std::int64_t>(rng.below(3));
  std::vector<double> state(obs);
  for (auto& x : state) x = rng.normal();
  for (std::size_t i = 0; i < task_len; ++i) {
    t.timestamps.push_back(static_cast<double>(200 + i) / 10.0);
    t.episode_ids.push_back(ep);
    t.states.push_back(state);
    std::vector<double> a(width);
    if (is_discrete(d.domain)) {
      if (rng.bernoulli(0.5)) {
        a[rng.below(width)] = 1.0;
      } else {
        double sum = 0.0;
        for (auto& x : a) sum += (x = rng.uniform());
        for (auto& x : a) x /= sum;
      }
    } else {
      for (auto& x : a) x = rng.uniform(-1.0, 1.0);
    }
    t.actions.push_back(a);
    t.rewards.push_back(rng.normal());
    for (auto& x : state) x = rng.normal() * 10.0;
    t.next_states.push_back(state);
    if (rng.below(20) == 0) {
      ++ep;
      for (auto& x : state) x = rng.normal();
    }
  }

  auto& l = d.labels;
  const auto ranges = episode_ranges(t.episode_ids);
  l.binary.assign(task_len, 0);
  l.discrete.assign(task_len, 0);
  for (std::size_t i = 0; i < task_len; ++i) l.continuous.push_back(std::abs(rng.normal()));
  for (const auto& r : ranges) {
    EpisodeFailure f{r.episode, std::nullopt, std::nullopt};
    if (rng.bernoulli(0.5)) {
      const std::size_t start = r.begin + rng.below(r.end - r.begin);
      for (std::size_t i = start; i < r.end; ++i) {
        l.binary[i] = 1;
        l.discrete[i] = 1 + static_cast<int>(rng.below(2));
      }
      f.point_of_failure = t.timestamps[start];
      f.degree_of_failure = rng.uniform(0.0, 3.0);
    }
    l.episodes.push_back(f);
  }
  if (rng.bernoulli(0.5)) d.calibration = {{"note", "random"}, {"k", rng.below(10)}};
  return d;
}

/// Temporary directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("neuroloop-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testing_support
