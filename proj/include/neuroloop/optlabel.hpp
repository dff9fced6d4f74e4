#pragma once

// Multi-policy action agreement.
//
// Every recorded action is scored against each member of the near-optimal
// bank with a KL divergence (or its Gaussian closed form for continuous
// actions); the bank-average error drives point-of-failure detection and the
// binary / discrete / continuous label systems.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "dataset.hpp"
#include "envsim.hpp"
#include "policybank.hpp"

namespace neuroloop {

inline constexpr double kDefaultEpsFloor = 1e-6;

namespace label_detail {

inline void check_distribution(const std::vector<double>& p, const char* name) {
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x))
      throw ValidationError(name, "entries must be finite and nonnegative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError(name, "entries must sum to 1");
}

inline std::vector<double> floored(const std::vector<double>& p, double eps) {
  std::vector<double> out(p.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += (out[i] = std::max(p[i], eps));
  for (double& x : out) x /= sum;
  return out;
}

}  // namespace label_detail

/// D_KL(action || policy) in nats after flooring both vectors at `eps_floor`
/// and renormalising.
inline double kl_error(const std::vector<double>& action, const std::vector<double>& policy,
                       double eps_floor = kDefaultEpsFloor) {
  if (action.size() != policy.size()) throw UsageError("kl_error: length mismatch");
  if (action.size() < 2) throw UsageError("kl_error: need at least two actions");
  label_detail::check_distribution(action, "action_dist");
  label_detail::check_distribution(policy, "policy_dist");
  const auto a = label_detail::floored(action, eps_floor);
  const auto p = label_detail::floored(policy, eps_floor);
  double kl = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) kl += a[i] * std::log(a[i] / p[i]);
  return std::max(kl, 0.0);
}

/// KL divergence between isotropic Gaussians of common `sigma` centred on
/// the two action vectors: |a - pi|^2 / (2 sigma^2).
inline double continuous_error(const std::vector<double>& action,
                               const std::vector<double>& policy_action, double sigma) {
  if (action.size() != policy_action.size())
    throw UsageError("continuous_error: dimension mismatch");
  if (!(sigma > 0.0)) throw ValidationError("sigma", "must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < action.size(); ++i) {
    const double d = action[i] - policy_action[i];
    sq += d * d;
  }
  return sq / (2.0 * sigma * sigma);
}

struct ErrorTrace {
  std::vector<double> mean;                    // E-bar(t)
  std::vector<std::vector<double>> per_policy; // [k][t]
};

/// Error of one recorded action against policy `p` at observation `obs`.
inline double action_error(const Policy& p, Domain domain, const std::vector<double>& obs,
                           const std::vector<double>& action, const LabelThresholds& th,
                           const EnvConfig& cfg = {}) {
  EnvState s;
  s.domain = domain;
  s.obs = obs;
  if (is_discrete(domain)) return kl_error(action, policy_distribution(p, s, cfg), th.eps_floor);
  return continuous_error(action, mean_action(p, s, cfg), th.sigma);
}

inline ErrorTrace error_trace(const TaskRecord& task, const PolicyBank& bank,
                              const LabelThresholds& th, const EnvConfig& cfg = {}) {
  if (bank.domain != task.domain) throw UsageError("bank domain differs from trace domain");
  if (bank.policies.empty()) throw UsageError("empty policy bank");
  const std::size_t n = task.size(), k = bank.size();
  ErrorTrace out;
  out.per_policy.assign(k, std::vector<double>(n, 0.0));
  out.mean.assign(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      try {
        out.per_policy[j][t] =
            action_error(bank.policies[j], task.domain, task.states[t], task.actions[t], th, cfg);
      } catch (const ValidationError& e) {
        throw ValidationError(e.field(), std::string(e.what()) + " (t=" + std::to_string(t) +
                                             ", k=" + std::to_string(j) + ")");
      }
      sum += out.per_policy[j][t];
    }
    out.mean[t] = sum / static_cast<double>(k);
  }
  return out;
}

/// Index (relative to `errors`) of the earliest step that starts a run of
/// `pof_window` consecutive steps with error above theta_1. When the episode
/// ended in failure, a run cut short by the episode end also counts.
inline std::optional<std::size_t> point_of_failure_index(const std::vector<double>& errors,
                                                         const LabelThresholds& th,
                                                         bool ends_in_failure = false) {
  const auto w = static_cast<std::size_t>(th.pof_window);
  std::size_t run = 0;
  for (std::size_t t = 0; t < errors.size(); ++t) {
    run = errors[t] > th.suboptimal ? run + 1 : 0;
    if (run == w) return t + 1 - w;
  }
  if (ends_in_failure && run > 0) return errors.size() - run;
  return std::nullopt;
}

/// Point of failure of one episode as a timestamp.
inline std::optional<double> point_of_failure(const std::vector<double>& errors,
                                              const std::vector<double>& timestamps,
                                              const LabelThresholds& th,
                                              bool ends_in_failure = false) {
  const auto idx = point_of_failure_index(errors, th, ends_in_failure);
  if (!idx) return std::nullopt;
  return timestamps.at(*idx);
}

/// Labels for a whole task record from its error trace. Episodes are
/// scored independently: B switches to 1 at the point of failure and stays
/// there; after it V is 2 where the error exceeds theta_2 and 1 otherwise.
inline OptimalityLabels make_labels(const TaskRecord& task, const ErrorTrace& errors,
                                    const LabelThresholds& th) {
  validate(th);
  const std::size_t n = task.size();
  if (errors.mean.size() != n) throw UsageError("error trace length differs from task record");
  OptimalityLabels l;
  l.binary.assign(n, 0);
  l.discrete.assign(n, 0);
  l.continuous = errors.mean;
  for (const auto& r : episode_ranges(task.episode_ids)) {
    const std::vector<double> ep(errors.mean.begin() + static_cast<std::ptrdiff_t>(r.begin),
                                 errors.mean.begin() + static_cast<std::ptrdiff_t>(r.end));
    EpisodeFailure f{r.episode, std::nullopt, std::nullopt};
    const bool lost = task.rewards[r.end - 1] < 0.0;
    if (const auto pof = point_of_failure_index(ep, th, lost)) {
      const std::size_t start = r.begin + *pof;
      double sum = 0.0;
      for (std::size_t t = start; t < r.end; ++t) {
        l.binary[t] = 1;
        l.discrete[t] = errors.mean[t] > th.worst_case ? 2 : 1;
        sum += errors.mean[t];
      }
      f.point_of_failure = task.timestamps[start];
      f.degree_of_failure = sum / static_cast<double>(r.end - start);
    }
    l.episodes.push_back(f);
  }
  return l;
}

inline OptimalityLabels label_task(const TaskRecord& task, const PolicyBank& bank,
                                   const LabelThresholds& th, const EnvConfig& cfg = {}) {
  return make_labels(task, error_trace(task, bank, th, cfg), th);
}

/// Labels using the thresholds the bank stores for the record's action type.
inline OptimalityLabels label_task(const TaskRecord& task, const PolicyBank& bank,
                                   const EnvConfig& cfg = {}) {
  const auto* th = bank.thresholds_for(representation_for(task.domain, task.condition));
  if (!th) throw ValidationError("bank.thresholds", "bank has not been calibrated");
  return label_task(task, bank, *th, cfg);
}

// ---------------------------------------------------------------------------
// Threshold calibration

struct CalibrationOptions {
  int episodes_per_policy = 6;
  int state_stride = 2;           // keep every n-th on-policy state
  int pof_window = 10;
  double eps_floor = kDefaultEpsFloor;
  double sigma = 0.4;             // 20% of the [-1, 1] action range
  double suboptimal_percentile = 95.0;
  double worst_case_percentile = 50.0;
  double action_noise = 0.05;
  InjectionConfig injection;      // the sub-optimal selector being separated from worst-case
};

/// Linear-interpolated percentile (q in [0, 100]) of an unsorted sample.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw UsageError("percentile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Calibrates label thresholds on on-policy states of every bank member.
///
/// theta_1 is the `suboptimal_percentile` of disagreement between bank
/// members. theta_2 is the geometric mean of the `worst_case_percentile`
/// errors of the sub-optimal selector and of the worst-case selector
/// (argmin action / reversed command), so it splits the two injected modes.
inline LabelThresholds calibrate_thresholds(const PolicyBank& bank, ActionRepresentation rep,
                                            std::uint64_t seed, const EnvConfig& cfg = {},
                                            const CalibrationOptions& opt = {}) {
  if (bank.policies.empty()) throw UsageError("empty policy bank");
  LabelThresholds th;
  th.pof_window = opt.pof_window;
  th.eps_floor = opt.eps_floor;
  th.sigma = opt.sigma;
  th.suboptimal_percentile = opt.suboptimal_percentile;
  th.worst_case_percentile = opt.worst_case_percentile;

  const auto& inj = opt.injection;
  const std::size_t k = bank.size();
  std::vector<double> agree, sub, worst;
  Rng rng(derive_seed(seed, 0xCA1BULL));
  const auto noisy = [&](std::vector<double> a) {
    for (double& x : a) x = std::clamp(x + opt.action_noise * rng.normal(), -1.0, 1.0);
    return a;
  };
  for (std::size_t i = 0; i < k; ++i) {
    for (int e = 0; e < opt.episodes_per_policy; ++e) {
      const auto ep = run_policy_episode(bank.policies[i], derive_seed(seed, i, 2 * e),
                                         derive_seed(seed, i, 2 * e + 1), cfg, true,
                                         opt.action_noise);
      for (std::size_t t = 0; t < ep.states.size(); t += static_cast<std::size_t>(opt.state_stride)) {
        const EnvState& s = ep.states[t];
        std::vector<std::vector<double>> pis(k);
        for (std::size_t j = 0; j < k; ++j) pis[j] = policy_distribution(bank.policies[j], s, cfg);
        std::vector<double> own, mid, bad;
        if (rep == ActionRepresentation::continuous) {
          own = noisy(pis[i]);
          if (inj.continuous == ContinuousMechanism::goal_shift) {
            const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
            mid = noisy(mean_action_toward(bank.policies[i], s,
                                           s.obs[2] + inj.goal_offset * std::cos(angle),
                                           s.obs[3] + inj.goal_offset * std::sin(angle), cfg));
          } else {
            mid = pis[i];
            for (double& x : mid) x += inj.sigma_inj * rng.normal();
            mid = noisy(mid);
          }
          bad = pis[i];
          for (double& x : bad) x = -x;
          bad = noisy(bad);
        } else {
          own = pis[i];
          mid = suboptimal_distribution(pis[i], inj.mass_shift);
          if (rep == ActionRepresentation::one_hot) {
            own = one_hot(rng.categorical(own), own.size());
            mid = one_hot(rng.categorical(mid), mid.size());
          }
          bad = worst_case_distribution(pis[i]);
        }
        for (std::size_t j = 0; j < k; ++j) {
          const auto err = [&](const std::vector<double>& a) {
            return rep == ActionRepresentation::continuous ? continuous_error(a, pis[j], th.sigma)
                                                           : kl_error(a, pis[j], th.eps_floor);
          };
          // A member's own distribution agrees with itself trivially.
          if (j != i || rep != ActionRepresentation::distribution) agree.push_back(err(own));
          sub.push_back(err(mid));
          worst.push_back(err(bad));
        }
      }
    }
  }
  const double floor_theta = 1e-3;
  th.suboptimal = agree.empty() ? floor_theta
                                : std::max(percentile(agree, opt.suboptimal_percentile), floor_theta);
  th.suboptimal_selector_level = percentile(sub, opt.worst_case_percentile);
  th.worst_selector_level = percentile(worst, opt.worst_case_percentile);
  th.worst_case = std::max(
      std::sqrt(std::max(th.suboptimal_selector_level, floor_theta) * th.worst_selector_level),
      2.0 * th.suboptimal);
  validate(th);
  return th;
}

/// Fills bank.thresholds for every action representation its domain uses.
inline void calibrate_bank(PolicyBank& bank, std::uint64_t seed, const EnvConfig& cfg = {},
                           const CalibrationOptions& opt = {}) {
  bank.thresholds.clear();
  if (is_discrete(bank.domain)) {
    bank.thresholds.emplace_back("distribution",
                                 calibrate_thresholds(bank, ActionRepresentation::distribution,
                                                      seed, cfg, opt));
    bank.thresholds.emplace_back("one_hot", calibrate_thresholds(bank, ActionRepresentation::one_hot,
                                                                 seed, cfg, opt));
  } else {
    bank.thresholds.emplace_back("continuous",
                                 calibrate_thresholds(bank, ActionRepresentation::continuous, seed,
                                                      cfg, opt));
  }
}

}  // namespace neuroloop
