#pragma once

// Near-optimal policy ensembles and "watch" agents with injected
// sub-optimality.
//
// Each domain has a hand-designed parametric controller. A bank is K copies
// with jittered gains, every member verified to succeed in at least 95% of
// evaluation episodes. Watch agents follow one designated member and, with
// probability p per episode, switch for the rest of that episode into a
// sub-optimal or worst-case selection rule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "dataset.hpp"
#include "envsim.hpp"

namespace neuroloop {

struct Policy {
  enum class Kind { controller, tabular };

  Domain domain = Domain::flappy;
  Kind kind = Kind::controller;
  /// Controller gains (layout per domain, see controller_preferences) or,
  /// for tabular policies, the flattened Q table.
  std::vector<double> params;
  double temperature = 1.0;

  bool operator==(const Policy&) const = default;
};

/// Numerically safe softmax of preferences / temperature. Every entry is
/// strictly positive.
inline std::vector<double> softmax(const std::vector<double>& prefs, double temperature) {
  if (!(temperature > 0.0)) throw ValidationError("temperature", "must be positive");
  const double top = *std::max_element(prefs.begin(), prefs.end());
  std::vector<double> out(prefs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < prefs.size(); ++i) {
    // Clamp the exponent so no entry underflows to exactly zero.
    out[i] = std::exp(std::max((prefs[i] - top) / temperature, -700.0));
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::size_t argmin(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

inline std::vector<double> one_hot(std::size_t index, std::size_t n) {
  std::vector<double> v(n, 0.0);
  v.at(index) = 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// Controllers

/// Base controller gains per domain.
///   flappy: [gain, lookahead_s, height_offset]
///   lander: [vertical_gain, lateral_gain, descent_rate, centering_rate]
///   reach:  [gain]
inline Policy base_controller(Domain d) {
  switch (d) {
    case Domain::flappy: return {d, Policy::Kind::controller, {4.0, 0.3, -0.5}, 0.25};
    case Domain::lander: return {d, Policy::Kind::controller, {6.0, 4.0, 0.08, 0.3}, 0.5};
    case Domain::reach: return {d, Policy::Kind::controller, {2.0}, 1.0};
  }
  throw UsageError("unknown domain");
}

namespace policy_detail {

/// Discretisation shared by training and lookup of tabular flappy policies.
struct FlappyGrid {
  static constexpr int offset_bins = 24;
  static constexpr int velocity_bins = 8;
  static constexpr std::size_t states = offset_bins * velocity_bins;

  static std::size_t index(const std::vector<double>& obs) {
    const int o = std::clamp(static_cast<int>(std::floor((obs[2] + 6.0) / 0.5)), 0, offset_bins - 1);
    const int v = std::clamp(static_cast<int>(std::floor((obs[1] + 4.0) / 0.8)), 0, velocity_bins - 1);
    return static_cast<std::size_t>(o * velocity_bins + v);
  }
};

inline std::vector<double> controller_preferences(const Policy& p, const EnvState& s,
                                                  const EnvConfig& cfg) {
  const auto& o = s.obs;
  switch (p.domain) {
    case Domain::flappy: {
      const double gain = p.params[0], look = p.params[1], offset = p.params[2];
      const double y = o[0], vy = o[1], target = o[0] + o[2] + offset;
      const double predicted = y + vy * look - 0.5 * cfg.flappy.gravity * look * look;
      return {gain * (target - predicted), 0.0};
    }
    case Domain::lander: {
      const double kv = p.params[0], kh = p.params[1], descent = p.params[2],
                   centering = p.params[3];
      const double x = o[0], y = o[1], vx = o[2], vy = o[3];
      const double vy_target = -std::clamp(descent * y, 0.3, 1.5);
      const double vx_target = std::clamp(-centering * x, -1.0, 1.0);
      const double ev = vy_target - vy;  // > 0: falling too fast
      const double eh = vx_target - vx;  // > 0: should move right
      return {kv * ev, -kh * eh, kh * eh, -kv * ev};
    }
    case Domain::reach: break;
  }
  throw UsageError("preferences requested for a continuous domain");
}

}  // namespace policy_detail

/// Action preferences for discrete domains (higher is better).
inline std::vector<double> preferences(const Policy& p, const EnvState& s,
                                       const EnvConfig& cfg = {}) {
  if (p.domain != s.domain) throw UsageError("policy/state domain mismatch");
  if (!is_discrete(p.domain)) throw UsageError("preferences requested for a continuous domain");
  if (p.kind == Policy::Kind::tabular) {
    const std::size_t n = action_width(p.domain);
    const std::size_t row = policy_detail::FlappyGrid::index(s.obs);
    return {p.params.begin() + static_cast<std::ptrdiff_t>(row * n),
            p.params.begin() + static_cast<std::ptrdiff_t>((row + 1) * n)};
  }
  return policy_detail::controller_preferences(p, s, cfg);
}

/// Mean action of a continuous-domain policy toward `goal`, inside [-1,1]^2.
inline std::vector<double> mean_action_toward(const Policy& p, const EnvState& s, double goal_x,
                                              double goal_y, const EnvConfig& cfg = {}) {
  const double gain = p.params[0];
  // Gain is expressed per step of travel so the controller is scale-free.
  const double scale = gain / (cfg.reach.step_size * 20.0);
  double ax = scale * (goal_x - s.obs[0]);
  double ay = scale * (goal_y - s.obs[1]);
  const double norm = std::hypot(ax, ay);
  if (norm > 1.0) {
    ax /= norm;
    ay /= norm;
  }
  return {ax, ay};
}

inline std::vector<double> mean_action(const Policy& p, const EnvState& s,
                                       const EnvConfig& cfg = {}) {
  if (p.domain != s.domain) throw UsageError("policy/state domain mismatch");
  if (is_discrete(p.domain)) throw UsageError("mean action requested for a discrete domain");
  return mean_action_toward(p, s, s.obs[2], s.obs[3], cfg);
}

/// pi_k(s): softmax of preferences (discrete) or the mean action (continuous).
inline std::vector<double> policy_distribution(const Policy& p, const EnvState& s,
                                               const EnvConfig& cfg = {}) {
  if (p.domain != s.domain) throw UsageError("policy/state domain mismatch");
  return is_discrete(p.domain) ? softmax(preferences(p, s, cfg), p.temperature)
                               : mean_action(p, s, cfg);
}

// ---------------------------------------------------------------------------
// Selection rules used after the switch

/// Moves `shift` of the top action's mass onto the other actions in
/// proportion to their inverse base probability.
inline std::vector<double> suboptimal_distribution(const std::vector<double>& pi, double shift) {
  const std::size_t top = argmax(pi);
  std::vector<double> out = pi;
  const double moved = shift * pi[top];
  double total = 0.0;
  std::vector<double> w(pi.size(), 0.0);
  for (std::size_t i = 0; i < pi.size(); ++i)
    if (i != top) total += (w[i] = 1.0 / std::max(pi[i], 1e-12));
  out[top] -= moved;
  for (std::size_t i = 0; i < pi.size(); ++i)
    if (i != top) out[i] += moved * w[i] / total;
  return out;
}

/// Deterministic selector of the least-preferred action.
inline std::vector<double> worst_case_distribution(const std::vector<double>& pi) {
  return one_hot(argmin(pi), pi.size());
}

// ---------------------------------------------------------------------------
// Label thresholds live with the bank they were calibrated against.

enum class ActionRepresentation { distribution, one_hot, continuous };

inline std::string_view to_string(ActionRepresentation r) {
  switch (r) {
    case ActionRepresentation::distribution: return "distribution";
    case ActionRepresentation::one_hot: return "one_hot";
    case ActionRepresentation::continuous: return "continuous";
  }
  return "?";
}

inline ActionRepresentation representation_for(Domain d, Condition c) {
  if (!is_discrete(d)) return ActionRepresentation::continuous;
  return c == Condition::passive ? ActionRepresentation::distribution
                                 : ActionRepresentation::one_hot;
}

struct LabelThresholds {
  double suboptimal = 0.1;     // theta_1
  double worst_case = 1.0;     // theta_2
  int pof_window = 5;          // consecutive steps above theta_1
  double eps_floor = 1e-6;
  double sigma = 0.4;          // continuous-domain error scale
  double suboptimal_percentile = 95.0;
  double worst_case_percentile = 50.0;
  // Calibration levels theta_2 was derived from.
  double suboptimal_selector_level = 0.0;
  double worst_selector_level = 0.0;

  bool operator==(const LabelThresholds&) const = default;
};

inline void validate(const LabelThresholds& t) {
  if (!(t.suboptimal > 0.0 && t.suboptimal < t.worst_case))
    throw ValidationError("thresholds", "need 0 < theta_1 < theta_2");
  if (t.pof_window < 1) throw ValidationError("thresholds.pof_window", "must be >= 1");
  if (!(t.eps_floor > 0.0 && t.eps_floor <= 1e-3))
    throw ValidationError("thresholds.eps_floor", "must lie in (0, 1e-3]");
  if (!(t.sigma > 0.0)) throw ValidationError("thresholds.sigma", "must be positive");
}

struct PolicyBank {
  Domain domain = Domain::flappy;
  std::uint64_t seed = 0;
  std::vector<Policy> policies;
  /// Keyed by ActionRepresentation name; filled by calibrate_thresholds().
  std::vector<std::pair<std::string, LabelThresholds>> thresholds;

  std::size_t size() const { return policies.size(); }

  const LabelThresholds* thresholds_for(ActionRepresentation r) const {
    for (const auto& [name, t] : thresholds)
      if (name == to_string(r)) return &t;
    return nullptr;
  }

  bool operator==(const PolicyBank&) const = default;
};

// ---------------------------------------------------------------------------
// Episodes

struct PolicyEpisode {
  Outcome outcome = Outcome::ongoing;
  int steps = 0;
  std::vector<EnvState> states;  // visited states (pre-action), filled on request
};

/// Sampled rollout of one policy with no injection.
inline PolicyEpisode run_policy_episode(const Policy& p, std::uint64_t env_seed,
                                        std::uint64_t sample_seed, const EnvConfig& cfg = {},
                                        bool keep_states = false,
                                        double action_noise = 0.05) {
  Rng rng(sample_seed);
  EnvState s = reset(p.domain, env_seed, cfg);
  PolicyEpisode ep;
  while (!s.terminal) {
    if (keep_states) ep.states.push_back(s);
    if (is_discrete(p.domain)) {
      s = step(s, rng.categorical(policy_distribution(p, s, cfg)), cfg).state;
    } else {
      auto a = mean_action(p, s, cfg);
      for (double& x : a) x = std::clamp(x + action_noise * rng.normal(), -1.0, 1.0);
      s = step(s, std::span<const double>(a), cfg).state;
    }
    ++ep.steps;
  }
  ep.outcome = s.outcome;
  return ep;
}

struct BankOptions {
  int eval_episodes = 100;
  double success_bar = 0.95;
  int max_rejections = 50;
  double jitter = 0.1;  // relative jitter of each controller gain
};

inline double success_rate(const Policy& p, std::uint64_t seed, int episodes,
                           const EnvConfig& cfg = {}) {
  int ok = 0;
  for (int e = 0; e < episodes; ++e) {
    const auto ep = run_policy_episode(p, derive_seed(seed, 7, static_cast<std::uint64_t>(e)),
                                       derive_seed(seed, 8, static_cast<std::uint64_t>(e)), cfg);
    ok += ep.outcome == Outcome::success;
  }
  return static_cast<double>(ok) / episodes;
}

/// Parameters perturbed per bank member. Lander descent and centering rates
/// shift the controller's set-points, so only its gains are jittered.
inline std::vector<double*> jittered_gains(Domain d, std::vector<double>& params) {
  switch (d) {
    case Domain::flappy: return {&params[0], &params[1]};
    case Domain::lander: return {&params[0], &params[1]};
    case Domain::reach: return {&params[0]};
  }
  return {};
}

/// K distinct near-optimal policies. Member 0 is the unjittered base
/// controller; the rest jitter every gain by up to +/- `jitter` (relative).
inline PolicyBank build_bank(Domain domain, std::size_t k, std::uint64_t seed,
                             const EnvConfig& cfg = {}, const BankOptions& opt = {}) {
  if (k < 1) throw ValidationError("K", "bank needs at least one policy");
  PolicyBank bank;
  bank.domain = domain;
  bank.seed = seed;
  const Policy base = base_controller(domain);
  int rejections = 0;
  std::uint64_t attempt = 0;
  while (bank.policies.size() < k) {
    Policy cand = base;
    if (!bank.policies.empty()) {
      Rng rng(derive_seed(seed, 100, attempt));
      for (auto& g : jittered_gains(domain, cand.params))
        *g *= 1.0 + opt.jitter * rng.uniform(-1.0, 1.0);
      // The flappy height offset is jittered absolutely.
      if (domain == Domain::flappy)
        cand.params[2] = base.params[2] + opt.jitter * rng.uniform(-1.0, 1.0);
      cand.temperature *= 1.0 + opt.jitter * rng.uniform(-1.0, 1.0);
    }
    const double rate = success_rate(cand, derive_seed(seed, 200, attempt), opt.eval_episodes, cfg);
    ++attempt;
    if (rate >= opt.success_bar &&
        std::find(bank.policies.begin(), bank.policies.end(), cand) == bank.policies.end()) {
      bank.policies.push_back(std::move(cand));
    } else if (++rejections >= opt.max_rejections) {
      throw BankError("bank construction for " + std::string(to_string(domain)) + " failed after " +
                      std::to_string(rejections) + " rejected candidates");
    }
  }
  return bank;
}

// ---------------------------------------------------------------------------
// Watch agents

enum class InjectionMode { suboptimal, worst_case, mixed };
enum class ContinuousMechanism { additive_noise, goal_shift };

inline std::string_view to_string(InjectionMode m) {
  switch (m) {
    case InjectionMode::suboptimal: return "suboptimal";
    case InjectionMode::worst_case: return "worst_case";
    case InjectionMode::mixed: return "mixed";
  }
  return "?";
}

inline InjectionMode parse_injection_mode(std::string_view s) {
  if (s == "suboptimal") return InjectionMode::suboptimal;
  if (s == "worst_case") return InjectionMode::worst_case;
  if (s == "mixed") return InjectionMode::mixed;
  throw UsageError("unknown injection mode '" + std::string(s) + "'");
}

struct InjectionConfig {
  double p_switch = 0.3;
  /// `mixed` picks suboptimal or worst_case with equal odds per switched episode.
  InjectionMode mode = InjectionMode::suboptimal;
  double mass_shift = 0.7;  // fraction of the top action's mass moved (discrete)
  ContinuousMechanism continuous = ContinuousMechanism::goal_shift;
  double sigma_inj = 0.6;    // additive_noise
  double goal_offset = 3.0;  // goal_shift distance
};

inline void validate(const InjectionConfig& c) {
  if (!(c.p_switch >= 0.0 && c.p_switch <= 1.0))
    throw ValidationError("p_switch", "must lie in [0, 1]");
  if (!(c.mass_shift > 0.0 && c.mass_shift <= 1.0))
    throw ValidationError("mass_shift", "must lie in (0, 1]");
  if (c.continuous == ContinuousMechanism::additive_noise && !(c.sigma_inj > 0.0))
    throw ValidationError("sigma_inj", "must be positive");
}

struct RunTrace {
  TaskRecord task;
  std::optional<double> switch_time;
  std::optional<std::size_t> switch_step;
  /// suboptimal or worst_case when switched; absent otherwise.
  std::optional<InjectionMode> injected_mode;
  std::size_t member = 0;
  Outcome outcome = Outcome::ongoing;
};

struct WatchOptions {
  std::int64_t episode_id = 0;
  double t0 = kDefaultBaselineSeconds;  // timestamp of the first step
  std::optional<std::size_t> member;    // designated bank member; drawn when absent
  /// Record sampled one-hot actions instead of the selection distribution
  /// (a simulated human player).
  bool record_one_hot = false;
  double action_noise = 0.05;  // continuous sampling noise around the mean
};

namespace policy_detail {

struct EpisodePlan {
  bool switches = false;
  double switch_u = 0.0;
  InjectionMode mode = InjectionMode::suboptimal;
  std::size_t member = 0;
};

/// One rollout; `switch_step` = -1 for a clean episode.
inline RunTrace rollout(const PolicyBank& bank, const InjectionConfig& inj, std::uint64_t seed,
                        const WatchOptions& opt, const EnvConfig& cfg, const EpisodePlan& plan,
                        long switch_step) {
  const Policy& pol = bank.policies.at(plan.member);
  const Domain d = bank.domain;
  Rng sampler(derive_seed(seed, 3));
  Rng noise(derive_seed(seed, 4));
  EnvState s = reset(d, derive_seed(seed, 2), cfg);
  RunTrace tr;
  tr.member = plan.member;
  tr.task.domain = d;
  tr.task.condition = opt.record_one_hot ? Condition::active : Condition::passive;
  double shift_x = 0.0, shift_y = 0.0;
  std::size_t t = 0;
  while (!s.terminal) {
    const bool injected = switch_step >= 0 && static_cast<long>(t) >= switch_step;
    if (injected && static_cast<long>(t) == switch_step) {
      tr.switch_step = t;
      tr.switch_time = opt.t0 + static_cast<double>(t) * cfg.dt;
      tr.injected_mode = plan.mode;
      const double angle = noise.uniform(0.0, 2.0 * std::numbers::pi);
      shift_x = inj.goal_offset * std::cos(angle);
      shift_y = inj.goal_offset * std::sin(angle);
    }
    std::vector<double> recorded;
    StepResult next;
    if (is_discrete(d)) {
      const auto pi = policy_distribution(pol, s, cfg);
      std::vector<double> sel = pi;
      if (injected)
        sel = plan.mode == InjectionMode::worst_case ? worst_case_distribution(pi)
                                                     : suboptimal_distribution(pi, inj.mass_shift);
      const std::size_t a = sampler.categorical(sel);
      recorded = opt.record_one_hot ? one_hot(a, sel.size()) : sel;
      next = step(s, a, cfg);
    } else {
      std::vector<double> mean;
      if (injected && plan.mode == InjectionMode::suboptimal &&
          inj.continuous == ContinuousMechanism::goal_shift)
        mean = mean_action_toward(pol, s, s.obs[2] + shift_x, s.obs[3] + shift_y, cfg);
      else
        mean = mean_action(pol, s, cfg);
      if (injected && plan.mode == InjectionMode::worst_case)
        for (double& x : mean) x = -x;
      recorded = mean;
      for (double& x : recorded) x += opt.action_noise * sampler.normal();
      if (injected && plan.mode == InjectionMode::suboptimal &&
          inj.continuous == ContinuousMechanism::additive_noise)
        for (double& x : recorded) x += inj.sigma_inj * noise.normal();
      for (double& x : recorded) x = std::clamp(x, -1.0, 1.0);
      next = step(s, std::span<const double>(recorded), cfg);
    }
    tr.task.timestamps.push_back(opt.t0 + static_cast<double>(t) * cfg.dt);
    tr.task.states.push_back(s.obs);
    tr.task.actions.push_back(std::move(recorded));
    tr.task.rewards.push_back(next.reward);
    tr.task.next_states.push_back(next.state.obs);
    tr.task.episode_ids.push_back(opt.episode_id);
    s = std::move(next.state);
    ++t;
  }
  tr.outcome = s.outcome;
  return tr;
}

}  // namespace policy_detail

/// One watch episode. With probability p_switch the agent switches into
/// the injected selection rule at a step drawn uniformly over the length the
/// episode would have had without the switch, and stays there.
inline RunTrace run_watch_episode(const PolicyBank& bank, const InjectionConfig& inj,
                                  std::uint64_t seed, const WatchOptions& opt = {},
                                  const EnvConfig& cfg = {}) {
  if (bank.policies.empty()) throw UsageError("empty policy bank");
  validate(inj);
  Rng decide(derive_seed(seed, 1));
  policy_detail::EpisodePlan plan;
  plan.switches = decide.bernoulli(inj.p_switch);
  plan.switch_u = decide.uniform();
  plan.mode = inj.mode;
  if (plan.mode == InjectionMode::mixed)
    plan.mode = decide.bernoulli(0.5) ? InjectionMode::worst_case : InjectionMode::suboptimal;
  plan.member = opt.member ? *opt.member : static_cast<std::size_t>(decide.below(bank.size()));
  if (plan.member >= bank.size()) throw UsageError("designated member outside the bank");

  auto clean = policy_detail::rollout(bank, inj, seed, opt, cfg, plan, -1);
  if (!plan.switches) return clean;
  const auto length = static_cast<double>(clean.task.size());
  const long at = std::min(static_cast<long>(plan.switch_u * length),
                           static_cast<long>(clean.task.size()) - 1);
  return policy_detail::rollout(bank, inj, seed, opt, cfg, plan, at);
}

// ---------------------------------------------------------------------------
// Tabular Q-learning fallback for flappy (a cross-check on the controllers)

struct QLearningOptions {
  int episodes = 4000;
  double alpha = 0.1;
  double gamma = 0.98;
  double epsilon = 0.1;
  double temperature = 0.05;
};

inline Policy train_flappy_q(std::uint64_t seed, const EnvConfig& cfg = {},
                             const QLearningOptions& opt = {}) {
  using Grid = policy_detail::FlappyGrid;
  const std::size_t n = 2;
  Policy p{Domain::flappy, Policy::Kind::tabular, std::vector<double>(Grid::states * n, 0.0),
           opt.temperature};
  Rng rng(derive_seed(seed, 0x0AULL));
  for (int e = 0; e < opt.episodes; ++e) {
    EnvState s = reset(Domain::flappy, derive_seed(seed, 0x0BULL, static_cast<std::uint64_t>(e)), cfg);
    while (!s.terminal) {
      const std::size_t row = Grid::index(s.obs);
      double* q = p.params.data() + row * n;
      const std::size_t a = rng.bernoulli(opt.epsilon) ? rng.below(n) : (q[1] > q[0] ? 1 : 0);
      const auto r = step(s, a, cfg);
      double target = r.reward;
      if (!r.state.terminal) {
        const double* q2 = p.params.data() + Grid::index(r.state.obs) * n;
        target += opt.gamma * std::max(q2[0], q2[1]);
      }
      q[a] += opt.alpha * (target - q[a]);
      s = r.state;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const LabelThresholds& t) {
  return {{"theta1", t.suboptimal},
          {"theta2", t.worst_case},
          {"pof_window", t.pof_window},
          {"eps_floor", t.eps_floor},
          {"sigma", t.sigma},
          {"theta1_percentile", t.suboptimal_percentile},
          {"theta2_percentile", t.worst_case_percentile},
          {"suboptimal_selector_level", t.suboptimal_selector_level},
          {"worst_selector_level", t.worst_selector_level}};
}

inline LabelThresholds thresholds_from_json(const nlohmann::json& j) {
  LabelThresholds t;
  t.suboptimal = j.at("theta1").get<double>();
  t.worst_case = j.at("theta2").get<double>();
  t.pof_window = j.at("pof_window").get<int>();
  t.eps_floor = j.at("eps_floor").get<double>();
  t.sigma = j.at("sigma").get<double>();
  t.suboptimal_percentile = j.value("theta1_percentile", 95.0);
  t.worst_case_percentile = j.value("theta2_percentile", 50.0);
  t.suboptimal_selector_level = j.value("suboptimal_selector_level", 0.0);
  t.worst_selector_level = j.value("worst_selector_level", 0.0);
  validate(t);
  return t;
}

inline nlohmann::json to_json(const PolicyBank& bank) {
  nlohmann::json pols = nlohmann::json::array();
  for (const auto& p : bank.policies)
    pols.push_back({{"kind", p.kind == Policy::Kind::controller ? "controller" : "tabular"},
                    {"params", p.params},
                    {"temperature", p.temperature}});
  nlohmann::json th = nlohmann::json::object();
  for (const auto& [name, t] : bank.thresholds) th[name] = to_json(t);
  return {{"format", "neuroloop-bank"},
          {"version", 1},
          {"domain", to_string(bank.domain)},
          {"seed", bank.seed},
          {"policies", pols},
          {"thresholds", th}};
}

inline PolicyBank bank_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw VersionError("unsupported bank version");
    PolicyBank bank;
    bank.domain = parse_domain(j.at("domain").get<std::string>());
    bank.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& p : j.at("policies")) {
      Policy pol;
      pol.domain = bank.domain;
      pol.kind = p.at("kind").get<std::string>() == "tabular" ? Policy::Kind::tabular
                                                              : Policy::Kind::controller;
      pol.params = p.at("params").get<std::vector<double>>();
      pol.temperature = p.at("temperature").get<double>();
      bank.policies.push_back(std::move(pol));
    }
    if (j.contains("thresholds"))
      for (const auto& [name, t] : j["thresholds"].items())
        bank.thresholds.emplace_back(name, thresholds_from_json(t));
    std::sort(bank.thresholds.begin(), bank.thresholds.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return bank;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bank", e.what());
  }
}

}  // namespace neuroloop
