#pragma once

// Deterministic desk-scale re-creations of the three task domains.
//
// All dynamics run on a fixed 0.1 s step. EnvState carries everything needed
// to continue an episode (including the seed from which future obstacles are
// derived), so step() is a pure function of (state, action, config).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"

namespace neuroloop {

enum class Outcome { ongoing, success, failure };

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::ongoing: return "ongoing";
    case Outcome::success: return "success";
    case Outcome::failure: return "failure";
  }
  return "?";
}

struct FlappyConfig {
  double height = 10.0;
  double gravity = 6.0;          // u/s^2
  double flap_velocity = 2.4;    // vertical speed set by "up"
  double max_fall_speed = 4.0;
  double scroll_speed = 2.0;     // u/s
  double pipe_spacing = 6.0;
  double pipe_width = 0.8;
  double gap_height = 3.0;
  double gap_low = 2.5;          // range of gap centres
  double gap_high = 7.5;
  double first_pipe = 4.0;
  double start_height = 5.0;
};

struct LanderConfig {
  double gravity = 1.0;
  double main_thrust = 2.0;      // "up"
  double side_thrust = 1.0;      // "left" / "right"
  double start_x = 6.0;          // |x0| <= start_x
  double start_y_low = 25.0;
  double start_y_high = 35.0;
  double pad_half_width = 1.5;
  double safe_vy = 1.0;
  double safe_vx = 1.0;
  double x_limit = 15.0;
  double y_limit = 50.0;
};

struct ReachConfig {
  double arena = 10.0;           // effector and goal stay in [-arena, arena]^2
  double step_size = 0.03;       // displacement per step at |action| = 1
  double start_spread = 2.0;
  double goal_distance_low = 4.0;
  double goal_distance_high = 7.0;
  double tolerance = 0.15;       // success radius
};

struct EnvConfig {
  double dt = 0.1;
  int max_steps = 600;
  FlappyConfig flappy;
  LanderConfig lander;
  ReachConfig reach;
};

struct ActionSpec {
  enum class Kind { discrete, continuous } kind = Kind::discrete;
  std::size_t n = 0;                 // discrete: action count; continuous: dimension
  std::vector<std::string> names;    // discrete only
  std::vector<double> low, high;     // continuous only

  bool discrete() const { return kind == Kind::discrete; }
};

inline ActionSpec action_spec(Domain d) {
  switch (d) {
    case Domain::flappy:
      return {ActionSpec::Kind::discrete, 2, {"up", "down"}, {}, {}};
    case Domain::lander:
      return {ActionSpec::Kind::discrete, 4, {"up", "left", "right", "down"}, {}, {}};
    case Domain::reach:
      return {ActionSpec::Kind::continuous, 2, {}, {-1.0, -1.0}, {1.0, 1.0}};
  }
  throw UsageError("unknown domain");
}

/// Observation layouts:
///   flappy: [height, vertical velocity, gap centre - height, distance to next pipe]
///   lander: [x, y, vx, vy]
///   reach:  [effector x, effector y, goal x, goal y]
/// `hidden` carries progress counters (flappy: pipe index, gaps passed).
struct EnvState {
  Domain domain = Domain::flappy;
  std::vector<double> obs;
  std::vector<double> hidden;
  std::uint64_t seed = 0;
  int step_index = 0;
  bool terminal = false;
  Outcome outcome = Outcome::ongoing;

  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool clamped = false;  // continuous action was outside the bounds
};

namespace env_detail {

inline double flappy_gap_center(const FlappyConfig& c, std::uint64_t seed, std::uint64_t pipe) {
  const double u = static_cast<double>(derive_seed(seed, 0xF1A99ULL, pipe) >> 11) * 0x1.0p-53;
  return c.gap_low + (c.gap_high - c.gap_low) * u;
}

inline void finish(EnvState& s, Outcome o) {
  s.terminal = true;
  s.outcome = o;
}

}  // namespace env_detail

inline EnvState reset(Domain domain, std::uint64_t seed, const EnvConfig& cfg = {}) {
  EnvState s;
  s.domain = domain;
  s.seed = seed;
  Rng rng(derive_seed(seed, 0x5EEDULL));
  switch (domain) {
    case Domain::flappy: {
      const auto& c = cfg.flappy;
      const double gap = env_detail::flappy_gap_center(c, seed, 0);
      s.obs = {c.start_height, 0.0, gap - c.start_height, c.first_pipe};
      s.hidden = {0.0, 0.0};
      break;
    }
    case Domain::lander: {
      const auto& c = cfg.lander;
      s.obs = {rng.uniform(-c.start_x, c.start_x), rng.uniform(c.start_y_low, c.start_y_high),
               0.0, 0.0};
      break;
    }
    case Domain::reach: {
      const auto& c = cfg.reach;
      const double ex = rng.uniform(-c.start_spread, c.start_spread);
      const double ey = rng.uniform(-c.start_spread, c.start_spread);
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double dist = rng.uniform(c.goal_distance_low, c.goal_distance_high);
      const double gx = std::clamp(ex + dist * std::cos(angle), -c.arena, c.arena);
      const double gy = std::clamp(ey + dist * std::sin(angle), -c.arena, c.arena);
      s.obs = {ex, ey, gx, gy};
      break;
    }
  }
  return s;
}

namespace env_detail {

inline void check_steppable(const EnvState& s) {
  if (s.terminal) throw UsageError("step() on a terminal state");
}

inline StepResult step_flappy(const EnvState& s, std::size_t action, const EnvConfig& cfg) {
  const auto& c = cfg.flappy;
  StepResult r{s, 0.0, false};
  auto& o = r.state.obs;
  double y = o[0], vy = o[1], dist = o[3];
  auto pipe = static_cast<std::uint64_t>(s.hidden[0]);
  if (action == 0)
    vy = c.flap_velocity;
  else
    vy = std::max(vy - c.gravity * cfg.dt, -c.max_fall_speed);
  y += vy * cfg.dt;
  dist -= c.scroll_speed * cfg.dt;
  double center = flappy_gap_center(c, s.seed, pipe);
  r.state.step_index = s.step_index + 1;

  const bool inside_pipe = dist <= 0.0 && dist >= -c.pipe_width;
  const bool outside_gap = std::abs(y - center) > 0.5 * c.gap_height;
  if (y < 0.0 || y > c.height || (inside_pipe && outside_gap)) {
    r.reward = -1.0;
    finish(r.state, Outcome::failure);
  } else if (dist < -c.pipe_width) {
    r.reward = 1.0;
    ++pipe;
    dist += c.pipe_spacing;
    center = flappy_gap_center(c, s.seed, pipe);
    r.state.hidden[1] += 1.0;
  }
  r.state.hidden[0] = static_cast<double>(pipe);
  o = {y, vy, center - y, dist};
  if (!r.state.terminal && r.state.step_index >= cfg.max_steps) finish(r.state, Outcome::success);
  return r;
}

inline StepResult step_lander(const EnvState& s, std::size_t action, const EnvConfig& cfg) {
  const auto& c = cfg.lander;
  StepResult r{s, 0.0, false};
  auto& o = r.state.obs;
  double x = o[0], y = o[1], vx = o[2], vy = o[3];
  double ax = 0.0, ay = -c.gravity;
  switch (action) {
    case 0: ay += c.main_thrust; break;
    case 1: ax -= c.side_thrust; break;
    case 2: ax += c.side_thrust; break;
    default: break;  // "down": engines off
  }
  vx += ax * cfg.dt;
  vy += ay * cfg.dt;
  x += vx * cfg.dt;
  y += vy * cfg.dt;
  r.state.step_index = s.step_index + 1;
  if (y <= 0.0) {
    const bool soft = std::abs(vy) <= c.safe_vy && std::abs(vx) <= c.safe_vx;
    const bool on_pad = std::abs(x) <= c.pad_half_width;
    y = 0.0;
    r.reward = soft && on_pad ? 1.0 : -1.0;
    finish(r.state, soft && on_pad ? Outcome::success : Outcome::failure);
  } else if (std::abs(x) > c.x_limit || y > c.y_limit ||
             r.state.step_index >= cfg.max_steps) {
    r.reward = -1.0;
    finish(r.state, Outcome::failure);
  }
  o = {x, y, vx, vy};
  return r;
}

inline StepResult step_reach(const EnvState& s, std::span<const double> action,
                             const EnvConfig& cfg) {
  const auto& c = cfg.reach;
  StepResult r{s, 0.0, false};
  auto& o = r.state.obs;
  double ax = action[0], ay = action[1];
  if (!std::isfinite(ax) || !std::isfinite(ay)) throw UsageError("non-finite reach action");
  if (std::abs(ax) > 1.0 || std::abs(ay) > 1.0) {
    r.clamped = true;
    ax = std::clamp(ax, -1.0, 1.0);
    ay = std::clamp(ay, -1.0, 1.0);
  }
  // Speed is capped at step_size per step regardless of direction.
  const double norm = std::hypot(ax, ay);
  if (norm > 1.0) {
    ax /= norm;
    ay /= norm;
  }
  o[0] = std::clamp(o[0] + c.step_size * ax, -c.arena, c.arena);
  o[1] = std::clamp(o[1] + c.step_size * ay, -c.arena, c.arena);
  r.state.step_index = s.step_index + 1;
  if (std::hypot(o[2] - o[0], o[3] - o[1]) <= c.tolerance) {
    r.reward = 1.0;
    finish(r.state, Outcome::success);
  } else if (r.state.step_index >= cfg.max_steps) {
    r.reward = -1.0;
    finish(r.state, Outcome::failure);
  }
  return r;
}

}  // namespace env_detail

/// Discrete step. `action` indexes action_spec(domain).names.
inline StepResult step(const EnvState& s, std::size_t action, const EnvConfig& cfg = {}) {
  env_detail::check_steppable(s);
  const auto spec = action_spec(s.domain);
  if (!spec.discrete()) throw UsageError("discrete action given to a continuous domain");
  if (action >= spec.n) throw UsageError("action index out of range");
  return s.domain == Domain::flappy ? env_detail::step_flappy(s, action, cfg)
                                    : env_detail::step_lander(s, action, cfg);
}

/// Step with an action vector: a distribution / one-hot for discrete domains
/// (its argmax is applied), a command vector for continuous ones.
inline StepResult step(const EnvState& s, std::span<const double> action,
                       const EnvConfig& cfg = {}) {
  env_detail::check_steppable(s);
  const auto spec = action_spec(s.domain);
  if (action.size() != spec.n) throw UsageError("action vector has the wrong width");
  if (spec.discrete()) {
    const auto best = std::max_element(action.begin(), action.end()) - action.begin();
    return step(s, static_cast<std::size_t>(best), cfg);
  }
  return env_detail::step_reach(s, action, cfg);
}

/// Action applied when nobody supplies one: flappy "down", lander "down"
/// (engines off), reach zero velocity.
inline std::vector<double> noop_action(Domain d) {
  switch (d) {
    case Domain::flappy: return {0.0, 1.0};
    case Domain::lander: return {0.0, 0.0, 0.0, 1.0};
    case Domain::reach: return {0.0, 0.0};
  }
  return {};
}

}  // namespace neuroloop
