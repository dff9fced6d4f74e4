#pragma once

// Live session state machine: fixed-tick environment clock, human or bank
// actions, online neural generation (or CSV replay) and packaging into a
// Demonstration. Transport lives in server.hpp.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "../dataset.hpp"
#include "../envsim.hpp"
#include "../neurosynth.hpp"
#include "../optlabel.hpp"
#include "../pipeline.hpp"
#include "../policybank.hpp"

namespace neuroloop::sessiond {

enum class Phase { created, calibrating, running, ended };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::created: return "created";
    case Phase::calibrating: return "calibrating";
    case Phase::running: return "running";
    case Phase::ended: return "ended";
  }
  return "?";
}

inline constexpr double kMinDurationS = 30.0;
inline constexpr double kMaxDurationS = 600.0;

struct SessionConfig {
  Domain domain = Domain::flappy;
  Condition condition = Condition::active;
  double duration_s = 180.0;
  std::uint64_t seed = 0;
  double tick_rate_hz = 10.0;
  double calibration_s = kDefaultBaselineSeconds;
  InjectionConfig injection{0.3, InjectionMode::mixed};
  EnvConfig env;
  SynthConfig synth;
  double regressor_theta2_multiple = 2.0;
  /// Real-device samples replayed instead of synthesis.
  std::shared_ptr<const NeuralRecord> replay;
};

/// Bounds and rates a session can run with; protocol errors otherwise.
inline void validate(const SessionConfig& c, double min_s = kMinDurationS, double max_s = kMaxDurationS) {
  if (!(c.duration_s >= min_s && c.duration_s <= max_s))
    throw ProtocolError("duration_s must lie in [" + std::to_string(static_cast<int>(min_s)) + ", " +
                        std::to_string(static_cast<int>(max_s)) + "]");
  if (!(c.tick_rate_hz > 0.0)) throw ProtocolError("tick rate must be positive");
  if (std::abs(c.env.dt * c.tick_rate_hz - 1.0) > 1e-12) throw ProtocolError("tick rate must equal 1/dt");
  const double sr = c.replay ? c.replay->sample_rate_hz : c.synth.sample_rate_hz;
  const double per_tick = sr / c.tick_rate_hz;
  if (per_tick < 1.0 || std::abs(per_tick - std::round(per_tick)) > 1e-9)
    throw ProtocolError("neural sample rate must be a whole multiple of the tick rate");
  if (c.replay) {
    const double need = (c.calibration_s + c.duration_s) * sr;
    if (static_cast<double>(c.replay->size()) + 1e-9 < need)
      throw ProtocolError("replay recording is shorter than the session");
  }
}

/// One raw client input, whether or not it ended up applied.
struct InputEvent {
  std::int64_t tick = 0;  // tick at which it arrived
  double arrival_t = 0.0;
  double client_t = 0.0;
  std::vector<double> a;
};

class Session {
 public:
  Session(std::string id, SessionConfig cfg, std::shared_ptr<const PolicyBank> bank)
      : id_(std::move(id)), cfg_(std::move(cfg)), bank_(std::move(bank)) {
    validate(cfg_);
    if (!bank_ || bank_->domain != cfg_.domain) throw ProtocolError("no policy bank for this domain");
    rep_ = representation_for(cfg_.domain, cfg_.condition);
    th_ = bank_->thresholds_for(rep_);
    if (!th_) throw ProtocolError("policy bank is not calibrated");
    GenOptions g;
    g.synth = cfg_.synth;
    g.regressor_theta2_multiple = cfg_.regressor_theta2_multiple;
    synth_cfg_ = synth_for(g, *th_);
    synth_cfg_.baseline_s = cfg_.calibration_s;
    per_tick_ = static_cast<std::size_t>(std::llround(sample_rate() / cfg_.tick_rate_hz));
    calibration_ticks_ = std::llround(cfg_.calibration_s * cfg_.tick_rate_hz);
    running_ticks_ = std::llround(cfg_.duration_s * cfg_.tick_rate_hz);
    if (!cfg_.replay) synth_.emplace(synth_cfg_, derive_seed(cfg_.seed, 0x5A17ULL));
    begin_episode();
  }

  const std::string& id() const { return id_; }
  const SessionConfig& config() const { return cfg_; }
  Phase phase() const { return phase_; }
  std::int64_t tick_index() const { return tick_; }
  std::int64_t episode() const { return episode_; }
  const EnvState& state() const { return env_; }
  /// Environment state the first episode starts from.
  const EnvState& initial_state() const { return initial_; }
  const std::vector<InputEvent>& input_ledger() const { return ledger_; }
  std::size_t task_steps() const { return task_.size(); }
  std::string demo_id() const { return "demo-" + id_; }
  double now() const { return static_cast<double>(tick_) / cfg_.tick_rate_hz; }

  /// created -> calibrating.
  std::vector<nlohmann::json> start() {
    if (phase_ != Phase::created) throw ProtocolError("session already started");
    return enter(Phase::calibrating);
  }

  /// Ends the session early (from any phase but created/ended).
  std::vector<nlohmann::json> stop() {
    if (phase_ == Phase::ended) throw ProtocolError("session already ended");
    if (phase_ == Phase::created) throw ProtocolError("session not started");
    return end();
  }

  /// Queues a human action for the next tick. Later submissions within the
  /// same tick replace earlier ones; all are kept in the input ledger.
  void submit_action(const std::vector<double>& a, double client_t) {
    if (cfg_.condition != Condition::active) throw ProtocolError("passive sessions take no actions");
    if (phase_ != Phase::running) throw ProtocolError("actions are only accepted while running");
    check_action(a);
    ledger_.push_back({tick_, now(), client_t, a});
    pending_ = a;
  }

  /// Advances one tick and returns the messages it produced.
  std::vector<nlohmann::json> tick() {
    std::vector<nlohmann::json> out;
    if (phase_ == Phase::created || phase_ == Phase::ended) return out;
    double regressor = 0.0;
    if (phase_ == Phase::running) {
      const double t = now();
      std::vector<double> obs = env_.obs, action;
      StepResult next;
      if (cfg_.condition == Condition::active) {
        action = pending_ ? *pending_ : noop_action(cfg_.domain);
        pending_.reset();
        next = step(env_, std::span<const double>(action), cfg_.env);
      } else {
        action = trace_.task.actions[cursor_];
        next.state = env_;
        next.state.obs = trace_.task.next_states[cursor_];
        next.reward = trace_.task.rewards[cursor_];
        ++cursor_;
        next.state.terminal = cursor_ == trace_.task.size();
        next.state.outcome = next.state.terminal ? trace_.outcome : Outcome::ongoing;
      }
      regressor = instant_regressor(obs, action);
      task_.timestamps.push_back(t);
      task_.states.push_back(std::move(obs));
      task_.actions.push_back(std::move(action));
      task_.rewards.push_back(next.reward);
      task_.next_states.push_back(next.state.obs);
      task_.episode_ids.push_back(episode_);
      const bool done = next.state.terminal;
      env_ = std::move(next.state);
      out.push_back({{"type", "state"}, {"t", t}, {"obs", env_.obs}, {"reward", task_.rewards.back()},
                     {"done", done}, {"episode", episode_}});
      if (done) {
        ++episode_;
        begin_episode();
      }
    }
    emit_neural(regressor);
    ++tick_;
    if (phase_ == Phase::calibrating && tick_ >= calibration_ticks_) {
      for (auto& m : enter(Phase::running)) out.push_back(std::move(m));
    } else if (phase_ == Phase::running && tick_ >= calibration_ticks_ + running_ticks_) {
      for (auto& m : end()) out.push_back(std::move(m));
    }
    return out;
  }

  /// Labels and packages the recording. Idempotent once ended.
  const Demonstration& finalize() {
    if (phase_ != Phase::ended) throw ProtocolError("finalize before the session ended");
    if (demo_) return *demo_;
    if (task_.size() == 0) throw ProtocolError("session ended before any task step");
    Demonstration d;
    d.participant_id = id_;
    d.domain = cfg_.domain;
    d.condition = cfg_.condition;
    d.rng_seed = cfg_.seed;
    d.neural = neural_;
    d.task = task_;
    d.labels = label_task(d.task, *bank_, *th_, cfg_.env);
    d.calibration = calibration_block(*bank_, rep_, *th_, synth_cfg_);
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& e : ledger_)
      inputs.push_back({{"tick", e.tick}, {"t", e.arrival_t}, {"client_t", e.client_t}, {"a", e.a}});
    d.calibration["session"] = {{"id", id_},
                                {"duration_s", cfg_.duration_s},
                                {"tick_rate_hz", cfg_.tick_rate_hz},
                                {"neural_source", cfg_.replay ? "replay" : "synthetic"},
                                {"inputs", inputs}};
    validate(d);
    demo_ = std::move(d);
    return *demo_;
  }

  bool finalized() const { return demo_.has_value(); }

  nlohmann::json status() const {
    return {{"id", id_},
            {"domain", neuroloop::to_string(cfg_.domain)},
            {"condition", neuroloop::to_string(cfg_.condition)},
            {"phase", to_string(phase_)},
            {"duration_s", cfg_.duration_s},
            {"seed", cfg_.seed},
            {"tick", tick_},
            {"episode", episode_},
            {"task_steps", task_.size()},
            {"demo_id", demo_ ? nlohmann::json(demo_id()) : nlohmann::json()}};
  }

 private:
  double sample_rate() const { return cfg_.replay ? cfg_.replay->sample_rate_hz : cfg_.synth.sample_rate_hz; }

  void check_action(const std::vector<double>& a) const {
    const auto spec = action_spec(cfg_.domain);
    if (a.size() != spec.n) throw ProtocolError("action vector must have " + std::to_string(spec.n) + " entries");
    for (double v : a)
      if (!std::isfinite(v)) throw ProtocolError("action vector has non-finite entries");
    if (spec.discrete()) {
      std::size_t ones = 0;
      for (double v : a) {
        if (v != 0.0 && v != 1.0) throw ProtocolError("discrete actions must be one-hot");
        ones += v == 1.0;
      }
      if (ones != 1) throw ProtocolError("discrete actions must be one-hot");
    } else {
      for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] < spec.low[i] || a[i] > spec.high[i]) throw ProtocolError("action outside [-1, 1]");
    }
  }

  std::uint64_t episode_seed() const {
    return derive_seed(cfg_.seed, 0xE915ULL, static_cast<std::uint64_t>(episode_));
  }

  void begin_episode() {
    if (cfg_.condition == Condition::active) {
      env_ = reset(cfg_.domain, episode_seed(), cfg_.env);
    } else {
      WatchOptions w;
      w.episode_id = episode_;
      trace_ = run_watch_episode(*bank_, cfg_.injection, episode_seed(), w, cfg_.env);
      cursor_ = 0;
      env_ = EnvState{};
      env_.domain = cfg_.domain;
      env_.obs = trace_.task.states.front();
    }
    if (episode_ == 0) initial_ = env_;
  }

  double instant_regressor(const std::vector<double>& obs, const std::vector<double>& action) const {
    double sum = 0.0;
    for (const auto& p : bank_->policies) sum += action_error(p, cfg_.domain, obs, action, *th_, cfg_.env);
    const double e_bar = sum / static_cast<double>(bank_->size());
    if (synth_cfg_.source == RegressorSource::binary) return e_bar > th_->suboptimal ? 1.0 : 0.0;
    return std::clamp(e_bar / synth_cfg_.continuous_scale, 0.0, 1.0);
  }

  void emit_neural(double regressor) {
    const double sr = sample_rate();
    for (std::size_t k = 0; k < per_tick_; ++k) {
      const std::size_t n = neural_.size();
      if (cfg_.replay) {
        for (std::size_t m = 0; m < neural_.channels; ++m) neural_.values[m].push_back(cfg_.replay->values[m][n]);
      } else {
        const auto v = synth_->next(regressor);
        for (std::size_t m = 0; m < neural_.channels; ++m) neural_.values[m].push_back(v[m]);
      }
      neural_.timestamps.push_back(static_cast<double>(n) / sr);
    }
  }

  std::vector<nlohmann::json> enter(Phase p) {
    phase_ = p;
    if (p == Phase::calibrating) {
      neural_ = {};
      neural_.channels = cfg_.replay ? cfg_.replay->channels : synth_cfg_.channels;
      neural_.sample_rate_hz = sample_rate();
      neural_.values.assign(neural_.channels, {});
      neural_.baseline_span = {0.0, cfg_.calibration_s};
      task_ = {};
      task_.domain = cfg_.domain;
      task_.condition = cfg_.condition;
    }
    return {{{"type", "phase"}, {"phase", to_string(p)}}};
  }

  std::vector<nlohmann::json> end() {
    auto out = enter(Phase::ended);
    pending_.reset();
    if (task_.size() > 0) {
      finalize();
      out.push_back({{"type", "ended"}, {"demo_id", demo_id()}});
    } else {
      out.push_back({{"type", "ended"}, {"demo_id", nullptr}});
    }
    return out;
  }

  std::string id_;
  SessionConfig cfg_;
  std::shared_ptr<const PolicyBank> bank_;
  ActionRepresentation rep_{};
  const LabelThresholds* th_ = nullptr;
  SynthConfig synth_cfg_;
  std::optional<OnlineSynthesizer> synth_;
  std::size_t per_tick_ = 1;
  std::int64_t calibration_ticks_ = 0, running_ticks_ = 0;

  Phase phase_ = Phase::created;
  std::int64_t tick_ = 0;
  std::int64_t episode_ = 0;
  EnvState env_, initial_;
  RunTrace trace_;
  std::size_t cursor_ = 0;
  std::optional<std::vector<double>> pending_;
  std::vector<InputEvent> ledger_;
  TaskRecord task_;
  NeuralRecord neural_;
  std::optional<Demonstration> demo_;
};

}  // namespace neuroloop::sessiond
