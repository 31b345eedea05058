#pragma once

// Episode generation: the outer policy loop (one decision per walking step)
// around the inner HZD/PD loop (every dt), with reward and termination.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hzdrl/control.hpp"
#include "hzdrl/dynamics.hpp"
#include "hzdrl/gait.hpp"
#include "hzdrl/policy.hpp"

namespace hzdrl {

/// Everything the simulator needs besides the episode settings.
struct SimConfig {
  RobotParams robot;
  IntegratorConfig integrator;
  PhaseConfig phase;
  PDGains gains{600.0, 30.0, 150.0};
  GaitBounds bounds;
};

struct EpisodeConfig {
  int max_sim_steps = 4000;
  double gamma = 0.99;
  Interval v_d_range{0.7, 1.5};
  bool mid_episode_resample = true;
  int resample_step = -1;        // -1: max_sim_steps / 2
  double initial_speed = 0.8;    // m/s, forward hip speed of the initial rigid rotation
  double fall_penalty = 5.0;     // per simulation step left when an episode terminates early
  int window = 200;              // observation window, simulation steps
  std::uint64_t seed = 0;

  int resample_at() const { return resample_step >= 0 ? resample_step : max_sim_steps / 2; }

  void validate() const {
    if (max_sim_steps <= 0) throw std::invalid_argument("episode.max_sim_steps must be > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("episode.gamma must lie in (0, 1]");
    if (!(v_d_range.lo > 0.0)) throw std::invalid_argument("episode.v_d_range must be positive");
    if (window <= 0) throw std::invalid_argument("episode.window must be > 0");
    if (!(fall_penalty >= 0.0)) throw std::invalid_argument("episode.fall_penalty must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const EpisodeConfig& c) {
  j = nlohmann::json{{"max_sim_steps", c.max_sim_steps},   {"gamma", c.gamma},
                     {"v_d_range", c.v_d_range},           {"mid_episode_resample", c.mid_episode_resample},
                     {"resample_step", c.resample_step},   {"initial_speed", c.initial_speed},
                     {"fall_penalty", c.fall_penalty},     {"window", c.window},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, EpisodeConfig& c) {
  EpisodeConfig d;
  c.max_sim_steps = j.value("max_sim_steps", d.max_sim_steps);
  c.gamma = j.value("gamma", d.gamma);
  c.v_d_range = j.contains("v_d_range") ? j.at("v_d_range").get<Interval>() : d.v_d_range;
  c.mid_episode_resample = j.value("mid_episode_resample", d.mid_episode_resample);
  c.resample_step = j.value("resample_step", d.resample_step);
  c.initial_speed = j.value("initial_speed", d.initial_speed);
  c.fall_penalty = j.value("fall_penalty", d.fall_penalty);
  c.window = j.value("window", d.window);
  c.seed = j.value("seed", d.seed);
  c.validate();
}

enum class Termination { kNone, kFallTorso, kFallHeight, kTimeout, kDivergence, kScuff, kInvalidImpact };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::kNone: return "none";
    case Termination::kFallTorso: return "fall-torso";
    case Termination::kFallHeight: return "fall-height";
    case Termination::kTimeout: return "timeout";
    case Termination::kDivergence: return "divergence";
    case Termination::kScuff: return "scuff";
    case Termination::kInvalidImpact: return "invalid-impact";
  }
  return "unknown";
}

/// -(v_bar - v_d)^2.
inline double step_reward(const ObsWindow& w) {
  const double e = w.mean() - w.desired();
  return -e * e;
}

/// |q_t| < 0.5 and 0.6 < z < 0.8 with z the hip height.
inline Termination check_termination(const HybridState& s, const RobotParams& p) {
  if (!(std::abs(s.q[kTorso]) < 0.5)) return Termination::kFallTorso;
  const double z = hip_height(s.q, p);
  if (!(z > 0.6 && z < 0.8)) return Termination::kFallHeight;
  return Termination::kNone;
}

inline double hip_velocity_x(const HybridState& s, const RobotParams& p) {
  return hip_jacobian(s.q, p).row(0).dot(s.dq);
}

/// Pose from coefficient column 0, torso angle solved so the hip sits at
/// p_begin, velocity a rigid rotation about the stance foot with forward hip
/// speed `speed`.
inline HybridState initial_state(const BezierCoeffs& c, const SimConfig& sim, double speed) {
  HybridState s;
  s.q.tail<4>() = c.alpha.col(0);
  s.q[kTorso] = 0.0;
  for (int it = 0; it < 50; ++it) {
    const double f = hip_position_x(s.q, sim.robot) - sim.phase.p_begin;
    const double df = hip_height(s.q, sim.robot);
    if (std::abs(df) < 1e-9) break;
    const double step = std::clamp(f / df, -0.5, 0.5);
    s.q[kTorso] -= step;
    if (std::abs(step) < 1e-14) break;
  }
  s.dq.setZero();
  s.dq[kTorso] = speed / hip_height(s.q, sim.robot);
  return s;
}

struct LogRow {
  double time = 0.0;
  Vec5 q, dq;
  Vec4 u;
  double tau = 0.0;
  int step_index = 0;
  int event = 0;  // 0 flow, 1 impact, 2 termination
  double stance_foot_x = 0.0;
  double v_inst = 0.0;
  double v_bar = 0.0;
  double v_d = 0.0;
  double reward = 0.0;
};

using RolloutLog = std::vector<LogRow>;

struct WalkingStepResult {
  double reward = 0.0;  // undiscounted sum over the simulation steps taken
  int sim_steps = 0;
  bool done = false;
  Termination reason = Termination::kNone;
  Observation next;
};

/// One episode of the hybrid walker. Commands are issued at the start and
/// after every impact; between decisions the PD loop tracks the command's
/// virtual constraints.
class WalkingEnv {
 public:
  WalkingEnv(SimConfig sim, EpisodeConfig ep) : sim_(std::move(sim)), ep_(std::move(ep)), window_(ep_.window) {
    ep_.validate();
    sim_.integrator.validate();
    sim_.phase.validate();
  }

  void set_disturbances(std::vector<ExternalForce> forces) { forces_ = std::move(forces); }
  /// (t, v_d) pairs; when set, v_d follows this schedule instead of sampling.
  void set_speed_profile(std::vector<std::pair<double, double>> profile) {
    std::sort(profile.begin(), profile.end());
    profile_ = std::move(profile);
  }
  void set_logging(bool on) { logging_ = on; }

  Observation reset(std::uint64_t seed) {
    rng_.seed(seed);
    window_.reset();
    log_.clear();
    rewards_.clear();
    sim_step_ = 0;
    discounted_ = 0.0;
    total_ = 0.0;
    discount_ = 1.0;
    started_ = false;
    done_ = false;
    reason_ = Termination::kNone;
    std::uniform_real_distribution<double> u(ep_.v_d_range.lo, ep_.v_d_range.hi);
    sampled_v_d_ = u(rng_);
    resampled_v_d_ = u(rng_);
    state_ = HybridState{};
    window_.set_desired(desired_speed(0.0, 0));
    window_.push(ep_.initial_speed);
    return observe(window_);
  }

  WalkingStepResult step(const StepCommand& cmd) {
    WalkingStepResult res;
    if (done_) {
      res.done = true;
      res.reason = reason_;
      return res;
    }
    if (!started_) {
      state_ = initial_state(cmd.coeffs, sim_, ep_.initial_speed);
      started_ = true;
    }
    PDGains gains = sim_.gains;
    gains.kd = cmd.kd;
    auto controller = [&](const HybridState& s) {
      return hzd_torque(s.q, s.dq, cmd.coeffs, gains, sim_.robot, sim_.phase);
    };

    while (true) {
      const Vec4 u = logging_ ? controller(state_) : Vec4::Zero();
      const StepOutcome out = integrate(state_, controller, active_force(state_.time), sim_.integrator, sim_.robot);
      HybridState next = out.state;
      Termination term = Termination::kNone;
      bool impact = false;
      switch (out.event) {
        case FlowEvent::kDivergence: term = Termination::kDivergence; break;
        case FlowEvent::kPenetration: term = Termination::kScuff; break;
        case FlowEvent::kImpact:
          try {
            next = impact_map(out.state, sim_.robot, sim_.integrator.friction_coefficient);
            impact = true;
          } catch (const InvalidImpact&) {
            term = Termination::kInvalidImpact;
          }
          break;
        case FlowEvent::kNone: break;
      }
      state_ = next;
      ++sim_step_;
      ++res.sim_steps;

      window_.set_desired(desired_speed(state_.time, sim_step_));
      const double v_inst = hip_velocity_x(state_, sim_.robot);
      window_.push(v_inst);
      double r = step_reward(window_);

      if (term == Termination::kNone) term = check_termination(state_, sim_.robot);
      if (term == Termination::kNone && sim_step_ >= ep_.max_sim_steps) term = Termination::kTimeout;
      const bool failed = term != Termination::kNone && term != Termination::kTimeout;
      if (failed) r -= ep_.fall_penalty * static_cast<double>(ep_.max_sim_steps - sim_step_);

      rewards_.push_back(r);
      discounted_ += discount_ * r;
      discount_ *= ep_.gamma;
      total_ += r;
      res.reward += r;

      if (logging_) {
        LogRow row;
        row.time = state_.time;
        row.q = state_.q;
        row.dq = state_.dq;
        row.u = u;
        row.tau = phase(state_.q, sim_.robot, sim_.phase);
        row.step_index = state_.step_index;
        row.event = term != Termination::kNone ? 2 : (impact ? 1 : 0);
        row.stance_foot_x = state_.stance_foot_x;
        row.v_inst = v_inst;
        row.v_bar = window_.mean();
        row.v_d = window_.desired();
        row.reward = r;
        log_.push_back(row);
      }

      if (term != Termination::kNone) {
        done_ = true;
        reason_ = term;
        res.done = true;
        res.reason = term;
        res.next = observe(window_);
        return res;
      }
      if (impact) {
        res.next = observe(window_);
        return res;
      }
    }
  }

  const HybridState& state() const { return state_; }
  const ObsWindow& window() const { return window_; }
  const RolloutLog& log() const { return log_; }
  RolloutLog take_log() { return std::move(log_); }
  const std::vector<double>& rewards() const { return rewards_; }
  double discounted_return() const { return discounted_; }
  double total_reward() const { return total_; }
  int sim_steps() const { return sim_step_; }
  bool done() const { return done_; }
  Termination reason() const { return reason_; }
  const SimConfig& sim() const { return sim_; }
  const EpisodeConfig& episode() const { return ep_; }

 private:
  double desired_speed(double t, int sim_step) const {
    if (!profile_.empty()) {
      double v = profile_.front().second;
      for (const auto& [t0, v0] : profile_)
        if (t >= t0) v = v0;
      return v;
    }
    if (ep_.mid_episode_resample && sim_step >= ep_.resample_at()) return resampled_v_d_;
    return sampled_v_d_;
  }

  std::optional<ExternalForce> active_force(double t) const {
    const double t_end = t + sim_.integrator.dt;
    for (const auto& f : forces_)
      if (f.t_on < t_end && f.t_off > t) return f;
    return std::nullopt;
  }

  SimConfig sim_;
  EpisodeConfig ep_;
  ObsWindow window_;
  std::vector<ExternalForce> forces_;
  std::vector<std::pair<double, double>> profile_;
  bool logging_ = false;

  std::mt19937_64 rng_;
  HybridState state_;
  RolloutLog log_;
  std::vector<double> rewards_;
  int sim_step_ = 0;
  double discounted_ = 0.0, total_ = 0.0, discount_ = 1.0;
  double sampled_v_d_ = 1.0, resampled_v_d_ = 1.0;
  bool started_ = false, done_ = false;
  Termination reason_ = Termination::kNone;
};

struct RolloutResult {
  double discounted_return = 0.0;
  double total_reward = 0.0;
  std::vector<double> rewards;
  Termination reason = Termination::kNone;
  int sim_steps = 0;
  int walking_steps = 0;  // completed impacts
  RolloutLog log;
};

struct RolloutOptions {
  std::vector<ExternalForce> disturbances;
  std::vector<std::pair<double, double>> speed_profile;
  bool log = false;
};

/// Runs one episode with a command source (Observation -> StepCommand).
template <typename Source>
RolloutResult rollout(const Source& source, const SimConfig& sim, const EpisodeConfig& ep, std::uint64_t seed,
                      const RolloutOptions& opts = {}) {
  WalkingEnv env(sim, ep);
  env.set_disturbances(opts.disturbances);
  if (!opts.speed_profile.empty()) env.set_speed_profile(opts.speed_profile);
  env.set_logging(opts.log);
  Observation obs = env.reset(seed);
  while (true) {
    const WalkingStepResult r = env.step(source(obs));
    obs = r.next;
    if (r.done) break;
  }
  RolloutResult out;
  out.discounted_return = env.discounted_return();
  out.total_reward = env.total_reward();
  out.rewards = env.rewards();
  out.reason = env.reason();
  out.sim_steps = env.sim_steps();
  out.walking_steps = env.state().step_index;
  out.log = env.take_log();
  return out;
}

}  // namespace hzdrl
