#pragma once

// Offline search for a fixed-coefficient walking gait: seeded random-restart
// coordinate descent over the 20 free coefficients and K_d, maximizing walking
// steps survived, then episode return less penalties on late stride-to-stride
// residuals and on a slowly contracting stride map.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "hzdrl/analysis.hpp"
#include "hzdrl/parallel.hpp"

namespace hzdrl {

/// Symmetric walking pose family. Endpoints place the feet +-half_step
/// around the hip with equal knee flexion; the swing knee folds mid-step.
inline FreeCoeffs template_gait(const PhaseConfig& phase, double torso_lean = 0.2, double knee = 0.3,
                                double swing_fold = 0.6) {
  const double half = 0.5 * (phase.p_end - phase.p_begin);
  const double leg = 0.8 * std::cos(knee / 2.0);
  const double spread = std::asin(std::clamp(half / leg, -1.0, 1.0));
  const double stance_hip = torso_lean + spread + knee / 2.0;
  const double swing_hip = torso_lean - spread + knee / 2.0;
  const double d = stance_hip - swing_hip;
  BezierCoeffs c;
  c.alpha.row(0) << stance_hip, stance_hip - 0.2 * d, stance_hip - 0.4 * d, stance_hip - 0.6 * d,
      stance_hip - 0.8 * d, swing_hip;
  c.alpha.row(1) << knee, knee + 0.05, knee + 0.05, knee + 0.05, knee + 0.05, knee;
  c.alpha.row(2) << swing_hip, swing_hip + 0.2 * d, swing_hip + 0.6 * d, stance_hip + 0.1, stance_hip + 0.05,
      stance_hip;
  c.alpha.row(3) << knee, 0.8 * swing_fold, swing_fold, 0.8 * swing_fold, 0.4 * swing_fold, knee;
  return extract_free_params(c);
}

struct GaitSearchConfig {
  std::uint64_t seed = 1;
  int restarts = 8;
  int max_sweeps = 12;
  double init_noise = 0.08;    // rad, uniform half-width around the template
  double initial_step = 0.04;  // rad
  double min_step = 0.0025;
  double nominal_speed = 0.8;
  int horizon_steps = 6000;
  int min_walking_steps = 20;
  int max_evaluations = 250;  // per restart; the wall-clock budget is only a safety stop
  double budget_seconds = 900.0;
  Interval kd_range{10.0, 60.0};
  double kd_initial = 50.0;
  double stability_weight = 100.0;    // return penalty per unit of late post-impact residual
  double contraction_weight = 1000.0;  // return penalty per unit of stride-map spectral radius above target
  double contraction_target = 0.8;
  int workers = 1;

  void validate() const {
    if (restarts < 1) throw std::invalid_argument("reference_gait.restarts must be >= 1");
    if (max_sweeps < 1) throw std::invalid_argument("reference_gait.max_sweeps must be >= 1");
    if (!(initial_step > 0.0) || !(min_step > 0.0)) throw std::invalid_argument("reference_gait steps must be > 0");
    if (!(nominal_speed > 0.0)) throw std::invalid_argument("reference_gait.nominal_speed must be > 0");
    if (horizon_steps < 1) throw std::invalid_argument("reference_gait.horizon_steps must be >= 1");
    if (max_evaluations < 1) throw std::invalid_argument("reference_gait.max_evaluations must be >= 1");
    if (!(budget_seconds > 0.0)) throw std::invalid_argument("reference_gait.budget_seconds must be > 0");
    if (workers < 1) throw std::invalid_argument("reference_gait.workers must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const GaitSearchConfig& c) {
  j = nlohmann::json{{"restarts", c.restarts},
                     {"max_sweeps", c.max_sweeps},
                     {"init_noise", c.init_noise},
                     {"initial_step", c.initial_step},
                     {"min_step", c.min_step},
                     {"nominal_speed", c.nominal_speed},
                     {"horizon_steps", c.horizon_steps},
                     {"min_walking_steps", c.min_walking_steps},
                     {"max_evaluations", c.max_evaluations},
                     {"budget_seconds", c.budget_seconds},
                     {"kd_range", c.kd_range},
                     {"kd_initial", c.kd_initial},
                     {"stability_weight", c.stability_weight},
                     {"contraction_weight", c.contraction_weight},
                     {"contraction_target", c.contraction_target}};
}

inline void from_json(const nlohmann::json& j, GaitSearchConfig& c) {
  c.restarts = j.value("restarts", c.restarts);
  c.max_sweeps = j.value("max_sweeps", c.max_sweeps);
  c.init_noise = j.value("init_noise", c.init_noise);
  c.initial_step = j.value("initial_step", c.initial_step);
  c.min_step = j.value("min_step", c.min_step);
  c.nominal_speed = j.value("nominal_speed", c.nominal_speed);
  c.horizon_steps = j.value("horizon_steps", c.horizon_steps);
  c.min_walking_steps = j.value("min_walking_steps", c.min_walking_steps);
  c.max_evaluations = j.value("max_evaluations", c.max_evaluations);
  c.budget_seconds = j.value("budget_seconds", c.budget_seconds);
  if (j.contains("kd_range")) c.kd_range = j.at("kd_range").get<Interval>();
  c.kd_initial = j.value("kd_initial", c.kd_initial);
  c.stability_weight = j.value("stability_weight", c.stability_weight);
  c.contraction_weight = j.value("contraction_weight", c.contraction_weight);
  c.contraction_target = j.value("contraction_target", c.contraction_target);
  c.validate();
}

struct GaitScore {
  bool survived = false;
  int walking_steps = 0;
  double total_reward = -1e300;
  double late_residual = 0.0;  // sum of post-impact residuals from step 10 on
  double spectral_radius = std::numeric_limits<double>::infinity();  // stride map, survivors only
  double objective = -1e300;

  bool better_than(const GaitScore& o) const {
    if (survived != o.survived) return survived;
    if (!survived && walking_steps != o.walking_steps) return walking_steps > o.walking_steps;
    return objective > o.objective;
  }
};

struct GaitCandidate {
  FreeCoeffs free = FreeCoeffs::Zero();
  double kd = 0.0;
  GaitScore score;

  StepCommand command(const GaitBounds& b) const { return {expand_free_params(free, b), kd}; }
};

inline EpisodeConfig reference_episode(const GaitSearchConfig& cfg) {
  EpisodeConfig ep;
  ep.max_sim_steps = cfg.horizon_steps;
  ep.mid_episode_resample = false;
  ep.v_d_range = {std::min(0.7, cfg.nominal_speed), std::max(1.5, cfg.nominal_speed)};
  return ep;
}

inline GaitScore score_gait(const StepCommand& cmd, const SimConfig& sim, const GaitSearchConfig& cfg) {
  RolloutOptions opts;
  opts.speed_profile = {{0.0, cfg.nominal_speed}};
  opts.log = true;
  const RolloutResult r = rollout(ConstantGaitSource{cmd}, sim, reference_episode(cfg), 0, opts);
  GaitScore s;
  s.survived = r.reason == Termination::kTimeout && r.walking_steps >= cfg.min_walking_steps;
  s.walking_steps = r.walking_steps;
  s.total_reward = r.total_reward;
  const auto samples = poincare_samples(r.log);
  if (samples.size() >= 2) {
    const auto res = poincare_residuals(samples);
    for (std::size_t k = 10; k < res.size(); ++k) s.late_residual += res[k];
  }
  s.objective = s.total_reward - cfg.stability_weight * s.late_residual;
  if (s.survived) {
    HybridState nominal;
    nominal.unpack(samples.back().x);
    const auto est = return_map_contraction(gait_return_map(cmd, sim), Eigen::VectorXd(nominal.packed()), 1e-5);
    s.spectral_radius = est.valid() ? est.spectral_radius : std::numeric_limits<double>::infinity();
    const double excess = std::isfinite(s.spectral_radius) ? std::max(0.0, s.spectral_radius - cfg.contraction_target)
                                                           : 10.0;
    s.objective -= cfg.contraction_weight * excess;
  }
  return s;
}

struct GaitVerification {
  int walking_steps = 0;
  double survived_seconds = 0.0;
  Termination reason = Termination::kNone;
  std::vector<double> residuals;
  double max_late_residual = 1e300;  // max residual from step 10 on
  bool trending_down = false;
  ContractionEstimate contraction;

  bool passes(int min_steps) const {
    return walking_steps >= min_steps && survived_seconds >= 8.0 && max_late_residual < 1e-2 && trending_down &&
           contraction.valid() && contraction.spectral_radius < 1.0;
  }
};

/// Walks the gait over the search horizon, then checks the post-impact
/// residuals and the finite-difference stride map at the final sample.
inline GaitVerification verify_gait(const StepCommand& cmd, const SimConfig& sim, const GaitSearchConfig& cfg,
                                    double delta = 1e-5) {
  GaitVerification v;
  RolloutOptions opts;
  opts.speed_profile = {{0.0, cfg.nominal_speed}};
  opts.log = true;
  const RolloutResult r = rollout(ConstantGaitSource{cmd}, sim, reference_episode(cfg), 0, opts);
  v.walking_steps = r.walking_steps;
  v.reason = r.reason;
  v.survived_seconds = r.log.empty() ? 0.0 : r.log.back().time;
  const auto samples = poincare_samples(r.log);
  if (samples.size() < 12) return v;
  v.residuals = poincare_residuals(samples);
  double early = 0.0, late = 0.0, late_max = 0.0;
  const std::size_t split = 10;
  for (std::size_t k = 0; k < v.residuals.size(); ++k) {
    if (k < split) early += v.residuals[k];
    else {
      late += v.residuals[k];
      late_max = std::max(late_max, v.residuals[k]);
    }
  }
  early /= split;
  late /= static_cast<double>(v.residuals.size() - split);
  v.max_late_residual = late_max;
  v.trending_down = late < early;
  HybridState nominal;
  nominal.unpack(samples.back().x);
  v.contraction = return_map_contraction(gait_return_map(cmd, sim), Eigen::VectorXd(nominal.packed()), delta);
  return v;
}

struct GaitSearchResult {
  GaitCandidate best;
  std::vector<GaitCandidate> per_restart;  // best of each restart, restart order
  int evaluations = 0;
  bool success = false;
  GaitVerification verification;
};

namespace detail {

inline GaitCandidate coordinate_descent(GaitCandidate start, const SimConfig& sim, const GaitSearchConfig& cfg,
                                        std::chrono::steady_clock::time_point deadline, int* evals) {
  auto clampi = [&](int i, double x) {
    const Interval& b = i < kNumFreeCoeffs ? sim.bounds.free_entry(i) : cfg.kd_range;
    return std::clamp(x, b.lo, b.hi);
  };
  auto eval = [&](const GaitCandidate& c) {
    ++*evals;
    return score_gait(c.command(sim.bounds), sim, cfg);
  };
  GaitCandidate best = start;
  best.score = eval(best);
  double step = cfg.initial_step;
  for (int sweep = 0; sweep < cfg.max_sweeps && step >= cfg.min_step; ++sweep) {
    bool improved = false;
    for (int i = 0; i <= kNumFreeCoeffs; ++i) {
      const double scale = i < kNumFreeCoeffs ? 1.0 : 100.0;  // K_d moves in N m s/rad
      for (double sgn : {1.0, -1.0}) {
        if (*evals >= cfg.max_evaluations || std::chrono::steady_clock::now() > deadline) return best;
        GaitCandidate trial = best;
        if (i < kNumFreeCoeffs) trial.free[i] = clampi(i, trial.free[i] + sgn * step);
        else trial.kd = clampi(i, trial.kd + sgn * step * scale);
        if (trial.free == best.free && trial.kd == best.kd) continue;
        trial.score = eval(trial);
        if (trial.score.better_than(best.score)) {
          best = trial;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

}  // namespace detail

inline GaitSearchResult search_reference_gait(const SimConfig& sim, const GaitSearchConfig& cfg) {
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(static_cast<long long>(cfg.budget_seconds * 1000.0));
  const FreeCoeffs base = template_gait(sim.phase);

  std::vector<GaitCandidate> starts(cfg.restarts);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> noise(-cfg.init_noise, cfg.init_noise);
  for (int r = 0; r < cfg.restarts; ++r) {
    GaitCandidate c;
    c.free = base;
    c.kd = cfg.kd_initial;
    if (r > 0)
      for (int i = 0; i < kNumFreeCoeffs; ++i) {
        const Interval& b = sim.bounds.free_entry(i);
        c.free[i] = std::clamp(c.free[i] + noise(rng), b.lo, b.hi);
      }
    starts[r] = c;
  }

  std::vector<int> evals(cfg.restarts, 0);
  GaitSearchResult res;
  res.per_restart = parallel_map<GaitCandidate>(starts.size(), cfg.workers, [&](std::size_t r) {
    return detail::coordinate_descent(starts[r], sim, cfg, deadline, &evals[r]);
  });
  res.evaluations = std::accumulate(evals.begin(), evals.end(), 0);

  std::vector<std::size_t> order(res.per_restart.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return res.per_restart[a].score.better_than(res.per_restart[b].score);
  });
  res.best = res.per_restart[order.front()];
  for (std::size_t idx : order) {
    const GaitCandidate& c = res.per_restart[idx];
    if (!c.score.survived) break;
    GaitVerification v = verify_gait(c.command(sim.bounds), sim, cfg);
    if (v.passes(cfg.min_walking_steps)) {
      res.best = c;
      res.verification = std::move(v);
      res.success = true;
      return res;
    }
  }
  res.verification = verify_gait(res.best.command(sim.bounds), sim, cfg);
  return res;
}

// ---------------------------------------------------------------------------
// Gait file

/// A fixed gait together with the controller and phase settings it was
/// found under.
struct ReferenceGait {
  StepCommand command;
  PhaseConfig phase;
  double kp = 600.0;
  double torque_limit = 150.0;
  double nominal_speed = 0.8;
  std::uint64_t seed = 0;
  nlohmann::json diagnostics = nlohmann::json::object();

  /// Simulator settings with this gait's controller and phase applied.
  SimConfig apply(SimConfig sim) const {
    sim.phase = phase;
    sim.gains.kp = kp;
    sim.gains.torque_limit = torque_limit;
    return sim;
  }
};

inline nlohmann::json to_json_diagnostics(const GaitVerification& v) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"walking_steps", v.walking_steps},
          {"survived_seconds", v.survived_seconds},
          {"termination", to_string(v.reason)},
          {"max_late_residual", num(v.max_late_residual)},
          {"trending_down", v.trending_down},
          {"spectral_radius", num(v.contraction.spectral_radius)},
          {"invalid_columns", v.contraction.invalid_columns},
          {"residuals", v.residuals}};
}

inline void to_json(nlohmann::json& j, const ReferenceGait& g) {
  j = nlohmann::json{{"format", "hzdrl-reference-gait"},
                     {"alpha", g.command.coeffs},
                     {"kd", g.command.kd},
                     {"phase", g.phase},
                     {"kp", g.kp},
                     {"torque_limit", g.torque_limit},
                     {"nominal_speed", g.nominal_speed},
                     {"seed", g.seed},
                     {"diagnostics", g.diagnostics}};
}

inline void from_json(const nlohmann::json& j, ReferenceGait& g) {
  if (j.value("format", "") != "hzdrl-reference-gait") throw std::invalid_argument("not a reference gait file");
  g.command.coeffs = j.at("alpha").get<BezierCoeffs>();
  if (!g.command.coeffs.impact_invariant())
    throw std::invalid_argument("reference gait alpha violates the leg-swap equalities");
  g.command.kd = j.at("kd").get<double>();
  if (!(g.command.kd >= 0.0)) throw std::invalid_argument("reference gait kd must be >= 0");
  g.phase = j.contains("phase") ? j.at("phase").get<PhaseConfig>() : PhaseConfig{};
  g.kp = j.value("kp", g.kp);
  g.torque_limit = j.value("torque_limit", g.torque_limit);
  g.nominal_speed = j.value("nominal_speed", g.nominal_speed);
  g.seed = j.value("seed", g.seed);
  g.diagnostics = j.value("diagnostics", nlohmann::json::object());
}

inline ReferenceGait load_reference_gait(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open reference gait " + path.string());
  return nlohmann::json::parse(f).get<ReferenceGait>();
}

}  // namespace hzdrl
