#pragma once

// Evaluation protocols: stride-to-stride (Poincare) diagnostics, speed
// tracking reports, scheduled torso pushes, and trajectory export.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hzdrl/env.hpp"

namespace hzdrl {

// ---------------------------------------------------------------------------
// Poincare section: states immediately after impact and relabeling.

struct PoincareSample {
  int step_index = 0;
  Vec10 x = Vec10::Zero();
};

inline std::vector<PoincareSample> poincare_samples(const RolloutLog& log) {
  std::vector<PoincareSample> out;
  for (const auto& row : log) {
    if (row.event != 1) continue;
    PoincareSample s;
    s.step_index = row.step_index;
    s.x << row.q, row.dq;
    out.push_back(s);
  }
  return out;
}

/// ||x_{k+1} - x_k|| for consecutive samples.
inline std::vector<double> poincare_residuals(const std::vector<PoincareSample>& samples) {
  if (samples.size() < 2) throw std::invalid_argument("poincare_residuals needs at least two samples");
  std::vector<double> r;
  r.reserve(samples.size() - 1);
  for (std::size_t k = 0; k + 1 < samples.size(); ++k) r.push_back((samples[k + 1].x - samples[k].x).norm());
  return r;
}

/// Simulates one walking step under a fixed command from a post-impact
/// state. Returns the next post-impact state, or nothing if the step fails.
inline std::optional<HybridState> simulate_step(const HybridState& start, const StepCommand& cmd, const SimConfig& sim,
                                                double max_time = 3.0) {
  PDGains gains = sim.gains;
  gains.kd = cmd.kd;
  auto controller = [&](const HybridState& s) {
    return hzd_torque(s.q, s.dq, cmd.coeffs, gains, sim.robot, sim.phase);
  };
  HybridState s = start;
  while (s.time - start.time < max_time) {
    const StepOutcome out = integrate(s, controller, std::nullopt, sim.integrator, sim.robot);
    if (out.event == FlowEvent::kDivergence || out.event == FlowEvent::kPenetration) return std::nullopt;
    if (out.event == FlowEvent::kImpact) {
      try {
        HybridState next = impact_map(out.state, sim.robot, sim.integrator.friction_coefficient);
        if (check_termination(next, sim.robot) != Termination::kNone) return std::nullopt;
        return next;
      } catch (const InvalidImpact&) {
        return std::nullopt;
      }
    }
    s = out.state;
    if (check_termination(s, sim.robot) != Termination::kNone) return std::nullopt;
  }
  return std::nullopt;
}

struct ContractionEstimate {
  double spectral_radius = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd jacobian;
  std::vector<int> invalid_columns;  // perturbed rollouts that terminated early

  bool valid() const { return invalid_columns.empty() && std::isfinite(spectral_radius); }
};

inline double spectral_radius(const Eigen::MatrixXd& a) {
  const Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Central-difference Jacobian of a return map at `nominal`; column j
/// perturbs coordinate j by +-delta.
template <typename ReturnMap>
ContractionEstimate return_map_contraction(const ReturnMap& map, const Eigen::VectorXd& nominal, double delta) {
  const Eigen::Index n = nominal.size();
  ContractionEstimate est;
  est.jacobian = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd plus = nominal, minus = nominal;
    plus[j] += delta;
    minus[j] -= delta;
    const std::optional<Eigen::VectorXd> fp = map(plus), fm = map(minus);
    if (!fp || !fm) {
      est.invalid_columns.push_back(static_cast<int>(j));
      continue;
    }
    est.jacobian.col(j) = (*fp - *fm) / (2.0 * delta);
  }
  if (est.invalid_columns.empty()) est.spectral_radius = spectral_radius(est.jacobian);
  return est;
}

/// Stride map of a fixed command on the 10-dimensional post-impact state.
inline auto gait_return_map(const StepCommand& cmd, const SimConfig& sim) {
  return [cmd, sim](const Eigen::VectorXd& x) -> std::optional<Eigen::VectorXd> {
    HybridState s;
    s.unpack(Vec10(x));
    const auto next = simulate_step(s, cmd, sim);
    if (!next) return std::nullopt;
    return Eigen::VectorXd(next->packed());
  };
}

// ---------------------------------------------------------------------------
// Speed tracking

struct TrackingSegment {
  double t_start = 0.0;
  double t_end = 0.0;
  double commanded = 0.0;
  double achieved = std::numeric_limits<double>::quiet_NaN();  // mean windowed speed after the transient
  double abs_error = std::numeric_limits<double>::quiet_NaN();
  double settling_time = std::numeric_limits<double>::quiet_NaN();  // NaN if never settled
};

struct TrackingReport {
  std::vector<TrackingSegment> segments;
  double transient = 1.0;

  double max_abs_error() const {
    double m = 0.0;
    for (const auto& s : segments) m = std::max(m, std::isfinite(s.abs_error) ? s.abs_error : 1e300);
    return m;
  }
};

struct SpeedSample {
  double t = 0.0;
  double v = 0.0;
};

/// Segments follow the (t, v_d) profile up to `horizon`. Settling time is the
/// first time after which |v - v_d| stays within settle_fraction times the
/// commanded change.
inline TrackingReport tracking_report(const std::vector<SpeedSample>& trace,
                                      std::vector<std::pair<double, double>> profile, double horizon,
                                      double transient = 1.0, double settle_fraction = 0.02) {
  std::sort(profile.begin(), profile.end());
  TrackingReport rep;
  rep.transient = transient;
  for (std::size_t i = 0; i < profile.size(); ++i) {
    TrackingSegment seg;
    seg.t_start = profile[i].first;
    seg.t_end = (i + 1 < profile.size()) ? profile[i + 1].first : horizon;
    seg.commanded = profile[i].second;
    if (seg.t_end <= seg.t_start) continue;

    double sum = 0.0;
    int n = 0;
    double v_start = std::numeric_limits<double>::quiet_NaN();
    for (const auto& s : trace) {
      if (s.t < seg.t_start || s.t >= seg.t_end) continue;
      if (std::isnan(v_start)) v_start = s.v;
      if (s.t >= seg.t_start + transient) {
        sum += s.v;
        ++n;
      }
    }
    if (n > 0) {
      seg.achieved = sum / n;
      seg.abs_error = std::abs(seg.achieved - seg.commanded);
    }
    const double prev = i > 0 ? profile[i - 1].second : v_start;
    const double band = settle_fraction * std::abs(seg.commanded - prev);
    double last_outside = seg.t_start;
    bool any = false, settled_at_end = false;
    for (const auto& s : trace) {
      if (s.t < seg.t_start || s.t >= seg.t_end) continue;
      any = true;
      if (std::abs(s.v - seg.commanded) > band) {
        last_outside = s.t;
        settled_at_end = false;
      } else {
        settled_at_end = true;
      }
    }
    if (any && settled_at_end) seg.settling_time = last_outside - seg.t_start;
    rep.segments.push_back(seg);
  }
  return rep;
}

inline std::vector<SpeedSample> windowed_speed_trace(const RolloutLog& log) {
  std::vector<SpeedSample> out;
  out.reserve(log.size());
  for (const auto& r : log) out.push_back({r.time, r.v_bar});
  return out;
}

template <typename Source>
TrackingReport run_tracking_eval(const Source& source, const SimConfig& sim, EpisodeConfig ep,
                                 const std::vector<std::pair<double, double>>& profile, std::uint64_t seed,
                                 double transient = 1.0, RolloutLog* log_out = nullptr) {
  for (const auto& [t, v] : profile)
    if (v < ep.v_d_range.lo || v > ep.v_d_range.hi)
      throw std::invalid_argument("speed profile value " + std::to_string(v) + " outside the trained v_d range");
  RolloutOptions opts;
  opts.speed_profile = profile;
  opts.log = true;
  RolloutResult r = rollout(source, sim, ep, seed, opts);
  const double horizon = ep.max_sim_steps * sim.integrator.dt;
  TrackingReport rep = tracking_report(windowed_speed_trace(r.log), profile, horizon, transient);
  if (log_out) *log_out = std::move(r.log);
  return rep;
}

inline nlohmann::json to_json_report(const TrackingReport& r) {
  nlohmann::json j;
  j["transient"] = r.transient;
  j["segments"] = nlohmann::json::array();
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  for (const auto& s : r.segments)
    j["segments"].push_back({{"t_start", s.t_start},
                             {"t_end", s.t_end},
                             {"commanded", s.commanded},
                             {"achieved", num(s.achieved)},
                             {"abs_error", num(s.abs_error)},
                             {"settling_time", num(s.settling_time)}});
  return j;
}

// ---------------------------------------------------------------------------
// Disturbances

enum class PushDirection { kForward, kBackward };

struct DisturbanceSchedule {
  std::vector<ExternalForce> forces;
  PushDirection direction = PushDirection::kBackward;
  std::string magnitude_class = "small";

  void validate() const {
    for (std::size_t i = 0; i < forces.size(); ++i)
      for (std::size_t k = i + 1; k < forces.size(); ++k)
        if (forces[i].t_on < forces[k].t_off && forces[k].t_on < forces[i].t_off)
          throw std::invalid_argument("disturbance windows overlap");
  }
};

/// Pushes of `magnitude` newtons lasting `duration` at each time in `times`.
inline DisturbanceSchedule make_push_schedule(double magnitude, PushDirection dir, double duration = 0.1,
                                              std::vector<double> times = {2.0, 4.0, 6.0}) {
  DisturbanceSchedule s;
  s.direction = dir;
  const double fx = dir == PushDirection::kForward ? magnitude : -magnitude;
  for (double t : times) s.forces.emplace_back(fx, t, t + duration);
  s.validate();
  return s;
}

struct PushTrialResult {
  bool survived = false;
  double fall_time = std::numeric_limits<double>::quiet_NaN();
  Termination reason = Termination::kNone;
  TrackingReport report;
  RolloutLog log;
};

template <typename Source>
PushTrialResult run_push_trial(const Source& source, const SimConfig& sim, EpisodeConfig ep,
                               const DisturbanceSchedule& schedule, double v_d, std::uint64_t seed,
                               double transient = 1.0) {
  schedule.validate();
  RolloutOptions opts;
  opts.disturbances = schedule.forces;
  opts.speed_profile = {{0.0, v_d}};
  opts.log = true;
  RolloutResult r = rollout(source, sim, ep, seed, opts);
  PushTrialResult out;
  out.reason = r.reason;
  out.survived = r.reason == Termination::kTimeout;
  if (!out.survived && !r.log.empty()) out.fall_time = r.log.back().time;
  out.report = tracking_report(windowed_speed_trace(r.log), opts.speed_profile,
                               ep.max_sim_steps * sim.integrator.dt, transient);
  out.log = std::move(r.log);
  return out;
}

struct SweepRow {
  double magnitude = 0.0;
  bool survived = false;
  double fall_time = std::numeric_limits<double>::quiet_NaN();
  std::string reason;
};

struct PushSweep {
  std::vector<SweepRow> rows;

  /// Survive -> fall as magnitude grows, never back.
  bool monotone() const {
    bool fallen = false;
    for (const auto& r : rows) {
      if (!r.survived) fallen = true;
      else if (fallen) return false;
    }
    return true;
  }
  /// Largest magnitude survived before the first fall (0 if none).
  double tolerated() const {
    double t = 0.0;
    for (const auto& r : rows) {
      if (!r.survived) break;
      t = r.magnitude;
    }
    return t;
  }
};

template <typename Source>
PushSweep push_sweep(const Source& source, const SimConfig& sim, const EpisodeConfig& ep,
                     const std::vector<double>& magnitudes, PushDirection dir, double v_d, std::uint64_t seed,
                     double duration = 0.1) {
  PushSweep sweep;
  for (double m : magnitudes) {
    const PushTrialResult r = run_push_trial(source, sim, ep, make_push_schedule(m, dir, duration), v_d, seed);
    sweep.rows.push_back({m, r.survived, r.fall_time, to_string(r.reason)});
  }
  return sweep;
}

// ---------------------------------------------------------------------------
// Export

inline const char* trajectory_header() {
  return "time,q_t,q_sh,q_sk,q_nsh,q_nsk,dq_t,dq_sh,dq_sk,dq_nsh,dq_nsk,u_sh,u_sk,u_nsh,u_nsk,tau_phase,step_index,"
         "event_flag";
}

namespace detail {
inline void put(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}
inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return f;
}
}  // namespace detail

inline void write_trajectory_csv(std::ostream& os, const RolloutLog& log) {
  os << trajectory_header() << '\n';
  for (const auto& r : log) {
    detail::put(os, r.time);
    for (int i = 0; i < 5; ++i) os << ',', detail::put(os, r.q[i]);
    for (int i = 0; i < 5; ++i) os << ',', detail::put(os, r.dq[i]);
    for (int i = 0; i < 4; ++i) os << ',', detail::put(os, r.u[i]);
    os << ',', detail::put(os, r.tau);
    os << ',' << r.step_index << ',' << r.event << '\n';
  }
}

/// Inverse of write_trajectory_csv (fields not in the schema are zeroed).
inline RolloutLog read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != trajectory_header()) throw std::runtime_error("bad trajectory CSV header");
  RolloutLog log;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 18) throw std::runtime_error("trajectory CSV row has " + std::to_string(f.size()) + " fields");
    LogRow r;
    r.time = std::stod(f[0]);
    for (int i = 0; i < 5; ++i) r.q[i] = std::stod(f[1 + i]);
    for (int i = 0; i < 5; ++i) r.dq[i] = std::stod(f[6 + i]);
    for (int i = 0; i < 4; ++i) r.u[i] = std::stod(f[11 + i]);
    r.tau = std::stod(f[15]);
    r.step_index = std::stoi(f[16]);
    r.event = std::stoi(f[17]);
    log.push_back(r);
  }
  return log;
}

/// (q_i, dq_i) pairs per coordinate for limit-cycle plots.
inline void write_phase_plane_csv(std::ostream& os, const RolloutLog& log) {
  os << "time,step_index,q_t,dq_t,q_sh,dq_sh,q_sk,dq_sk,q_nsh,dq_nsh,q_nsk,dq_nsk\n";
  for (const auto& r : log) {
    detail::put(os, r.time);
    os << ',' << r.step_index;
    for (int i = 0; i < 5; ++i) {
      os << ',', detail::put(os, r.q[i]);
      os << ',', detail::put(os, r.dq[i]);
    }
    os << '\n';
  }
}

inline void write_speed_csv(std::ostream& os, const RolloutLog& log) {
  os << "time,v_d,v_inst,v_bar,reward\n";
  for (const auto& r : log) {
    detail::put(os, r.time);
    os << ',', detail::put(os, r.v_d);
    os << ',', detail::put(os, r.v_inst);
    os << ',', detail::put(os, r.v_bar);
    os << ',', detail::put(os, r.reward);
    os << '\n';
  }
}

/// Stick figure of one logged row, world frame, 200 px per meter.
inline std::string stick_figure_svg(const LogRow& row, const RobotParams& p) {
  const auto k = forward_kinematics(row.q, p);
  const double scale = 200.0, width = 400.0, height = 340.0, ground = 320.0;
  auto px = [&](const Vec2& v) { return width / 2 + scale * (v.x()); };
  auto py = [&](const Vec2& v) { return ground - scale * v.y(); };
  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<line x1=\"0\" y1=\"" << ground << "\" x2=\"" << width << "\" y2=\"" << ground
     << "\" stroke=\"#888\" stroke-width=\"2\"/>\n";
  auto seg = [&](const Vec2& a, const Vec2& b, const char* color) {
    os << "<line x1=\"" << px(a) << "\" y1=\"" << py(a) << "\" x2=\"" << px(b) << "\" y2=\"" << py(b)
       << "\" stroke=\"" << color << "\" stroke-width=\"6\" stroke-linecap=\"round\"/>\n";
  };
  seg(k.stance_foot, k.stance_knee, "#1f77b4");
  seg(k.stance_knee, k.hip, "#1f77b4");
  seg(k.hip, k.swing_knee, "#d62728");
  seg(k.swing_knee, k.swing_foot, "#d62728");
  seg(k.hip, k.torso_tip, "#333");
  os << "<text x=\"8\" y=\"20\" font-family=\"monospace\" font-size=\"14\">t = " << row.time
     << " s  x = " << row.stance_foot_x << " m</text>\n";
  os << "</svg>\n";
  return os.str();
}

struct ExportOptions {
  bool trajectory = true;
  bool phase_plane = true;
  bool speed = true;
  int frame_every = 0;  // rows between SVG frames; 0 disables frames
};

inline void export_log(const RolloutLog& log, const RobotParams& p, const std::filesystem::path& dir,
                       const ExportOptions& opts = {}) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  if (opts.trajectory) {
    auto f = detail::open_out(dir / "trajectory.csv");
    write_trajectory_csv(f, log);
  }
  if (opts.phase_plane) {
    auto f = detail::open_out(dir / "phase_plane.csv");
    write_phase_plane_csv(f, log);
  }
  if (opts.speed) {
    auto f = detail::open_out(dir / "speed.csv");
    write_speed_csv(f, log);
  }
  if (opts.frame_every > 0) {
    const auto frames = dir / "frames";
    std::filesystem::create_directories(frames, ec);
    if (ec) throw std::runtime_error("cannot create " + frames.string() + ": " + ec.message());
    int n = 0;
    for (std::size_t i = 0; i < log.size(); i += static_cast<std::size_t>(opts.frame_every)) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%06d.svg", n++);
      auto f = detail::open_out(frames / name);
      f << stick_figure_svg(log[i], p);
    }
  }
}

}  // namespace hzdrl
