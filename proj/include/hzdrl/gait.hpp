#pragma once

// Phase variable, degree-5 Bezier virtual constraints, and the 20 -> 24
// coefficient expansion that makes the step endpoints leg-swap invariant.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hzdrl/model.hpp"

namespace hzdrl {

inline constexpr int kBezierDegree = 5;
inline constexpr int kNumCoeffs = kBezierDegree + 1;
inline constexpr int kNumActuated = 4;
inline constexpr int kNumFreeCoeffs = 20;

using Vec6 = Eigen::Matrix<double, 6, 1>;
using CoeffMatrix = Eigen::Matrix<double, kNumActuated, kNumCoeffs>;
using FreeCoeffs = Eigen::Matrix<double, kNumFreeCoeffs, 1>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
  double mid() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }
};

inline void to_json(nlohmann::json& j, const Interval& i) { j = nlohmann::json::array({i.lo, i.hi}); }
inline void from_json(const nlohmann::json& j, Interval& i) {
  i.lo = j.at(0).get<double>();
  i.hi = j.at(1).get<double>();
  if (!(i.hi > i.lo)) throw std::invalid_argument("interval must satisfy hi > lo");
}

/// Per-joint coefficient bounds; hips share one interval, knees another.
struct GaitBounds {
  Interval hip{-0.8, 0.8};
  Interval knee{0.05, 1.5};

  const Interval& joint(int j) const { return (j % 2 == 0) ? hip : knee; }
  /// Bound of free entry i (coefficient-major, joint = i mod 4).
  const Interval& free_entry(int i) const { return joint(i % kNumActuated); }
};

inline void to_json(nlohmann::json& j, const GaitBounds& b) { j = nlohmann::json{{"hip", b.hip}, {"knee", b.knee}}; }
inline void from_json(const nlohmann::json& j, GaitBounds& b) {
  GaitBounds d;
  b.hip = j.contains("hip") ? j.at("hip").get<Interval>() : d.hip;
  b.knee = j.contains("knee") ? j.at("knee").get<Interval>() : d.knee;
}

struct PhaseConfig {
  double p_begin = -0.175;  // hip x relative to stance foot at step start
  double p_end = 0.175;     // ... and at step end

  void validate() const {
    if (!(p_end > p_begin)) throw std::invalid_argument("phase.p_end must exceed phase.p_begin");
  }
};

inline void to_json(nlohmann::json& j, const PhaseConfig& c) {
  j = nlohmann::json{{"p_begin", c.p_begin}, {"p_end", c.p_end}};
}
inline void from_json(const nlohmann::json& j, PhaseConfig& c) {
  PhaseConfig d;
  c.p_begin = j.value("p_begin", d.p_begin);
  c.p_end = j.value("p_end", d.p_end);
  c.validate();
}

/// Rows are (q_sh, q_sk, q_nsh, q_nsk); columns are Bezier coefficients 0..5.
struct BezierCoeffs {
  CoeffMatrix alpha = CoeffMatrix::Zero();

  /// One-based coefficient-major flat view: flat(4k + j) is joint j's k-th
  /// coefficient for j = 1..4, k = 0..5.
  double flat(int one_based) const {
    const int i = one_based - 1;
    return alpha(i % kNumActuated, i / kNumActuated);
  }

  bool impact_invariant() const {
    return flat(1) == flat(23) && flat(2) == flat(24) && flat(3) == flat(21) && flat(4) == flat(22);
  }

  bool within(const GaitBounds& b) const {
    for (int j = 0; j < kNumActuated; ++j)
      for (int k = 0; k < kNumCoeffs; ++k)
        if (!b.joint(j).contains(alpha(j, k))) return false;
    return true;
  }
};

inline void to_json(nlohmann::json& j, const BezierCoeffs& c) {
  j = nlohmann::json::array();
  for (int r = 0; r < kNumActuated; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < kNumCoeffs; ++k) row.push_back(c.alpha(r, k));
    j.push_back(row);
  }
}

inline void from_json(const nlohmann::json& j, BezierCoeffs& c) {
  if (!j.is_array() || j.size() != kNumActuated) throw std::invalid_argument("alpha must be a 4x6 array");
  for (int r = 0; r < kNumActuated; ++r) {
    if (!j[r].is_array() || j[r].size() != kNumCoeffs) throw std::invalid_argument("alpha must be a 4x6 array");
    for (int k = 0; k < kNumCoeffs; ++k) c.alpha(r, k) = j[r][k].get<double>();
  }
}

inline double phase_raw(const JointConfig& q, const RobotParams& p, const PhaseConfig& cfg) {
  return (hip_position_x(q, p) - cfg.p_begin) / (cfg.p_end - cfg.p_begin);
}

inline double phase(const JointConfig& q, const RobotParams& p, const PhaseConfig& cfg) {
  return std::clamp(phase_raw(q, p, cfg), 0.0, 1.0);
}

/// d tau / dt; zero while tau is clamped.
inline double phase_rate(const JointConfig& q, const Vec5& dq, const RobotParams& p, const PhaseConfig& cfg) {
  const double raw = phase_raw(q, p, cfg);
  if (raw < 0.0 || raw > 1.0) return 0.0;
  return hip_jacobian(q, p).row(0).dot(dq) / (cfg.p_end - cfg.p_begin);
}

namespace detail {
inline constexpr std::array<double, 6> kBinom5{1, 5, 10, 10, 5, 1};
inline constexpr std::array<double, 5> kBinom4{1, 4, 6, 4, 1};
}  // namespace detail

inline double bezier_eval(const Vec6& a, double tau) {
  const double s = 1.0 - tau;
  std::array<double, 6> tp{}, sp{};
  tp[0] = sp[0] = 1.0;
  for (int k = 1; k < 6; ++k) {
    tp[k] = tp[k - 1] * tau;
    sp[k] = sp[k - 1] * s;
  }
  double y = 0.0;
  for (int k = 0; k < 6; ++k) y += a[k] * detail::kBinom5[k] * tp[k] * sp[5 - k];
  return y;
}

/// d/dtau: 5 * (degree-4 Bezier on forward differences).
inline double bezier_derivative(const Vec6& a, double tau) {
  const double s = 1.0 - tau;
  std::array<double, 5> tp{}, sp{};
  tp[0] = sp[0] = 1.0;
  for (int k = 1; k < 5; ++k) {
    tp[k] = tp[k - 1] * tau;
    sp[k] = sp[k - 1] * s;
  }
  double y = 0.0;
  for (int k = 0; k < 5; ++k) y += (a[k + 1] - a[k]) * detail::kBinom4[k] * tp[k] * sp[4 - k];
  return 5.0 * y;
}

struct DesiredOutputs {
  Vec4 q_d;
  Vec4 dq_d;
};

inline DesiredOutputs desired_outputs(const JointConfig& q, const Vec5& dq, const BezierCoeffs& c,
                                      const RobotParams& p, const PhaseConfig& cfg) {
  const double tau = phase(q, p, cfg);
  const double rate = phase_rate(q, dq, p, cfg);
  DesiredOutputs out;
  for (int j = 0; j < kNumActuated; ++j) {
    const Vec6 row = c.alpha.row(j).transpose();
    out.q_d[j] = bezier_eval(row, tau);
    out.dq_d[j] = bezier_derivative(row, tau) * rate;
  }
  return out;
}

/// y2 = y_actual - y_desired and its rate.
struct ConstraintError {
  Vec4 e;
  Vec4 de;
};

inline ConstraintError virtual_constraint_error(const JointConfig& q, const Vec5& dq, const BezierCoeffs& c,
                                                const RobotParams& p, const PhaseConfig& cfg) {
  const DesiredOutputs d = desired_outputs(q, dq, c, p, cfg);
  return {Vec4(q.tail<4>()) - d.q_d, Vec4(dq.tail<4>()) - d.dq_d};
}

/// Fills columns 0..4 from `free` (coefficient-major) and sets column 5 so
/// that alpha[1]=alpha[23], alpha[2]=alpha[24], alpha[3]=alpha[21],
/// alpha[4]=alpha[22]: the step's final pose is the initial pose with legs
/// swapped.
inline BezierCoeffs expand_free_params(const FreeCoeffs& free, const GaitBounds& bounds) {
  for (int i = 0; i < kNumFreeCoeffs; ++i)
    if (!bounds.free_entry(i).contains(free[i]))
      throw std::out_of_range("free coefficient " + std::to_string(i) + " = " + std::to_string(free[i]) +
                              " outside its joint bounds");
  BezierCoeffs c;
  for (int i = 0; i < kNumFreeCoeffs; ++i) c.alpha(i % kNumActuated, i / kNumActuated) = free[i];
  c.alpha(0, 5) = c.alpha(2, 0);
  c.alpha(1, 5) = c.alpha(3, 0);
  c.alpha(2, 5) = c.alpha(0, 0);
  c.alpha(3, 5) = c.alpha(1, 0);
  return c;
}

inline FreeCoeffs extract_free_params(const BezierCoeffs& c) {
  FreeCoeffs f;
  for (int i = 0; i < kNumFreeCoeffs; ++i) f[i] = c.alpha(i % kNumActuated, i / kNumActuated);
  return f;
}

}  // namespace hzdrl
