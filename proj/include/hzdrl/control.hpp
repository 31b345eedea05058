#pragma once

#include <algorithm>
#include <stdexcept>

#include "hzdrl/gait.hpp"

namespace hzdrl {

/// Fixed proportional gain, policy-supplied derivative gain.
struct PDGains {
  double kp = 150.0;
  double kd = 10.0;
  double torque_limit = 150.0;

  void validate() const {
    if (!(kp > 0.0)) throw std::invalid_argument("gains.kp must be > 0");
    if (!(kd >= 0.0)) throw std::invalid_argument("gains.kd must be >= 0");
    if (!(torque_limit > 0.0)) throw std::invalid_argument("gains.torque_limit must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const PDGains& g) {
  j = nlohmann::json{{"kp", g.kp}, {"kd", g.kd}, {"torque_limit", g.torque_limit}};
}
inline void from_json(const nlohmann::json& j, PDGains& g) {
  PDGains d;
  g.kp = j.value("kp", d.kp);
  g.kd = j.value("kd", d.kd);
  g.torque_limit = j.value("torque_limit", d.torque_limit);
  g.validate();
}

/// u = clamp(kp e + kd de) with e = q_d - q_a.
inline Vec4 pd_torque(const Vec4& e, const Vec4& de, const PDGains& g) {
  Vec4 u = g.kp * e + g.kd * de;
  for (int i = 0; i < 4; ++i) u[i] = std::clamp(u[i], -g.torque_limit, g.torque_limit);
  return u;
}

/// Tracking torques for the virtual constraints of `coeffs` at state (q, dq).
inline Vec4 hzd_torque(const JointConfig& q, const Vec5& dq, const BezierCoeffs& coeffs, const PDGains& g,
                       const RobotParams& p, const PhaseConfig& phase_cfg) {
  const ConstraintError y = virtual_constraint_error(q, dq, coeffs, p, phase_cfg);
  return pd_torque(-y.e, -y.de, g);
}

}  // namespace hzdrl
