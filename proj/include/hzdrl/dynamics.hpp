#pragma once

// Pinned-stance equations of motion, fixed-step RK4 with guard localization,
// and the rigid plastic impact map with leg relabeling.

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "hzdrl/model.hpp"

namespace hzdrl {

using Vec7 = Eigen::Matrix<double, 7, 1>;
using Mat7 = Eigen::Matrix<double, 7, 7>;
using Vec10 = Eigen::Matrix<double, 10, 1>;
using Mat54 = Eigen::Matrix<double, 5, 4>;

/// Horizontal push at the torso COM, active on [t_on, t_off).
struct ExternalForce {
  double fx = 0.0;  // N, positive forward
  double t_on = 0.0;
  double t_off = 0.0;

  ExternalForce() = default;
  ExternalForce(double force, double on, double off) : fx(force), t_on(on), t_off(off) {
    if (!(t_off > t_on)) throw std::invalid_argument("ExternalForce requires t_off > t_on");
  }
  bool active(double t) const { return t >= t_on && t < t_off; }
  double at(double t) const { return active(t) ? fx : 0.0; }
};

struct IntegratorConfig {
  double dt = 0.002;
  double guard_tolerance = 0.005;      // m of allowed swing-foot penetration during flow
  double event_bisection_tol = 1e-12;   // s
  double friction_coefficient = 0.8;
  double divergence_bound = 1e6;

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("integrator.dt must be > 0");
    if (!(guard_tolerance > 0.0)) throw std::invalid_argument("integrator.guard_tolerance must be > 0");
    if (!(event_bisection_tol > 0.0)) throw std::invalid_argument("integrator.event_bisection_tol must be > 0");
    if (!(friction_coefficient > 0.0)) throw std::invalid_argument("integrator.friction_coefficient must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const IntegratorConfig& c) {
  j = nlohmann::json{{"dt", c.dt},
                     {"guard_tolerance", c.guard_tolerance},
                     {"event_bisection_tol", c.event_bisection_tol},
                     {"friction_coefficient", c.friction_coefficient}};
}

inline void from_json(const nlohmann::json& j, IntegratorConfig& c) {
  IntegratorConfig d;
  c.dt = j.value("dt", d.dt);
  c.guard_tolerance = j.value("guard_tolerance", d.guard_tolerance);
  c.event_bisection_tol = j.value("event_bisection_tol", d.event_bisection_tol);
  c.friction_coefficient = j.value("friction_coefficient", d.friction_coefficient);
  c.validate();
}

struct HybridState {
  JointConfig q = JointConfig::Zero();
  Vec5 dq = Vec5::Zero();
  int step_index = 0;
  double stance_foot_x = 0.0;  // world x of the current pin
  double time = 0.0;

  Vec10 packed() const {
    Vec10 x;
    x << q, dq;
    return x;
  }
  void unpack(const Vec10& x) {
    q = x.head<5>();
    dq = x.tail<5>();
  }
};

/// Actuation map: torques enter (q_sh, q_sk, q_nsh, q_nsk); the torso is unactuated.
inline Mat54 actuation_matrix() {
  Mat54 b = Mat54::Zero();
  b.bottomRows<4>().setIdentity();
  return b;
}

/// Recursive Newton-Euler on the planar tree: generalized forces (in q) that
/// produce accelerations ddq at state (q, dq). Gravity is included when
/// with_gravity is set.
inline Vec5 inverse_dynamics(const JointConfig& q, const Vec5& dq, const Vec5& ddq, const RobotParams& p,
                             bool with_gravity = true) {
  const LinkTree tree(p);
  const Mat5& T = absolute_angle_map();
  const Vec5 beta = T * q, dbeta = T * dq, ddbeta = T * ddq;
  const Vec2 g(0.0, with_gravity ? -p.gravity : 0.0);

  std::array<Vec2, kNumLinks> a_com, a_dist, n_axis;
  for (int i = 0; i < kNumLinks; ++i) {
    const auto& n = tree.nodes[i];
    const Vec2 a_prox = n.parent < 0 ? Vec2::Zero() : a_dist[n.parent];
    n_axis[i] = axis_up_derivative(beta[i]);
    const Vec2 axis_acc = n.sign * (n_axis[i] * ddbeta[i] - axis_up(beta[i]) * dbeta[i] * dbeta[i]);
    a_com[i] = a_prox + n.com * axis_acc;
    a_dist[i] = a_prox + n.length * axis_acc;
  }

  // Backward pass. subtree[i] accumulates m (a - g) over strict descendants.
  std::array<Vec2, kNumLinks> subtree;
  subtree.fill(Vec2::Zero());
  Vec5 q_beta;
  for (int i = kNumLinks - 1; i >= 0; --i) {
    const auto& n = tree.nodes[i];
    const Vec2 own = n.mass * (a_com[i] - g);
    q_beta[i] = n.inertia * ddbeta[i] + n.sign * n_axis[i].dot(n.com * own + n.length * subtree[i]);
    if (n.parent >= 0) subtree[n.parent] += own + subtree[i];
  }
  return T.transpose() * q_beta;
}

/// Columns from unit-acceleration sweeps with zero velocity and gravity.
inline Mat5 mass_matrix(const JointConfig& q, const RobotParams& p) {
  Mat5 d;
  const Vec5 zero = Vec5::Zero();
  for (int k = 0; k < 5; ++k) d.col(k) = inverse_dynamics(q, zero, Vec5::Unit(k), p, false);
  return 0.5 * (d + d.transpose());
}

/// C(q, dq) dq + G(q).
inline Vec5 bias_forces(const JointConfig& q, const Vec5& dq, const RobotParams& p) {
  return inverse_dynamics(q, dq, Vec5::Zero(), p, true);
}

inline Vec5 gravity_vector(const JointConfig& q, const RobotParams& p) {
  return bias_forces(q, Vec5::Zero(), p);
}

/// Generalized force of a horizontal force fx at the torso COM.
inline Vec5 torso_force_generalized(const JointConfig& q, const RobotParams& p, double fx) {
  if (fx == 0.0) return Vec5::Zero();
  return com_jacobian(q, p, kTorsoLink).transpose() * Vec2(fx, 0.0);
}

struct SingularMassMatrix : std::runtime_error {
  double rcond;
  explicit SingularMassMatrix(double rc)
      : std::runtime_error("mass matrix numerically singular (rcond " + std::to_string(rc) + ")"), rcond(rc) {}
};

inline Vec5 forward_dynamics(const JointConfig& q, const Vec5& dq, const Vec4& u, const RobotParams& p,
                             double torso_fx = 0.0) {
  const Mat5 d = mass_matrix(q, p);
  const Eigen::LDLT<Mat5> ldlt(d);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-12) throw SingularMassMatrix(ldlt.rcond());
  const Vec5 rhs = actuation_matrix() * u + torso_force_generalized(q, p, torso_fx) - bias_forces(q, dq, p);
  return ldlt.solve(rhs);
}

inline Vec5 forward_dynamics(const JointConfig& q, const Vec5& dq, const Vec4& u, const RobotParams& p,
                             const std::optional<ExternalForce>& f, double t) {
  return forward_dynamics(q, dq, u, p, f ? f->at(t) : 0.0);
}

inline double total_energy(const JointConfig& q, const Vec5& dq, const RobotParams& p) {
  return 0.5 * dq.dot(mass_matrix(q, p) * dq) + potential_energy(q, p);
}

/// One classical RK4 step of x' = f(t, x).
template <typename Vec, typename Field>
Vec rk4_step(const Field& f, double t, const Vec& x, double h) {
  const Vec k1 = f(t, x);
  const Vec k2 = f(t + 0.5 * h, Vec(x + 0.5 * h * k1));
  const Vec k3 = f(t + 0.5 * h, Vec(x + 0.5 * h * k2));
  const Vec k4 = f(t + h, Vec(x + h * k3));
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// RK4 step of size dt; if `crossed(x_end)` reports a guard crossing, the
/// crossing time inside (0, dt] is bisected to `tol` by re-stepping from x.
/// Returns the end state and the elapsed step length.
template <typename Vec, typename Field, typename Guard>
std::pair<Vec, double> rk4_step_with_guard(const Field& f, const Guard& crossed, double t, const Vec& x,
                                           double dt, double tol, bool* hit) {
  Vec x_end = rk4_step(f, t, x, dt);
  *hit = crossed(x_end);
  if (!*hit) return {x_end, dt};
  double lo = 0.0, hi = dt;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    Vec xm = rk4_step(f, t, x, mid);
    if (crossed(xm)) {
      hi = mid;
      x_end = xm;
    } else {
      lo = mid;
    }
  }
  return {x_end, hi};
}

/// Swing foot at or below the ground, ahead of the stance foot, descending.
inline bool impact_guard(const Vec10& x, const RobotParams& p) {
  const JointConfig q = x.head<5>();
  const auto kin = forward_kinematics(q, p);
  if (kin.swing_foot.y() > 0.0 || kin.swing_foot.x() <= 0.0) return false;
  const Vec5 dq = x.tail<5>();
  return (swing_foot_jacobian(q, p) * dq).y() < 0.0;
}

enum class FlowEvent { kNone, kImpact, kPenetration, kDivergence };

struct StepOutcome {
  HybridState state;
  FlowEvent event = FlowEvent::kNone;
};

/// Torque callback: 4 torques given the current (stage) state and time.
using TorqueFn = std::function<Vec4(const HybridState&)>;

/// Advances the pinned model by one dt. When the swing foot crosses the
/// ground from above while ahead of the stance foot and descending, the
/// crossing is localized and the pre-impact state returned with kImpact.
template <typename Controller>
StepOutcome integrate(const HybridState& s, const Controller& controller, const std::optional<ExternalForce>& force,
                      const IntegratorConfig& cfg, const RobotParams& p) {
  HybridState scratch = s;
  auto field = [&](double t, const Vec10& x) -> Vec10 {
    scratch.unpack(x);
    scratch.time = t;
    const Vec4 u = controller(scratch);
    Vec10 dx;
    dx.head<5>() = x.tail<5>();
    dx.tail<5>() = forward_dynamics(scratch.q, scratch.dq, u, p, force, t);
    return dx;
  };
  auto crossed = [&](const Vec10& x) { return impact_guard(x, p); };

  bool hit = false;
  const auto [x1, h] = rk4_step_with_guard(field, crossed, s.time, s.packed(), cfg.dt, cfg.event_bisection_tol, &hit);
  StepOutcome out;
  out.state = s;
  out.state.unpack(x1);
  out.state.time = s.time + h;
  if (!x1.allFinite() || x1.cwiseAbs().maxCoeff() > cfg.divergence_bound) {
    out.event = FlowEvent::kDivergence;
  } else if (hit) {
    out.event = FlowEvent::kImpact;
  } else if (swing_foot_height(out.state.q, p) < -cfg.guard_tolerance) {
    out.event = FlowEvent::kPenetration;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Impact

struct ImpactSolution {
  Vec5 dq_plus;         // pinned-coordinate rates after impact, before relabeling
  Vec2 impulse;         // at the new contact, (tangential, normal)
  Vec2 old_foot_velocity;
  double balance_residual = 0.0;  // || D_e (dq+ - dq-) - E^T F ||
  double contact_speed = 0.0;     // || new contact point velocity after ||
  double energy_before = 0.0;
  double energy_after = 0.0;
};

/// Extended (unpinned) mass matrix with coordinates (q, foot_x, foot_y).
inline Mat7 extended_mass_matrix(const JointConfig& q, const RobotParams& p) {
  const LinkTree tree(p);
  Mat7 de = Mat7::Zero();
  de.topLeftCorner<5, 5>() = mass_matrix(q, p);
  Eigen::Matrix<double, 2, 5> moment = Eigen::Matrix<double, 2, 5>::Zero();
  for (int i = 0; i < kNumLinks; ++i) moment += tree.nodes[i].mass * com_jacobian(q, p, i);
  de.block<2, 5>(5, 0) = moment;
  de.block<5, 2>(0, 5) = moment.transpose();
  de.bottomRightCorner<2, 2>() = p.total_mass() * Eigen::Matrix2d::Identity();
  return de;
}

/// Plastic impact at the swing foot: solves
///   D_e dq+ - E^T F = D_e dq-,   E dq+ = 0
/// with E the swing-foot Jacobian in extended coordinates.
inline ImpactSolution solve_impact(const JointConfig& q, const Vec5& dq_minus, const RobotParams& p) {
  const Mat7 de = extended_mass_matrix(q, p);
  Eigen::Matrix<double, 2, 7> e;
  e.leftCols<5>() = swing_foot_jacobian(q, p);
  e.rightCols<2>().setIdentity();

  Vec7 dqe_minus = Vec7::Zero();
  dqe_minus.head<5>() = dq_minus;

  Eigen::Matrix<double, 9, 9> a = Eigen::Matrix<double, 9, 9>::Zero();
  a.topLeftCorner<7, 7>() = de;
  a.block<7, 2>(0, 7) = -e.transpose();
  a.block<2, 7>(7, 0) = e;
  Eigen::Matrix<double, 9, 1> rhs = Eigen::Matrix<double, 9, 1>::Zero();
  rhs.head<7>() = de * dqe_minus;
  const Eigen::Matrix<double, 9, 1> sol = a.fullPivLu().solve(rhs);

  ImpactSolution out;
  const Vec7 dqe_plus = sol.head<7>();
  out.dq_plus = dqe_plus.head<5>();
  out.old_foot_velocity = dqe_plus.tail<2>();
  out.impulse = sol.tail<2>();
  out.balance_residual = (de * (dqe_plus - dqe_minus) - e.transpose() * out.impulse).norm();
  out.contact_speed = (e * dqe_plus).norm();
  out.energy_before = 0.5 * dqe_minus.dot(de * dqe_minus);
  out.energy_after = 0.5 * dqe_plus.dot(de * dqe_plus);
  return out;
}

struct InvalidImpact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Impact followed by stance/swing relabeling. The new pin is the old swing
/// foot; step_index increments.
inline HybridState impact_map(const HybridState& s, const RobotParams& p, double friction_coefficient = 0.8) {
  const ImpactSolution imp = solve_impact(s.q, s.dq, p);
  const double tangential = imp.impulse.x(), normal = imp.impulse.y();
  if (normal < 0.0) {
    std::ostringstream os;
    os << "impact requires tensile normal impulse (" << normal << " N s)";
    throw InvalidImpact(os.str());
  }
  if (std::abs(tangential) > friction_coefficient * normal) {
    std::ostringstream os;
    os << "impact impulse outside friction cone (|Ft/Fn| = " << std::abs(tangential) / std::max(normal, 1e-300)
       << ")";
    throw InvalidImpact(os.str());
  }
  HybridState out = s;
  out.stance_foot_x = s.stance_foot_x + forward_kinematics(s.q, p).swing_foot.x();
  out.q = swap_legs(s.q);
  out.dq = swap_legs(imp.dq_plus);
  out.step_index = s.step_index + 1;
  return out;
}

}  // namespace hzdrl
