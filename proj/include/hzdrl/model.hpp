#pragma once

// Five-link planar biped (torso, two femurs, two tibias) with point feet.
//
// Frame: x forward, y up, stance foot pinned at the origin.
// Generalized coordinates q = (q_t, q_sh, q_sk, q_nsh, q_nsk):
//   q_t   torso absolute angle from vertical, positive leaning forward
//   q_sh  stance hip, thigh relative to torso, positive = flexion
//   q_sk  stance knee, shin relative to thigh, positive = shin folded back
//   q_nsh, q_nsk  the same for the swing leg
//
// Internally every link carries an absolute angle beta measured from the
// upward vertical, positive forward; its "up" axis is u(beta) = (sin, cos).

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace hzdrl {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Matrix<double, 4, 1>;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;
using Mat25 = Eigen::Matrix<double, 2, 5>;

/// Joint configuration, always ordered (q_t, q_sh, q_sk, q_nsh, q_nsk).
using JointConfig = Vec5;

enum Coord : int { kTorso = 0, kStanceHip = 1, kStanceKnee = 2, kSwingHip = 3, kSwingKnee = 4 };

struct LinkParams {
  double length = 0.0;       // m
  double mass = 0.0;         // kg
  double inertia_com = 0.0;  // kg m^2 about the COM
  double com_offset = 0.0;   // m, proximal joint (hip for torso/femur, knee for tibia) to COM

  void validate(const std::string& name) const {
    if (!(length > 0.0)) throw std::invalid_argument(name + ".length must be > 0");
    if (!(mass > 0.0)) throw std::invalid_argument(name + ".mass must be > 0");
    if (!(inertia_com > 0.0)) throw std::invalid_argument(name + ".inertia_com must be > 0");
    if (!(com_offset >= 0.0 && com_offset <= length))
      throw std::invalid_argument(name + ".com_offset must lie in [0, length]");
  }
};

struct RobotParams {
  LinkParams torso{0.63, 12.0, 1.33, 0.315};
  LinkParams femur{0.4, 6.8, 0.47, 0.2};
  LinkParams tibia{0.4, 3.2, 0.2, 0.2};
  double gravity = 9.81;

  double total_mass() const { return torso.mass + 2.0 * femur.mass + 2.0 * tibia.mass; }
  double leg_length() const { return femur.length + tibia.length; }

  void validate() const {
    torso.validate("torso");
    femur.validate("femur");
    tibia.validate("tibia");
    if (!(gravity > 0.0)) throw std::invalid_argument("gravity must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const LinkParams& p) {
  j = nlohmann::json{{"length", p.length},
                     {"mass", p.mass},
                     {"inertia_com", p.inertia_com},
                     {"com_offset", p.com_offset}};
}

inline void from_json(const nlohmann::json& j, LinkParams& p) {
  j.at("length").get_to(p.length);
  j.at("mass").get_to(p.mass);
  j.at("inertia_com").get_to(p.inertia_com);
  p.com_offset = j.value("com_offset", p.length / 2.0);
}

inline void to_json(nlohmann::json& j, const RobotParams& p) {
  j = nlohmann::json{{"torso", p.torso}, {"femur", p.femur}, {"tibia", p.tibia}, {"gravity", p.gravity}};
}

inline void from_json(const nlohmann::json& j, RobotParams& p) {
  RobotParams d;
  p.torso = j.contains("torso") ? j.at("torso").get<LinkParams>() : d.torso;
  p.femur = j.contains("femur") ? j.at("femur").get<LinkParams>() : d.femur;
  p.tibia = j.contains("tibia") ? j.at("tibia").get<LinkParams>() : d.tibia;
  p.gravity = j.value("gravity", d.gravity);
  p.validate();
}

inline Vec2 axis_up(double beta) { return {std::sin(beta), std::cos(beta)}; }
inline Vec2 axis_up_derivative(double beta) { return {std::cos(beta), -std::sin(beta)}; }

enum Link : int { kStanceTibia = 0, kStanceFemur = 1, kTorsoLink = 2, kSwingFemur = 3, kSwingTibia = 4 };
inline constexpr int kNumLinks = 5;

/// Maps joint rates to absolute link rates: beta_dot = T * q_dot (constant).
inline const Mat5& absolute_angle_map() {
  static const Mat5 T = [] {
    Mat5 m;
    m << 1, -1, 1, 0, 0,   // stance tibia
        1, -1, 0, 0, 0,    // stance femur
        1, 0, 0, 0, 0,     // torso
        1, 0, 0, -1, 0,    // swing femur
        1, 0, 0, -1, 1;    // swing tibia
    return m;
  }();
  return T;
}

/// The kinematic tree rooted at the pinned stance foot. Each link hangs off
/// its parent's distal point and extends along sign * u(beta).
struct LinkTree {
  struct Node {
    int parent;     // -1 for the root (stance foot pin)
    double sign;    // +1 points up the chain, -1 down (swing leg)
    double length;  // proximal-in-tree to distal-in-tree
    double com;     // proximal-in-tree to COM
    double mass;
    double inertia;
  };
  std::array<Node, kNumLinks> nodes;

  explicit LinkTree(const RobotParams& p)
      : nodes{{{-1, 1.0, p.tibia.length, p.tibia.length - p.tibia.com_offset, p.tibia.mass, p.tibia.inertia_com},
               {kStanceTibia, 1.0, p.femur.length, p.femur.length - p.femur.com_offset, p.femur.mass,
                p.femur.inertia_com},
               {kStanceFemur, 1.0, p.torso.length, p.torso.com_offset, p.torso.mass, p.torso.inertia_com},
               {kStanceFemur, -1.0, p.femur.length, p.femur.com_offset, p.femur.mass, p.femur.inertia_com},
               {kSwingFemur, -1.0, p.tibia.length, p.tibia.com_offset, p.tibia.mass, p.tibia.inertia_com}}} {}

  /// True when link a is b or an ancestor of b.
  bool on_path(int a, int b) const {
    for (int k = b; k >= 0; k = nodes[k].parent)
      if (k == a) return true;
    return false;
  }
};

struct KinematicPoints {
  Vec2 stance_foot = Vec2::Zero();
  Vec2 stance_knee;
  Vec2 hip;
  Vec2 torso_tip;
  Vec2 swing_knee;
  Vec2 swing_foot;
  std::array<Vec2, kNumLinks> com;  // indexed by Link
};

inline KinematicPoints forward_kinematics(const JointConfig& q, const RobotParams& params) {
  const LinkTree tree(params);
  const Vec5 beta = absolute_angle_map() * q;
  std::array<Vec2, kNumLinks> proximal, distal;
  KinematicPoints out;
  for (int i = 0; i < kNumLinks; ++i) {
    const auto& n = tree.nodes[i];
    proximal[i] = n.parent < 0 ? Vec2::Zero() : distal[n.parent];
    const Vec2 u = n.sign * axis_up(beta[i]);
    distal[i] = proximal[i] + n.length * u;
    out.com[i] = proximal[i] + n.com * u;
  }
  out.stance_knee = distal[kStanceTibia];
  out.hip = distal[kStanceFemur];
  out.torso_tip = distal[kTorsoLink];
  out.swing_knee = distal[kSwingFemur];
  out.swing_foot = distal[kSwingTibia];
  return out;
}

inline double hip_position_x(const JointConfig& q, const RobotParams& params) {
  const Vec5 beta = absolute_angle_map() * q;
  return params.tibia.length * std::sin(beta[kStanceTibia]) + params.femur.length * std::sin(beta[kStanceFemur]);
}

inline double hip_height(const JointConfig& q, const RobotParams& params) {
  const Vec5 beta = absolute_angle_map() * q;
  return params.tibia.length * std::cos(beta[kStanceTibia]) + params.femur.length * std::cos(beta[kStanceFemur]);
}

inline double swing_foot_height(const JointConfig& q, const RobotParams& params) {
  return forward_kinematics(q, params).swing_foot.y();
}

/// Jacobian (w.r.t. q) of a point fixed on `link` at distance `along` from
/// the link's tree-proximal end.
inline Mat25 point_jacobian(const JointConfig& q, const RobotParams& params, int link, double along) {
  const LinkTree tree(params);
  const Vec5 beta = absolute_angle_map() * q;
  Mat25 jb = Mat25::Zero();
  for (int k = link; k >= 0; k = tree.nodes[k].parent) {
    const auto& n = tree.nodes[k];
    const double lever = (k == link) ? along : n.length;
    jb.col(k) = n.sign * lever * axis_up_derivative(beta[k]);
  }
  return jb * absolute_angle_map();
}

inline Mat25 hip_jacobian(const JointConfig& q, const RobotParams& p) {
  return point_jacobian(q, p, kStanceFemur, p.femur.length);
}

inline Mat25 swing_foot_jacobian(const JointConfig& q, const RobotParams& p) {
  return point_jacobian(q, p, kSwingTibia, p.tibia.length);
}

inline Mat25 com_jacobian(const JointConfig& q, const RobotParams& p, int link) {
  return point_jacobian(q, p, link, LinkTree(p).nodes[link].com);
}

/// Both legs straight and together, torso vertical.
inline JointConfig upright_pose() { return JointConfig::Zero(); }

inline double potential_energy(const JointConfig& q, const RobotParams& p) {
  const auto kin = forward_kinematics(q, p);
  const LinkTree tree(p);
  double v = 0.0;
  for (int i = 0; i < kNumLinks; ++i) v += tree.nodes[i].mass * p.gravity * kin.com[i].y();
  return v;
}

/// Kinetic energy from per-link COM velocities and absolute angular rates.
inline double kinetic_energy(const JointConfig& q, const Vec5& dq, const RobotParams& p) {
  const LinkTree tree(p);
  const Vec5 dbeta = absolute_angle_map() * dq;
  double t = 0.0;
  for (int i = 0; i < kNumLinks; ++i) {
    const Vec2 v = com_jacobian(q, p, i) * dq;
    t += 0.5 * tree.nodes[i].mass * v.squaredNorm() + 0.5 * tree.nodes[i].inertia * dbeta[i] * dbeta[i];
  }
  return t;
}

inline Vec2 center_of_mass(const JointConfig& q, const RobotParams& p) {
  const auto kin = forward_kinematics(q, p);
  const LinkTree tree(p);
  Vec2 c = Vec2::Zero();
  for (int i = 0; i < kNumLinks; ++i) c += tree.nodes[i].mass * kin.com[i];
  return c / p.total_mass();
}

/// Exchange stance and swing legs: (q_sh, q_sk) <-> (q_nsh, q_nsk).
inline Vec5 swap_legs(const Vec5& x) {
  Vec5 y = x;
  y[kStanceHip] = x[kSwingHip];
  y[kStanceKnee] = x[kSwingKnee];
  y[kSwingHip] = x[kStanceHip];
  y[kSwingKnee] = x[kStanceKnee];
  return y;
}

}  // namespace hzdrl
