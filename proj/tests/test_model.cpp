#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hzdrl/model.hpp"
#include "oracles.hpp"

using namespace hzdrl;

TEST(RobotParams, DefaultsMatchPublishedTable) {
  const RobotParams p;
  EXPECT_EQ(p.torso.length, 0.63);
  EXPECT_EQ(p.femur.length, 0.4);
  EXPECT_EQ(p.tibia.length, 0.4);
  EXPECT_EQ(p.torso.mass, 12.0);
  EXPECT_EQ(p.femur.mass, 6.8);
  EXPECT_EQ(p.tibia.mass, 3.2);
  EXPECT_EQ(p.torso.inertia_com, 1.33);
  EXPECT_EQ(p.femur.inertia_com, 0.47);
  EXPECT_EQ(p.tibia.inertia_com, 0.2);
  EXPECT_NEAR(p.total_mass(), 32.0, 1e-12);
  EXPECT_NEAR(p.leg_length(), 0.8, 1e-15);
}

TEST(RobotParams, ComAtMidpointByDefault) {
  const RobotParams p;
  EXPECT_EQ(p.torso.com_offset, p.torso.length / 2);
  EXPECT_EQ(p.femur.com_offset, p.femur.length / 2);
  EXPECT_EQ(p.tibia.com_offset, p.tibia.length / 2);
}

TEST(RobotParams, ValidationRejectsBadLinks) {
  RobotParams p;
  p.femur.mass = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = RobotParams{};
  p.tibia.com_offset = 0.5;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = RobotParams{};
  p.torso.inertia_com = -1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(RobotParams, JsonRoundTripAndDefaultComOffset) {
  RobotParams p;
  p.torso.mass = 13.5;
  nlohmann::json j = p;
  const RobotParams back = j.get<RobotParams>();
  EXPECT_EQ(back.torso.mass, 13.5);
  EXPECT_EQ(back.femur.inertia_com, p.femur.inertia_com);

  nlohmann::json partial = {{"torso", {{"length", 0.7}, {"mass", 12.0}, {"inertia_com", 1.33}}}};
  const RobotParams q = partial.get<RobotParams>();
  EXPECT_DOUBLE_EQ(q.torso.com_offset, 0.35);
  EXPECT_EQ(q.femur.length, 0.4);
}

TEST(Kinematics, UprightPose) {
  const RobotParams p;
  const auto k = forward_kinematics(upright_pose(), p);
  EXPECT_NEAR(k.hip.x(), 0.0, 1e-12);
  EXPECT_NEAR(k.hip.y(), 0.80, 1e-12);
  EXPECT_NEAR(k.torso_tip.x(), 0.0, 1e-12);
  EXPECT_NEAR(k.torso_tip.y(), 1.43, 1e-12);
  EXPECT_NEAR(k.swing_foot.norm(), 0.0, 1e-12);
  EXPECT_EQ(k.stance_foot, Vec2::Zero());
  EXPECT_NEAR(hip_position_x(upright_pose(), p), 0.0, 1e-15);
  EXPECT_NEAR(swing_foot_height(upright_pose(), p), 0.0, 1e-15);
}

TEST(Kinematics, InclinedStraightStanceLeg) {
  const RobotParams p;
  for (double theta : {-0.3, -0.1, 0.05, 0.2, 0.4}) {
    JointConfig q = JointConfig::Zero();
    q[kTorso] = theta;  // whole body rigid, leaning forward about the foot
    EXPECT_NEAR(hip_position_x(q, p), 0.8 * std::sin(theta), 1e-14);
    EXPECT_NEAR(hip_height(q, p), 0.8 * std::cos(theta), 1e-14);
  }
}

TEST(Kinematics, SwingKneeFlexedNinetyDegrees) {
  const RobotParams p;
  JointConfig q = JointConfig::Zero();
  q[kSwingKnee] = M_PI / 2;
  const auto k = forward_kinematics(q, p);
  EXPECT_NEAR(k.swing_foot.y(), 0.4 * (1 - std::cos(M_PI / 2)), 1e-12);
  EXPECT_NEAR(k.swing_foot.x(), -0.4, 1e-12);  // shin folds backward
}

TEST(Kinematics, MatchesIndependentChain) {
  const RobotParams p;
  std::mt19937_64 rng(3);
  for (int n = 0; n < 200; ++n) {
    const JointConfig q = oracle::random_config(rng, 1.2);
    std::array<double, 5> qa;
    for (int i = 0; i < 5; ++i) qa[i] = q[i];
    const auto ch = oracle::chain(qa, p);
    const auto k = forward_kinematics(q, p);
    for (int l = 0; l < kNumLinks; ++l) {
      EXPECT_NEAR(k.com[l].x(), ch.com_x[l], 1e-14);
      EXPECT_NEAR(k.com[l].y(), ch.com_y[l], 1e-14);
    }
    // swing foot as an explicit two-segment composition from the hip
    const double bf = q[kTorso] - q[kSwingHip], bt = bf + q[kSwingKnee];
    const Vec2 foot = k.hip - 0.4 * Vec2(std::sin(bf), std::cos(bf)) - 0.4 * Vec2(std::sin(bt), std::cos(bt));
    EXPECT_NEAR((k.swing_foot - foot).norm(), 0.0, 1e-14);
    EXPECT_NEAR(swing_foot_height(q, p), foot.y(), 1e-14);
  }
}

TEST(Kinematics, JacobiansMatchCentralDifferences) {
  const RobotParams p;
  std::mt19937_64 rng(11);
  const double h = 1e-6;
  for (int n = 0; n < 1000; ++n) {
    const JointConfig q = oracle::random_config(rng, 1.0);
    const Mat25 jh = hip_jacobian(q, p), jf = swing_foot_jacobian(q, p);
    Mat25 fh, ff;
    for (int c = 0; c < 5; ++c) {
      JointConfig qp = q, qm = q;
      qp[c] += h;
      qm[c] -= h;
      const auto kp = forward_kinematics(qp, p), km = forward_kinematics(qm, p);
      fh.col(c) = (kp.hip - km.hip) / (2 * h);
      ff.col(c) = (kp.swing_foot - km.swing_foot) / (2 * h);
    }
    EXPECT_LE((jh - fh).norm(), 1e-6 * std::max(1.0, jh.norm()));
    EXPECT_LE((jf - ff).norm(), 1e-6 * std::max(1.0, jf.norm()));
    for (int l = 0; l < kNumLinks; ++l) {
      Mat25 fc;
      for (int c = 0; c < 5; ++c) {
        JointConfig qp = q, qm = q;
        qp[c] += h;
        qm[c] -= h;
        fc.col(c) = (forward_kinematics(qp, p).com[l] - forward_kinematics(qm, p).com[l]) / (2 * h);
      }
      EXPECT_LE((com_jacobian(q, p, l) - fc).norm(), 1e-6 * std::max(1.0, fc.norm()));
    }
  }
}

TEST(Kinematics, CenterOfMassAndPotential) {
  const RobotParams p;
  std::mt19937_64 rng(5);
  for (int n = 0; n < 50; ++n) {
    const JointConfig q = oracle::random_config(rng);
    EXPECT_NEAR(potential_energy(q, p), oracle::chain_potential(q, p), 1e-11);
    EXPECT_NEAR(potential_energy(q, p), p.total_mass() * p.gravity * center_of_mass(q, p).y(), 1e-10);
  }
}

TEST(Kinematics, SwapLegsIsInvolution) {
  std::mt19937_64 rng(9);
  for (int n = 0; n < 100; ++n) {
    const Vec5 x = oracle::random_config(rng);
    EXPECT_EQ(swap_legs(swap_legs(x)), x);
    EXPECT_EQ(swap_legs(x)[kTorso], x[kTorso]);
    EXPECT_EQ(swap_legs(x)[kSwingHip], x[kStanceHip]);
    EXPECT_EQ(swap_legs(x)[kStanceKnee], x[kSwingKnee]);
  }
}

TEST(Kinematics, SwappedConfigurationMirrorsLegs) {
  // With the legs exchanged the swing foot lands where the stance foot was,
  // seen from the other foot.
  const RobotParams p;
  std::mt19937_64 rng(13);
  for (int n = 0; n < 100; ++n) {
    const JointConfig q = oracle::random_config(rng, 0.6);
    const auto a = forward_kinematics(q, p);
    const auto b = forward_kinematics(swap_legs(q), p);
    EXPECT_NEAR((b.hip - b.swing_foot - (a.hip - a.stance_foot)).norm(), 0.0, 1e-14);
  }
}
