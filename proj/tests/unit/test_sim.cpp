#include <doctest.h>

#include "test_util.hpp"
#include "wbstab/errors.hpp"
#include "wbstab/rbd.hpp"
#include "wbstab/servo.hpp"
#include "wbstab/simworld.hpp"

using namespace wbstab;
using namespace wbstab::model;
using namespace wbstab::sim;

namespace {

RobotModel box_model() {
  return load_model(R"(
link box mass=10 com=0,0,0.1 inertia=0.18333,0.18333,0.26667,0,0,0
joint root floating parent=world child=box
contact bottom link=box origin=0,0,0,1,0,0,0 foot=0.1,0.1
)");
}

// Heavy block with a pendulum arm hinged on top.
RobotModel pendulum_model() {
  return load_model(R"(
link block mass=50 com=0,0,0.1 inertia=1.5,1.5,2.5,0,0,0
link arm mass=1 com=0,0,-0.5 inertia=0.26,0.26,0.01,0,0,0
joint root floating parent=world child=block
joint swing revolute parent=block child=arm axis=0,1,0 origin=0,0,1.2,1,0,0,0 limits=-2,2 vmax=10 taumax=100
contact bottom link=block origin=0,0,0,1,0,0,0 foot=0.3,0.3
)");
}

servo::ServoParams pid(double kp, double kd, double ki, int n, double limit = 100.0) {
  return {VecX::Constant(n, kp), VecX::Constant(n, kd), VecX::Constant(n, ki), VecX::Constant(n, limit), false};
}

}  // namespace

TEST_CASE("servo law") {
  const servo::ServoParams p = pid(100.0, 0.0, 0.0, 3, 50.0);
  const servo::ServoState s = servo::ServoState::zero(3);
  const VecX z = VecX::Zero(3);
  SUBCASE("no error, no torque") {
    CHECK(servo::servo_torque(p, s, z, z, z, nullptr, 1e-3).tau.norm() == 0.0);
  }
  SUBCASE("proportional and saturated") {
    const VecX cmd = (VecX(3) << 0.1, 1.0, -1.0).finished();
    const VecX tau = servo::servo_torque(p, s, cmd, z, z, nullptr, 1e-3).tau;
    CHECK(tau[0] == doctest::Approx(10.0));
    CHECK(tau[1] == 50.0);
    CHECK(tau[2] == -50.0);
  }
  SUBCASE("stateless without integral gain") {
    servo::ServoState dirty = s;
    dirty.integral_error = VecX::Constant(3, 5.0);
    const VecX cmd = VecX::Constant(3, 0.2);
    CHECK(servo::servo_torque(p, dirty, cmd, z, z, nullptr, 1e-3).tau ==
          servo::servo_torque(p, s, cmd, z, z, nullptr, 1e-3).tau);
  }
  SUBCASE("anti-windup and bounds") {
    const servo::ServoParams q = pid(10.0, 1.0, 20.0, 3, 5.0);
    servo::ServoState st = s;
    test::Rng rng(41);
    double prev = 0.0;
    for (int k = 0; k < 2000; ++k) {
      const auto out = servo::servo_torque(q, st, VecX::Constant(3, 1.0), z, rng.vec(3), nullptr, 1e-2);
      st = out.state;
      CHECK(out.tau.cwiseAbs().maxCoeff() <= 5.0);
      prev = st.integral_error[0];
    }
    CHECK(prev == doctest::Approx(5.0 / 20.0));
  }
  SUBCASE("monotone in the position error") {
    double last = 0.0;
    for (double e = 0.0; e < 0.5; e += 0.01) {
      const double t = servo::servo_torque(p, s, VecX::Constant(3, e), z, z, nullptr, 1e-3).tau[0];
      CHECK(std::abs(t) >= last);
      last = std::abs(t);
    }
  }
  SUBCASE("validation") {
    servo::ServoParams bad = p;
    bad.kp[1] = -1.0;
    CHECK_THROWS_AS(bad.check(3), ValidationError);
    CHECK_THROWS_AS(p.check(4), ValidationError);
    CHECK_THROWS_AS(servo::servo_torque(p, s, z, z, z, nullptr, 0.0), ValidationError);
  }
}

TEST_CASE("platform motion") {
  ScenarioShape shape;
  const auto coupled = scenario_coupled(shape);
  REQUIRE(coupled.size() == 1);
  CHECK(coupled[0].motion.frequency == doctest::Approx(0.25).epsilon(1e-3));
  const double h = 1e-6;
  for (double t : {0.3, 1.7, 4.2}) {
    const Transform Xp = coupled[0].pose(t + h);
    const Transform Xm = coupled[0].pose(t - h);
    const SpatialMotion v = coupled[0].velocity(t);
    CHECK((v.linear - (Xp.translation - Xm.translation) / (2 * h)).norm() <= 1e-6);
    CHECK((v.angular - spatial::log_so3(Xp.rotation * Xm.rotation.transpose()) / (2 * h)).norm() <= 1e-6);
  }
  // peak attitude rate per axis matches the requested rate
  double peak = 0.0;
  for (double t = 1.0; t < 6.0; t += 1e-3) peak = std::max(peak, std::abs(coupled[0].velocity(t).angular.x()));
  CHECK(peak == doctest::Approx(shape.attitude_rate).epsilon(0.02));

  ScenarioShape still = shape;
  still.attitude_rate = 0.0;
  const auto zero = scenario_coupled(still);
  CHECK(zero[0].pose(3.0).translation == Vec3::Zero());

  const auto drop = scenario_drop(0.03, 5.0 * M_PI / 180.0, 3.5, Vec3(0, 0.1, 0), Vec3(0, -0.1, 0));
  CHECK(drop[0].pose(3.49).translation.z() == 0.0);
  CHECK(drop[0].pose(3.5).translation.z() == doctest::Approx(-0.03));
  CHECK(drop[1].pose(3.5).translation.z() == 0.0);
  const auto none = scenario_drop(0.0, 0.0, 3.5, Vec3(0, 0.1, 0), Vec3(0, -0.1, 0));
  CHECK(none[0].pose(5.0).rotation == Mat3::Identity());
}

TEST_CASE("free fall") {
  const RobotModel m = builtin_biped();
  World w(m, scenario_flat(), servo::default_params(m));
  Configuration q = biped_default_stance(m, 1.0);
  w.reset(q);
  const double z0 = w.state().base_pose.translation.z();
  for (int k = 0; k < 300; ++k) w.step(q.joints, 1e-3);
  const double drop = z0 - w.state().base_pose.translation.z();
  CHECK(drop == doctest::Approx(0.5 * 9.81 * 0.09).epsilon(0.01));
  CHECK(w.measured_wrenches()[0].force.norm() == 0.0);
}

TEST_CASE("biped stands on flat ground") {
  const RobotModel m = builtin_biped();
  World w(m, scenario_flat(), servo::default_params(m));
  const Configuration q = biped_default_stance(m);
  w.reset(q);
  for (int k = 0; k < 4000; ++k) {
    w.step(q.joints, 1e-3);
    for (const auto& foot : w.corners())
      for (const CornerState& c : foot) {
        CHECK(c.normal_force >= 0.0);
        CHECK(c.tangential_force <= 0.7 * c.normal_force + 1e-9);
      }
  }
  REQUIRE(w.status() == SimStatus::ok);
  const double fz = w.measured_wrenches()[0].force.z() + w.measured_wrenches()[1].force.z();
  CHECK(fz == doctest::Approx(686.7).epsilon(2.0 / 686.7));
  INFO("velocity ", w.state().velocity().transpose());
  CHECK(w.state().velocity().norm() < 1e-3);

  SUBCASE("sensor wrench is the sum of corner wrenches at the sole") {
    for (int c = 0; c < 2; ++c) {
      const Vec3 origin = w.sensor_frames()[c].translation;
      SpatialForce sum;
      for (int k = 0; k < 4; ++k) {
        sum.force += w.corners()[c][k].force;
        sum.moment += (w.corners()[c][k].point - origin).cross(w.corners()[c][k].force);
      }
      CHECK((sum.vector() - w.raw_wrenches()[c].vector()).norm() <= 1e-12 * sum.vector().norm());
    }
  }
}

TEST_CASE("Coulomb threshold on an incline") {
  const RobotModel m = box_model();
  for (const double deg : {20.0, 40.0}) {
    const double a = deg * M_PI / 180.0;
    Platform slope;
    slope.id = "slope";
    slope.half_extents = Vec2(5.0, 5.0);
    slope.base_rotation = spatial::rpy_to_rotation(a, 0.0, 0.0);
    servo::ServoParams none{VecX(0), VecX(0), VecX(0), VecX(0), false};
    World w(m, {slope}, none);
    Configuration q = Configuration::zero(m);
    q.base_pose.rotation = slope.base_rotation;
    q.base_pose.translation = slope.base_rotation * Vec3(0.0, 0.0, -9.81 * 10.0 / 4e5);
    w.reset(q);
    const VecX empty(0);
    for (int k = 0; k < 1000; ++k) w.step(empty, 1e-3);
    const Vec3 along = slope.base_rotation.transpose() * w.state().base_pose.translation;
    if (deg < 30.0) CHECK(std::abs(along.y()) < 1e-3);
    else CHECK(std::abs(along.y()) > 0.5);
  }
}

TEST_CASE("pendulum servo with integral action") {
  const RobotModel m = pendulum_model();
  World w(m, scenario_flat(), pid(60.0, 6.0, 120.0, 1));
  Configuration q = Configuration::zero(m);
  q.base_pose.translation.z() = -9.81 * 51.0 / 4e5;
  w.reset(q);
  const VecX cmd = VecX::Constant(1, 0.3);
  for (int k = 0; k < 6000; ++k) w.step(cmd, 1e-3);
  CHECK(std::abs(w.state().joints[0] - 0.3) < 1e-3);
  World p_only(m, scenario_flat(), pid(60.0, 6.0, 0.0, 1));
  p_only.reset(q);
  for (int k = 0; k < 6000; ++k) p_only.step(cmd, 1e-3);
  CHECK(std::abs(p_only.state().joints[0] - 0.3) > 1e-2);
}

TEST_CASE("contact force of the rigid-contact model") {
  // F = Gamma_c tau + h_c against the KKT contact solve
  const RobotModel m = builtin_biped();
  test::Rng rng(42);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Configuration q = rng.configuration(m);
    const VecX tau = rng.vec(12, 80.0);
    const auto [qdd, F] = constrained_forward_dynamics(m, q, tau, {"l_sole", "r_sole"});
    const rbd::ContactQuantities cq = rbd::contact_quantities(m, q, {"l_sole", "r_sole"});
    const VecX predicted = cq.gamma_c * tau + cq.h_c;
    worst = std::max(worst, (predicted - F).norm() / F.norm());
    const rbd::DynamicsQuantities d = rbd::dynamics_quantities(m, q, {"l_sole", "r_sole"});
    CHECK((d.Jc * qdd + d.Jc_dot_qdot).norm() <= 1e-8 * std::max(1.0, qdd.norm()));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("energy rate of the plant") {
  // d/dt (KE + PE) = qdot' (S' tau + J' F) at every sub-step
  const RobotModel m = builtin_biped();
  World w(m, scenario_flat(), servo::default_params(m));
  Configuration q0 = biped_default_stance(m);
  q0.base_pose.translation.z() += 0.002;
  w.reset(q0);
  VecX cmd = q0.joints;
  cmd[3] += 0.1;
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    w.step(cmd, 1e-3);
    const Configuration& q = w.state();
    rbd::Evaluator ev(m);
    ev.update(q);
    VecX gen = VecX::Zero(18);
    gen.tail(12) = w.last_torque();
    for (int c = 0; c < 2; ++c) gen += ev.jacobian(m.frame(m.contacts()[c].name)).transpose() * w.raw_wrenches()[c].vector();
    const VecX qdd = ev.mass_matrix().llt().solve(gen - ev.bias_forces());
    // energy along a smooth path through (q, qdot, qdd), fourth-order stencil
    const auto energy = [&](double s) {
      Configuration qs = rbd::integrate(q, q.velocity() + 0.5 * s * qdd, s);
      qs.set_velocity(q.velocity() + s * qdd);
      rbd::Evaluator e(m);
      e.update(qs);
      return e.kinetic_energy() + e.potential_energy();
    };
    const double h = 1e-4;
    const double dE = (-energy(2 * h) + 8 * energy(h) - 8 * energy(-h) + energy(-2 * h)) / (12 * h);
    const double power = q.velocity().dot(gen);
    worst = std::max(worst, std::abs(dE - power) / std::max(1.0, std::abs(power)));
  }
  CHECK(worst <= 1e-6);
}
