#include <doctest.h>

#include <algorithm>
#include <limits>

#include "test_util.hpp"
#include "wbstab/baseline.hpp"
#include "wbstab/errors.hpp"
#include "wbstab/simworld.hpp"

using namespace wbstab;
using namespace wbstab::zmp;

namespace {

SpatialForce vertical(double fz, double mx = 0.0, double my = 0.0) {
  SpatialForce w;
  w.force = Vec3(0, 0, fz);
  w.moment = Vec3(mx, my, 0);
  return w;
}

// signed distance of p inside the convex hull of pts (negative outside)
double hull_margin(std::vector<Vec2> pts, const Vec2& p) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); });
  auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Vec2> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Vec2& a = h[i];
    const Vec2& b = h[(i + 1) % h.size()];
    margin = std::min(margin, cross(a, b, p) / (b - a).norm());
  }
  return margin;
}

std::vector<Transform> two_feet() {
  return {{Mat3::Identity(), Vec3(0.0, 0.1, 0.0)}, {Mat3::Identity(), Vec3(0.0, -0.1, 0.0)}};
}

}  // namespace

TEST_CASE("measure_zmp") {
  SUBCASE("single centred foot") {
    const Transform foot{Mat3::Identity(), Vec3(0.2, -0.3, 0.0)};
    CHECK((measure_zmp({vertical(300.0)}, {foot}) - Vec2(0.2, -0.3)).norm() < 1e-15);
  }
  SUBCASE("equal feet give the midpoint") {
    CHECK(measure_zmp({vertical(343.0), vertical(343.0)}, two_feet()).norm() < 1e-15);
  }
  SUBCASE("total moment about the ZMP has no horizontal part") {
    test::Rng rng(2);
    for (int k = 0; k < 200; ++k) {
      std::vector<SpatialForce> w;
      std::vector<Transform> p;
      for (int i = 0; i < 3; ++i) {
        SpatialForce f;
        f.force = Vec3(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(50, 400));
        f.moment = rng.vec3(20.0);
        w.push_back(f);
        p.push_back({rng.rotation(), Vec3(rng.uniform(), rng.uniform(), 0.0)});
      }
      const Vec2 z = measure_zmp(w, p);
      Vec3 n = Vec3::Zero();
      for (int i = 0; i < 3; ++i) n += w[i].moment + (p[i].translation - Vec3(z.x(), z.y(), 0.0)).cross(w[i].force);
      CHECK(n.head<2>().norm() < 1e-9);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(measure_zmp({vertical(10.0)}, {Transform{}}), Error);
    CHECK_THROWS_AS(measure_zmp({vertical(100.0)}, two_feet()), ValidationError);
  }
}

TEST_CASE("ZMP lies in the hull of loaded corners") {
  // ground truth from the plant under random joint commands
  const model::RobotModel m = model::builtin_biped();
  sim::World w(m, sim::scenario_flat(), servo::default_params(m));
  const model::Configuration q = model::biped_default_stance(m);
  w.reset(q);
  VecX cmd = q.joints;
  test::Rng rng(9);
  int checked = 0;
  for (int k = 0; k < 1500; ++k) {
    if (k % 100 == 0) cmd = q.joints + rng.vec(m.num_actuated(), 0.01);
    w.step(cmd, 1e-3);
    if (k % 10) continue;
    const Vec2 z = measure_zmp(w.raw_wrenches(), w.sensor_frames());
    std::vector<Vec2> loaded;
    for (const auto& foot : w.corners())
      for (const sim::CornerState& c : foot) {
        REQUIRE(c.normal_force >= 0.0);
        if (c.normal_force > 0.0) loaded.push_back(c.point.head<2>());
      }
    if (loaded.size() < 3) continue;  // line contact, no interior
    ++checked;
    // tangential forces act slightly below the sole origin (penetration)
    CHECK(hull_margin(loaded, z) > -1e-5);
  }
  CHECK(checked > 100);
}

TEST_CASE("zmp_stabilize") {
  const ZmpGains g;
  const auto feet = two_feet();
  const std::vector<SpatialForce> balanced{vertical(343.0), vertical(343.0)};
  const Vec3 com_ref(0.0, 0.0, 0.8);
  const double dt = 1e-3;

  SUBCASE("no error, no motion") {
    const ZmpOutput out = zmp_stabilize(ZmpState{}, g, Vec2::Zero(), Vec2::Zero(), com_ref, balanced, feet, dt);
    CHECK(out.state.com_offset.norm() == 0.0);
    CHECK(out.foot_height_rates.norm() == 0.0);
    CHECK(out.foot_tilt_rates.norm() == 0.0);
    CHECK(out.com_ref == com_ref);
  }
  SUBCASE("CoM reference moves toward the ZMP") {
    const ZmpOutput out = zmp_stabilize(ZmpState{}, g, Vec2(0.02, 0.0), Vec2::Zero(), com_ref, balanced, feet, dt);
    CHECK(out.state.com_offset.x() / dt == doctest::Approx(g.k_zmp * 0.02));
    CHECK(out.state.com_offset.y() == 0.0);
    CHECK(out.com_ref.x() > com_ref.x());
  }
  SUBCASE("overloaded foot rises") {
    const std::vector<SpatialForce> w{vertical(393.0), vertical(293.0)};
    const ZmpOutput out = zmp_stabilize(ZmpState{}, g, Vec2::Zero(), Vec2::Zero(), com_ref, w, feet, dt);
    CHECK(out.foot_height_rates[0] == doctest::Approx(g.k_fz * 100.0));
    CHECK(out.foot_height_rates[1] == doctest::Approx(-g.k_fz * 100.0));
  }
  SUBCASE("load share follows the reference") {
    CHECK(load_share(Vec2::Zero(), feet[0].translation, feet[1].translation) == doctest::Approx(0.5));
    CHECK(load_share(Vec2(0.0, 0.1), feet[0].translation, feet[1].translation) == doctest::Approx(1.0));
    CHECK(load_share(Vec2(0.0, -0.5), feet[0].translation, feet[1].translation) == 0.0);
    const std::vector<SpatialForce> w{vertical(514.5), vertical(171.5)};
    const ZmpOutput out = zmp_stabilize(ZmpState{}, g, Vec2(0.0, 0.05), Vec2(0.0, 0.05), com_ref, w, feet, dt);
    CHECK(std::abs(out.foot_height_rates[0]) < 1e-12);
  }
  SUBCASE("ankle damping drives the centre of pressure") {
    const std::vector<SpatialForce> w{vertical(343.0, 0.0, -10.0), vertical(343.0)};
    const ZmpOutput out = zmp_stabilize(ZmpState{}, g, Vec2::Zero(), Vec2::Zero(), com_ref, w, feet, dt);
    CHECK(out.foot_tilt_rates[1] == doctest::Approx(-g.k_ankle * 10.0));
    CHECK(out.foot_tilt_rates.tail<2>().norm() == 0.0);
  }
  SUBCASE("offsets are clamped") {
    ZmpState s;
    for (int k = 0; k < 20000; ++k)
      s = zmp_stabilize(s, g, Vec2(0.1, -0.1), Vec2::Zero(), com_ref, {vertical(600.0), vertical(86.0)}, feet, dt).state;
    CHECK(s.com_offset.x() == doctest::Approx(g.com_clamp));
    CHECK(s.com_offset.y() == doctest::Approx(-g.com_clamp));
    CHECK(std::abs(s.foot_height_offsets[0]) <= g.foot_clamp);
  }
}

TEST_CASE("zmp gains validation") {
  ZmpGains g;
  CHECK_NOTHROW(g.check());
  g.k_zmp = 0.0;
  CHECK_THROWS_AS(g.check(), ValidationError);
  g = ZmpGains{};
  g.com_clamp = -1.0;
  CHECK_THROWS_AS(g.check(), ValidationError);
}
