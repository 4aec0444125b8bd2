#include <cmath>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "opcm/error.hpp"
#include "opcm/metrics.hpp"
#include "opcm/objectives.hpp"
#include "opcm/priors.hpp"
#include "opcm/synth.hpp"

using namespace opcm;

namespace {

const CameraModel kCam{100.0, 100.0, 63.5, 47.5, {128, 96}};

// Image velocity by differentiating the projection of a static point seen
// from a camera moving with (v, w): dP/dt = -v - w x P.
Vec2 projected_velocity(const Vec2& pixel, const CameraModel& cam, const VelocitySample& vel,
                        double depth) {
  const Vec3 P((pixel.x() - cam.cx()) / cam.fx() * depth, (pixel.y() - cam.cy()) / cam.fy() * depth,
               depth);
  const Vec3 dP = -vel.v - vel.w.cross(P);
  const double h = 1e-6;
  const auto project = [&](const Vec3& Q) {
    return Vec2(cam.fx() * Q.x() / Q.z(), cam.fy() * Q.y() / Q.z());
  };
  return (project(P + h * dP) - project(P - h * dP)) / (2 * h);
}

double mean_cosine(const OrientationMap& map, const FlowField& flow) {
  double acc = 0.0;
  int n = 0;
  for (int y = 0; y < flow.u.height(); ++y) {
    for (int x = 0; x < flow.u.width(); ++x) {
      const Vec2 f(flow.u(x, y), flow.v(x, y));
      if (!map.valid(x, y) || f.norm() < 1e-6) continue;
      acc += f.normalized().dot(map.dirs(x, y));
      ++n;
    }
  }
  return acc / n;
}

}  // namespace

TEST(ImageMotion, HandExamples) {
  VelocitySample roll;
  roll.w = Vec3(0, 0, 1);
  const Vec2 r = motion_field_at(Vec2(kCam.cx() + 10, kCam.cy()), kCam, roll, 1.0);
  EXPECT_NEAR(r.x(), 0.0, 1e-12);
  EXPECT_NEAR(r.y(), -10.0, 1e-12);

  VelocitySample side;
  side.v = Vec3(0.4, 0, 0);
  const Vec2 s = motion_field_at(Vec2(5, 70), kCam, side, 2.0);
  EXPECT_NEAR(s.x(), -0.4 * 100.0 / 2.0, 1e-12);
  EXPECT_EQ(s.y(), 0.0);

  VelocitySample fwd;
  fwd.v = Vec3(0, 0, 1);
  EXPECT_EQ(motion_field_at(Vec2(kCam.cx(), kCam.cy()), kCam, fwd, 1.0), Vec2::Zero());
}

TEST(ImageMotion, MatchesProjectedPointVelocity) {
  const CameraModel cam(120.0, 90.0, 60.0, 44.0, {128, 96});
  const VelocitySample vel{0.0, Vec3(0.3, -0.2, 0.5), Vec3(0.1, -0.3, 0.4)};
  for (const Vec2 p : {Vec2(0, 0), Vec2(127, 0), Vec2(30, 70), Vec2(100, 95), Vec2(60, 44)}) {
    for (double depth : {0.5, 1.0, 3.0}) {
      const Vec2 got = motion_field_at(p, cam, vel, depth);
      EXPECT_LT((got - projected_velocity(p, cam, vel, depth)).norm(), 1e-5) << p.transpose();
    }
  }
}

TEST(ImageMotion, FocusOfExpansionIsStationary) {
  const VelocitySample vel{0.0, Vec3(0.1, 0.05, 1.0), Vec3::Zero()};
  const Vec2 foe(kCam.cx() + kCam.fx() * 0.1, kCam.cy() + kCam.fy() * 0.05);
  EXPECT_LT(motion_field_at(foe, kCam, vel, 1.0).norm(), 1e-9);
  // Flow points away from it.
  const Vec2 p = foe + Vec2(10, -5);
  EXPECT_GT(motion_field_at(p, kCam, vel, 1.0).dot(p - foe), 0.0);
}

TEST(EdgeBar, GroundTruthAndEvents) {
  const SceneSpec spec = edge_bar_scene(20.0, 0.1);
  const SyntheticData d = generate_events(spec);
  for (int y = 0; y < 96; y += 7) {
    for (int x = 0; x < 128; x += 9) {
      EXPECT_NEAR(d.flow.u(x, y), 2.0f, 1e-6f);
      EXPECT_EQ(d.flow.v(x, y), 0.0f);
    }
  }
  const Mask all(128, 96, 1);
  EXPECT_EQ(aee(d.flow, d.flow, all), 0.0);
  // Only the two columns swept by each bar edge fire: 2 px of travel each.
  for (const Event& e : d.events.events()) {
    const bool leading = e.x > 52 && e.x <= 54;
    const bool trailing = e.x > 40 && e.x <= 42;
    EXPECT_TRUE(leading || trailing) << e.x;
    EXPECT_EQ(e.p, leading ? 1 : -1);
  }
  EXPECT_EQ(d.events.size(), 4u * 96u);
}

TEST(Generator, IsDeterministicInTheSeed) {
  SceneSpec spec;
  spec.motion.v = Vec3(-0.2, 0.1, 0.0);
  const SyntheticData a = generate_events(spec);
  const SyntheticData b = generate_events(spec);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    EXPECT_EQ(a.events.events()[i].t, b.events.events()[i].t);
    EXPECT_EQ(a.events.events()[i].x, b.events.events()[i].x);
    EXPECT_EQ(a.events.events()[i].p, b.events.events()[i].p);
  }
  spec.texture_seed = 2;
  EXPECT_NE(generate_events(spec).events.size(), a.events.size());
}

TEST(Generator, JitterIsDeterministicAndStaysInTheWindow) {
  SceneSpec spec;
  spec.motion.v = Vec3(-0.2, 0.1, 0.0);
  spec.contrast_density = 3;
  spec.timing_jitter = 0.002;
  const SyntheticData a = generate_events(spec);
  const SyntheticData b = generate_events(spec);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    EXPECT_EQ(a.events.events()[i].t, b.events.events()[i].t);
    EXPECT_LE(a.events.events()[i].t, spec.window.t1);
  }
}

TEST(Generator, ForwardMotionRadialProfile) {
  SceneSpec spec;
  spec.motion.v = Vec3(0, 0, 1.0);
  const SyntheticData d = generate_events(spec);
  const int cy = 47;
  for (int x : {70, 80, 90, 100, 120}) {
    const double r = x - kCam.cx();
    EXPECT_NEAR(d.flow.u(x, cy), r * 1.0 * 0.1 / spec.depth, 1e-5);
    EXPECT_NEAR(d.flow.v(x, cy), (cy - kCam.cy()) * 0.1, 1e-5);
  }
  // Pixels near the focus of expansion barely move and barely fire.
  int center = 0;
  int rim = 0;
  for (const Event& e : d.events.events()) {
    if (std::abs(e.x - 63.5) < 8 && std::abs(e.y - 47.5) < 8) ++center;
    if (e.x < 16 && std::abs(e.y - 47.5) < 8) ++rim;
  }
  EXPECT_LT(center, rim);
}

TEST(Generator, PriorsMatchTheGroundTruthFlow) {
  // Planar branches need both sign flips to follow the synthesized flow.
  const PriorConvention flipped{true, true};
  const struct {
    Vec3 v, w;
    double min_cos;
  } cases[] = {
      {{0.3, 0, 0}, {0, 0, 0}, 0.999},  {{0, 0.3, 0}, {0, 0, 0}, 0.999},
      {{0, 0, 0.5}, {0, 0, 0}, 0.999},  {{0, 0, 0}, {0, 0, 0.5}, 0.999},
      {{0, 0, 0}, {0.3, 0, 0}, 0.95},   {{0, 0, 0}, {0, 0.3, 0}, 0.95},
  };
  for (const auto& c : cases) {
    SceneSpec spec;
    spec.motion.v = c.v;
    spec.motion.w = c.w;
    const SyntheticData d = generate_events(spec);
    const Priors p = make_priors(spec.camera, d.velocity, flipped);
    const OrientationMap& map = p.linear ? *p.linear : *p.angular;
    EXPECT_GE(mean_cosine(map, d.flow), c.min_cos) << c.v.transpose() << " " << c.w.transpose();
  }
}

TEST(Generator, TruthSharpensTheImage) {
  SceneSpec spec;
  spec.motion.v = Vec3(0.1, 0.05, 0.3);
  spec.motion.w = Vec3(0, 0, 0.2);
  const SyntheticData d = generate_events(spec);
  Image<Vec2> vel(128, 96);
  for (int y = 0; y < 96; ++y) {
    for (int x = 0; x < 128; ++x) vel(x, y) = Vec2(d.flow.u(x, y), d.flow.v(x, y)) / 0.1;
  }
  const ContrastObjective obj(d.events, spec.window, ContrastConfig{});
  EXPECT_GT(obj.multi_ref(vel), 1.0);
}

TEST(Generator, Validation) {
  SceneSpec spec;
  EXPECT_THROW(generate_events(spec), ValidationError);  // no motion, no events
  spec.motion.v = Vec3(0.1, 0, 0);
  spec.depth = 0.0;
  EXPECT_THROW(generate_events(spec), ValidationError);
  spec.depth = 1.0;
  spec.min_radius = 8.0;
  EXPECT_THROW(generate_events(spec), ValidationError);
  EXPECT_EQ(parse_scene_kind("edge_bar"), SceneKind::edge_bar);
  EXPECT_EQ(to_string(SceneKind::fronto_planar), "fronto_planar");
  EXPECT_THROW(parse_scene_kind("checkerboard"), ValidationError);
}
