#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "opcm/error.hpp"
#include "opcm/priors.hpp"
#include "opcm/render.hpp"

using namespace opcm;

namespace {

const CameraModel kCam(100.0, 100.0, 120.0, 90.0, {240, 180});
const CameraModel kBarrel(100.0, 100.0, 120.0, 90.0, {240, 180}, {-0.3, 0.08, 0.0, 0.0, 0.0});

Vec2 dir_at(const OrientationMap& m, int x, int y) { return m.dirs(x, y); }

void expect_unit_or_invalid(const OrientationMap& m) {
  for (int y = 0; y < m.dirs.height(); ++y) {
    for (int x = 0; x < m.dirs.width(); ++x) {
      if (m.valid(x, y)) {
        EXPECT_NEAR(m.dirs(x, y).norm(), 1.0, 1e-6);
      } else {
        EXPECT_EQ(m.dirs(x, y), Vec2::Zero());
      }
    }
  }
}

Image<Vec2> random_unit_field(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> a(-M_PI, M_PI);
  Image<Vec2> f(w, h);
  for (Vec2& v : f.data()) {
    const double t = a(rng);
    v = Vec2(std::cos(t), std::sin(t));
  }
  return f;
}

}  // namespace

// -------------------------------------------------------------- singularity

TEST(Singularity, Examples) {
  EXPECT_EQ(*singularity(kCam, Vec3(0, 0, 1)), Vec2(120, 90));
  EXPECT_EQ(*singularity(kCam, Vec3(0.1, 0, 1)), Vec2(130, 90));
  EXPECT_FALSE(singularity(kCam, Vec3(1, 0, 0)));
  EXPECT_FALSE(singularity(kCam, Vec3(1, 0, 1e-9)));
  // Outside the sensor is a valid outcome.
  EXPECT_EQ(*singularity(kCam, Vec3(5, 0, 1)), Vec2(620, 90));
}

// ------------------------------------------------------------- linear maps

TEST(LinearMap, ForwardMotionDiverges) {
  const OrientationMap m = linear_orientation_map(kCam, Vec3(0, 0, 1));
  EXPECT_EQ(m.kind, MapKind::linear);
  EXPECT_EQ(dir_at(m, 125, 90), Vec2(1, 0));
  EXPECT_EQ(dir_at(m, 120, 87), Vec2(0, -1));
  EXPECT_FALSE(m.valid(120, 90));
  EXPECT_EQ(m.invalid_count(), 1u);
}

TEST(LinearMap, BackwardMotionConverges) {
  const OrientationMap m = linear_orientation_map(kCam, Vec3(0, 0, -1));
  EXPECT_EQ(dir_at(m, 125, 90), Vec2(-1, 0));
  EXPECT_EQ(dir_at(m, 120, 87), Vec2(0, 1));
}

TEST(LinearMap, PlanarBranchIsConstant) {
  const OrientationMap m = linear_orientation_map(kCam, Vec3(1, 0, 0));
  EXPECT_FALSE(m.singularity);
  EXPECT_EQ(m.invalid_count(), 0u);
  for (const Vec2& d : m.dirs.data()) EXPECT_EQ(d, Vec2(1, 0));
  const OrientationMap flipped = linear_orientation_map(kCam, Vec3(1, 0, 0), {true, false});
  for (const Vec2& d : flipped.dirs.data()) EXPECT_EQ(d, Vec2(-1, 0));
  // The flip only touches the planar branch.
  EXPECT_EQ(linear_orientation_map(kCam, Vec3(0.2, 0.1, 1), {true, true}).dirs,
            linear_orientation_map(kCam, Vec3(0.2, 0.1, 1)).dirs);
}

TEST(LinearMap, ZeroVelocityIsAnError) {
  EXPECT_THROW(linear_orientation_map(kCam, Vec3(0, 0, 0)), ValidationError);
  EXPECT_THROW(angular_orientation_map(kCam, Vec3(1e-9, 0, 0)), ValidationError);
}

TEST(LinearMap, SingularityConsistency) {
  for (const Vec3& v : {Vec3(0.3, -0.2, 1.0), Vec3(-0.1, 0.4, -2.0)}) {
    const OrientationMap m = linear_orientation_map(kCam, v);
    const Vec2 s = *m.singularity;
    const double sign = v.z() > 0 ? 1.0 : -1.0;
    const int sx = static_cast<int>(s.x());
    const int sy = static_cast<int>(s.y());
    ASSERT_EQ(s, Vec2(sx, sy));
    for (int d : {1, 4, 20}) {
      EXPECT_EQ(dir_at(m, sx + d, sy), sign * Vec2(1, 0));
      EXPECT_EQ(dir_at(m, sx - d, sy), sign * Vec2(-1, 0));
      EXPECT_EQ(dir_at(m, sx, sy + d), sign * Vec2(0, 1));
      EXPECT_EQ(dir_at(m, sx, sy - d), sign * Vec2(0, -1));
    }
  }
}

TEST(LinearMap, ScalingInvariance) {
  const Vec3 v(0.3, -0.2, 0.7);
  const OrientationMap base = linear_orientation_map(kCam, v);
  for (double c : {2.0, 0.25, 1024.0}) {
    EXPECT_EQ(linear_orientation_map(kCam, c * v).dirs, base.dirs);
  }
  const OrientationMap three = linear_orientation_map(kCam, 3.0 * v);
  for (std::size_t i = 0; i < base.dirs.size(); ++i) {
    EXPECT_LT((three.dirs.data()[i] - base.dirs.data()[i]).norm(), 1e-12);
  }
}

TEST(LinearMap, UnitNormEverywhere) {
  for (const Vec3& v : {Vec3(0, 0, 1), Vec3(0.5, 2, -1), Vec3(3, -1, 0), Vec3(5, 5, 0.1)}) {
    expect_unit_or_invalid(linear_orientation_map(kCam, v));
    expect_unit_or_invalid(angular_orientation_map(kCam, v));
  }
}

// ------------------------------------------------------------ angular maps

TEST(AngularMap, CirculatesAroundTheSingularity) {
  const OrientationMap m = angular_orientation_map(kCam, Vec3(0, 0, 1));
  EXPECT_EQ(m.kind, MapKind::angular);
  EXPECT_EQ(dir_at(m, 121, 90), Vec2(0, -1));
  EXPECT_EQ(dir_at(m, 120, 91), Vec2(1, 0));
  const OrientationMap r = angular_orientation_map(kCam, Vec3(0, 0, -1));
  EXPECT_EQ(dir_at(r, 121, 90), Vec2(0, 1));
}

TEST(AngularMap, PlanarBranchRotatesTheAxis) {
  const OrientationMap m = angular_orientation_map(kCam, Vec3(0, 2, 0));
  // M (0, 2) = (2, 0).
  for (const Vec2& d : m.dirs.data()) EXPECT_EQ(d, Vec2(1, 0));
  const OrientationMap f = angular_orientation_map(kCam, Vec3(0, 2, 0), {false, true});
  for (const Vec2& d : f.dirs.data()) EXPECT_EQ(d, Vec2(-1, 0));
}

TEST(AngularMap, CurlIsPerpendicularToTheLinearMap) {
  const Vec3 axis(0.2, -0.1, 1.0);
  const OrientationMap lin = linear_orientation_map(kCam, axis);
  const OrientationMap ang = angular_orientation_map(kCam, 0.5 * axis);
  ASSERT_LT((*lin.singularity - *ang.singularity).norm(), 1e-12);
  for (int y = 0; y < 180; ++y) {
    for (int x = 0; x < 240; ++x) {
      if (!lin.valid(x, y) || !ang.valid(x, y)) continue;
      EXPECT_NEAR(lin.dirs(x, y).dot(ang.dirs(x, y)), 0.0, 1e-6);
    }
  }
}

// -------------------------------------------------------------- distortion

TEST(Distortion, ZeroCoefficientsAreBitwiseIdentity) {
  const OrientationMap m = linear_orientation_map(kCam, Vec3(0.1, 0.2, 1));
  const OrientationMap d = distort_orientation_map(m, kCam, FillMode::none);
  EXPECT_EQ(d.dirs, m.dirs);
  EXPECT_EQ(d.valid, m.valid);
}

TEST(Distortion, BarrelLeavesAnEmptyBandThenReplicateFillsIt) {
  const OrientationMap m = linear_orientation_map(kBarrel, Vec3(0.1, 0.2, 1));
  const OrientationMap raw = distort_orientation_map(m, kBarrel, FillMode::none);
  EXPECT_GT(raw.invalid_count(), 1000u);
  EXPECT_FALSE(raw.valid(0, 0));  // corners map outside the ideal image
  EXPECT_TRUE(raw.valid(120, 60));
  const OrientationMap filled = distort_orientation_map(m, kBarrel, FillMode::border_replicate);
  EXPECT_EQ(filled.invalid_count(), 0u);
  expect_unit_or_invalid(raw);
  expect_unit_or_invalid(filled);
  // Pixels that had a source keep it.
  for (int y = 0; y < 180; ++y) {
    for (int x = 0; x < 240; ++x) {
      if (raw.valid(x, y)) EXPECT_EQ(filled.dirs(x, y), raw.dirs(x, y));
    }
  }
}

TEST(Distortion, EveryFillLeavesNoHoles) {
  const OrientationMap m = angular_orientation_map(kBarrel, Vec3(0.1, 0.3, -1));
  for (FillMode f : {FillMode::navier_stokes, FillMode::border_reflect, FillMode::border_replicate}) {
    const OrientationMap d = distort_orientation_map(m, kBarrel, f);
    EXPECT_EQ(d.invalid_count(), 0u) << to_string(f);
    expect_unit_or_invalid(d);
  }
}

TEST(Distortion, ConstantMapStaysConstant) {
  const OrientationMap m = linear_orientation_map(kBarrel, Vec3(0.6, -0.8, 0));
  for (FillMode f : {FillMode::navier_stokes, FillMode::border_reflect, FillMode::border_replicate}) {
    const OrientationMap d = distort_orientation_map(m, kBarrel, f);
    for (const Vec2& dir : d.dirs.data()) EXPECT_LT((dir - Vec2(0.6, -0.8)).norm(), 1e-6);
  }
}

TEST(Distortion, SamplesTheUndistortedLocation) {
  // Oracle: the output direction at x_d is the ideal direction at undistort(x_d).
  const Vec3 v(0.1, 0.2, 1);
  const OrientationMap m = linear_orientation_map(kBarrel, v);
  const OrientationMap d = distort_orientation_map(m, kBarrel, FillMode::none);
  const Vec2 s = *m.singularity;
  for (int y = 40; y < 140; y += 7) {
    for (int x = 60; x < 180; x += 9) {
      Vec2 ideal;
      ASSERT_TRUE(undistort_point(kBarrel, kBarrel.to_normalized(Vec2(x, y)), ideal));
      const Vec2 src = kBarrel.to_pixel(ideal);
      if ((src - s).norm() < 5.0) continue;
      EXPECT_GT(d.dirs(x, y).dot((src - s).normalized()), 0.999) << x << "," << y;
    }
  }
}

TEST(Distortion, FillModeNames) {
  for (FillMode f : {FillMode::none, FillMode::navier_stokes, FillMode::border_reflect,
                     FillMode::border_replicate}) {
    EXPECT_EQ(parse_fill_mode(to_string(f)), f);
  }
  EXPECT_THROW(parse_fill_mode("wrap"), ValidationError);
}

// --------------------------------------------------------------- alignment

TEST(Alignment, PerfectAndOppositeAlignment) {
  const OrientationMap m = linear_orientation_map(kCam, Vec3(0.1, 0, 1));
  Image<Vec2> same(240, 180);
  Image<Vec2> opposite(240, 180);
  for (int y = 0; y < 180; ++y) {
    for (int x = 0; x < 240; ++x) {
      same(x, y) = 7.0 * m.dirs(x, y);
      opposite(x, y) = -0.5 * m.dirs(x, y);
    }
  }
  EXPECT_NEAR(alignment_score(same, m), 1.0, 1e-12);
  EXPECT_NEAR(alignment_score(opposite, m), -1.0, 1e-12);
}

TEST(Alignment, EmptyDomainIsAnError) {
  const OrientationMap m = linear_orientation_map(kCam, Vec3(0, 0, 1));
  EXPECT_THROW(alignment_score(Image<Vec2>(240, 180, Vec2::Zero()), m), NumericalError);
  EXPECT_FALSE(alignment_score_with_gradient(Image<Vec2>(240, 180, Vec2(1e-4, 0)), m, nullptr));
}

TEST(Alignment, MeanSquaredDifferenceIdentityOnRandomUnitFields) {
  std::mt19937_64 rng(1);
  const OrientationMap base = linear_orientation_map(kCam, Vec3(0, 0, 1));
  for (int trial = 0; trial < 10; ++trial) {
    OrientationMap m = base;
    m.dirs = random_unit_field(rng, 240, 180);
    m.valid = Mask(240, 180, 1);
    for (int k = 0; k < 500; ++k) {  // scattered invalid pixels
      const int x = static_cast<int>(rng() % 240);
      const int y = static_cast<int>(rng() % 180);
      m.valid(x, y) = 0;
    }
    const Image<Vec2> theta = random_unit_field(rng, 240, 180);
    const double a = alignment_score(theta, m);
    EXPECT_NEAR(orientation_mse(theta, m.dirs, m.valid), 2.0 - 2.0 * a, 1e-9);
  }
}

TEST(Alignment, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(2);
  const CameraModel small(20.0, 20.0, 8.0, 6.0, {16, 12});
  const OrientationMap m = linear_orientation_map(small, Vec3(0.1, 0.3, 1));
  std::normal_distribution<double> nd(0.0, 3.0);
  Image<Vec2> theta(16, 12);
  for (Vec2& t : theta.data()) t = Vec2(nd(rng), nd(rng));
  Image<Vec2> grad;
  alignment_score_with_gradient(theta, m, &grad);
  const double h = 1e-6;
  for (int y = 0; y < 12; y += 3) {
    for (int x = 0; x < 16; x += 3) {
      for (int c = 0; c < 2; ++c) {
        Image<Vec2> p = theta, q = theta;
        p(x, y)[c] += h;
        q(x, y)[c] -= h;
        const double fd = (alignment_score(p, m) - alignment_score(q, m)) / (2 * h);
        EXPECT_NEAR(grad(x, y)[c], fd, 1e-7);
      }
    }
  }
}

TEST(Alignment, MotionFieldOverloadUsesTheUpsampledField) {
  const OrientationMap m = linear_orientation_map(kCam, Vec3(1, 0, 0));
  const MotionField f({2, 2}, {240, 180}, Vec2(3, 0));
  EXPECT_NEAR(alignment_score(f, m), 1.0, 1e-12);
}

// ------------------------------------------------------------------ priors

TEST(MakePriors, SkipsZeroComponents) {
  const Priors lin = make_priors(kCam, {0.0, Vec3(0, 0, 1), Vec3::Zero()});
  EXPECT_TRUE(lin.linear);
  EXPECT_FALSE(lin.angular);
  const Priors both = make_priors(kBarrel, {0.0, Vec3(0, 0, 1), Vec3(0, 0, 1)});
  ASSERT_TRUE(both.linear && both.angular);
  EXPECT_EQ(both.linear->invalid_count(), 0u);  // distorted then filled
  EXPECT_TRUE(make_priors(kCam, {}).empty());
}

TEST(Render, HueEncodesDirection) {
  const auto right = direction_color(Vec2(1, 0));
  EXPECT_EQ(right, (std::array<std::uint8_t, 3>{255, 0, 0}));
  const auto zero = direction_color(Vec2::Zero());
  EXPECT_EQ(zero, (std::array<std::uint8_t, 3>{0, 0, 0}));
  // Opposite directions are 180 degrees apart in hue: red vs cyan.
  EXPECT_EQ(direction_color(Vec2(-1, 0)), (std::array<std::uint8_t, 3>{0, 255, 255}));
}
