#include "opcm/priors.hpp"

#include <cmath>
#include <deque>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/photo.hpp>

#include "opcm/error.hpp"

namespace opcm {

namespace {

constexpr double kTinyNorm = 1e-12;

OrientationMap empty_map(SensorSize s, MapKind kind) {
  return {Image<Vec2>(s.width, s.height, Vec2::Zero()), Mask(s.width, s.height, 0), kind, {}};
}

void set_dir(OrientationMap& map, int x, int y, const Vec2& d) {
  const double n = d.norm();
  if (n > kTinyNorm && std::isfinite(n)) {
    map.dirs(x, y) = d / n;
    map.valid(x, y) = 1;
  } else {
    map.dirs(x, y) = Vec2::Zero();
    map.valid(x, y) = 0;
  }
}

// Shared construction of both map kinds; `rotate` applies M for angular maps.
OrientationMap build_map(const CameraModel& cam, const Vec3& vel, MapKind kind, bool flip_planar) {
  if (!vel.allFinite()) throw ValidationError("velocity must be finite");
  if (vel.norm() <= kEpsVelocity) {
    throw ValidationError("velocity norm below threshold; no orientation map");
  }
  const SensorSize s = cam.sensor();
  OrientationMap map = empty_map(s, kind);
  map.singularity = singularity(cam, vel);
  const auto rotate = [kind](const Vec2& d) {
    return kind == MapKind::angular ? Vec2(d.y(), -d.x()) : d;
  };
  if (!map.singularity) {
    const Vec2 planar = rotate(flip_planar ? Vec2(-vel.x(), -vel.y()) : Vec2(vel.x(), vel.y()));
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) set_dir(map, x, y, planar);
    }
    return map;
  }
  const Vec2 sing = *map.singularity;
  const double sign = vel.z() > 0.0 ? 1.0 : -1.0;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) set_dir(map, x, y, rotate(sign * (Vec2(x, y) - sing)));
  }
  return map;
}

// Bilinear sample of the valid directions around a continuous location.
// Returns the zero vector when no valid tap carries weight.
Vec2 sample_dirs(const OrientationMap& map, const Vec2& p) {
  const SensorSize s = map.sensor();
  const int x0 = std::min(static_cast<int>(std::floor(p.x())), std::max(0, s.width - 2));
  const int y0 = std::min(static_cast<int>(std::floor(p.y())), std::max(0, s.height - 2));
  const double fx = p.x() - x0;
  const double fy = p.y() - y0;
  Vec2 acc = Vec2::Zero();
  double wsum = 0.0;
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 2; ++i) {
      const int x = x0 + i;
      const int y = y0 + j;
      if (!s.contains(x, y) || !map.valid(x, y)) continue;
      const double w = (i ? fx : 1.0 - fx) * (j ? fy : 1.0 - fy);
      acc += w * map.dirs(x, y);
      wsum += w;
    }
  }
  return wsum > 0.0 ? acc : Vec2::Zero();
}

// First valid pixel met when stepping from (x, y) toward `center`, together
// with the distance travelled. Returns false if the walk never meets one.
bool walk_to_valid(const OrientationMap& map, int x, int y, const Vec2& center, Vec2& hit,
                   double& dist) {
  const SensorSize s = map.sensor();
  const Vec2 start(x, y);
  Vec2 dir = center - start;
  const double len = dir.norm();
  if (len < kTinyNorm) return false;
  dir /= len;
  const double limit = len + std::hypot(s.width, s.height);
  for (double t = 0.5; t <= limit; t += 0.5) {
    const Vec2 q = start + t * dir;
    const int qx = static_cast<int>(std::lround(q.x()));
    const int qy = static_cast<int>(std::lround(q.y()));
    if (!s.contains(qx, qy)) {
      if (t > len) return false;
      continue;
    }
    if (map.valid(qx, qy)) {
      hit = Vec2(qx, qy);
      dist = t;
      return true;
    }
  }
  return false;
}

// Copies the nearest valid direction (4-connected BFS order) into every
// remaining empty pixel.
void fill_nearest(OrientationMap& map) {
  const SensorSize s = map.sensor();
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (map.valid(x, y)) queue.emplace_back(x, y);
    }
  }
  if (queue.empty()) return;
  constexpr int dx[] = {1, -1, 0, 0};
  constexpr int dy[] = {0, 0, 1, -1};
  while (!queue.empty()) {
    const auto [x, y] = queue.front();
    queue.pop_front();
    for (int k = 0; k < 4; ++k) {
      const int nx = x + dx[k];
      const int ny = y + dy[k];
      if (!s.contains(nx, ny) || map.valid(nx, ny)) continue;
      map.dirs(nx, ny) = map.dirs(x, y);
      map.valid(nx, ny) = 1;
      queue.emplace_back(nx, ny);
    }
  }
}

void fill_walk(OrientationMap& map, const Vec2& center, bool reflect) {
  const SensorSize s = map.sensor();
  const OrientationMap source = map;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (source.valid(x, y)) continue;
      Vec2 hit;
      double dist = 0.0;
      if (!walk_to_valid(source, x, y, center, hit, dist)) continue;
      Vec2 value = source.dirs(static_cast<int>(hit.x()), static_cast<int>(hit.y()));
      if (reflect) {
        const Vec2 dir = (center - Vec2(x, y)).normalized();
        const Vec2 mirror = Vec2(x, y) + 2.0 * dist * dir;
        const int mx = static_cast<int>(std::lround(mirror.x()));
        const int my = static_cast<int>(std::lround(mirror.y()));
        if (s.contains(mx, my) && source.valid(mx, my)) value = source.dirs(mx, my);
      }
      set_dir(map, x, y, value);
    }
  }
}

void fill_navier_stokes(OrientationMap& map) {
  const SensorSize s = map.sensor();
  cv::Mat u(s.height, s.width, CV_32F), v(s.height, s.width, CV_32F);
  cv::Mat holes(s.height, s.width, CV_8U);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      u.at<float>(y, x) = static_cast<float>(map.dirs(x, y).x());
      v.at<float>(y, x) = static_cast<float>(map.dirs(x, y).y());
      holes.at<std::uint8_t>(y, x) = map.valid(x, y) ? 0 : 255;
    }
  }
  cv::Mat fu, fv;
  cv::inpaint(u, holes, fu, 3.0, cv::INPAINT_NS);
  cv::inpaint(v, holes, fv, 3.0, cv::INPAINT_NS);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (map.valid(x, y)) continue;
      set_dir(map, x, y, Vec2(fu.at<float>(y, x), fv.at<float>(y, x)));
    }
  }
}

}  // namespace

FillMode parse_fill_mode(std::string_view name) {
  if (name == "none") return FillMode::none;
  if (name == "navier_stokes") return FillMode::navier_stokes;
  if (name == "border_reflect") return FillMode::border_reflect;
  if (name == "border_replicate") return FillMode::border_replicate;
  throw ValidationError("unknown fill mode '" + std::string(name) +
                        "' (none, navier_stokes, border_reflect, border_replicate)");
}

std::string_view to_string(FillMode mode) {
  switch (mode) {
    case FillMode::none: return "none";
    case FillMode::navier_stokes: return "navier_stokes";
    case FillMode::border_reflect: return "border_reflect";
    case FillMode::border_replicate: return "border_replicate";
  }
  return "unknown";
}

std::size_t OrientationMap::invalid_count() const noexcept {
  std::size_t n = 0;
  for (auto v : valid.data()) n += v == 0;
  return n;
}

std::optional<Vec2> singularity(const CameraModel& cam, const Vec3& velocity) {
  if (!velocity.allFinite() || std::abs(velocity.z()) <= kEpsZ) return std::nullopt;
  return Vec2(cam.cx() + cam.fx() * velocity.x() / velocity.z(),
              cam.cy() + cam.fy() * velocity.y() / velocity.z());
}

OrientationMap linear_orientation_map(const CameraModel& cam, const Vec3& v,
                                      const PriorConvention& convention) {
  return build_map(cam, v, MapKind::linear, convention.flip_linear_sign);
}

OrientationMap angular_orientation_map(const CameraModel& cam, const Vec3& w,
                                       const PriorConvention& convention) {
  return build_map(cam, w, MapKind::angular, convention.flip_angular_sign);
}

OrientationMap distort_orientation_map(const OrientationMap& map, const CameraModel& cam,
                                       FillMode fill) {
  if (map.sensor() != cam.sensor()) throw ValidationError("map and camera sizes differ");
  if (cam.distortion().is_zero()) return map;
  const SensorSize s = map.sensor();
  OrientationMap out = empty_map(s, map.kind);
  if (map.singularity) {
    out.singularity = cam.to_pixel(distort_point(cam, cam.to_normalized(*map.singularity)));
  }
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      Vec2 ideal;
      if (!undistort_point(cam, cam.to_normalized(Vec2(x, y)), ideal)) continue;
      const Vec2 src = cam.to_pixel(ideal);
      if (!(src.x() >= 0.0 && src.y() >= 0.0 && src.x() <= s.width - 1 &&
            src.y() <= s.height - 1)) {
        continue;
      }
      set_dir(out, x, y, sample_dirs(map, src));
    }
  }
  fill_orientation_map(out, cam.principal_point(), fill);
  return out;
}

void fill_orientation_map(OrientationMap& map, const Vec2& center, FillMode fill) {
  switch (fill) {
    case FillMode::none: return;
    case FillMode::border_replicate: fill_walk(map, center, false); break;
    case FillMode::border_reflect: fill_walk(map, center, true); break;
    case FillMode::navier_stokes: fill_navier_stokes(map); break;
  }
  fill_nearest(map);
}

std::optional<double> alignment_score_with_gradient(const Image<Vec2>& velocity,
                                                    const OrientationMap& map,
                                                    Image<Vec2>* grad) {
  const SensorSize s = map.sensor();
  if (velocity.width() != s.width || velocity.height() != s.height) {
    throw ValidationError("velocity field and orientation map sizes differ");
  }
  if (grad != nullptr) *grad = Image<Vec2>(s.width, s.height, Vec2::Zero());
  double acc = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (!map.valid(x, y)) continue;
      const Vec2& theta = velocity(x, y);
      const double n = theta.norm();
      if (!(n >= kEpsTheta)) continue;
      const Vec2 unit = theta / n;
      const Vec2& o = map.dirs(x, y);
      const double c = unit.dot(o);
      acc += c;
      ++count;
      if (grad != nullptr) (*grad)(x, y) = (o - c * unit) / n;
    }
  }
  if (count == 0) return std::nullopt;
  const double inv = 1.0 / static_cast<double>(count);
  if (grad != nullptr) {
    for (Vec2& g : grad->data()) g *= inv;
  }
  return acc * inv;
}

double alignment_score(const Image<Vec2>& velocity, const OrientationMap& map) {
  const auto score = alignment_score_with_gradient(velocity, map, nullptr);
  if (!score) throw NumericalError("alignment score: no pixel with a valid map and nonzero flow");
  return *score;
}

double alignment_score(const MotionField& field, const OrientationMap& map) {
  return alignment_score(upsample_bilinear(field), map);
}

double orientation_mse(const Image<Vec2>& a, const Image<Vec2>& b, const Mask& mask) {
  if (a.width() != b.width() || a.height() != b.height() || a.width() != mask.width() ||
      a.height() != mask.height()) {
    throw ValidationError("orientation_mse: size mismatch");
  }
  double acc = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (!mask(x, y)) continue;
      acc += (a(x, y) - b(x, y)).squaredNorm();
      ++count;
    }
  }
  if (count == 0) throw NumericalError("orientation_mse: empty mask");
  return acc / static_cast<double>(count);
}

Priors make_priors(const CameraModel& cam, const VelocitySample& velocity,
                   const PriorConvention& convention, FillMode fill, bool apply_distortion) {
  Priors priors;
  const bool distort = apply_distortion && !cam.distortion().is_zero();
  if (velocity.v.allFinite() && velocity.v.norm() > kEpsVelocity) {
    auto map = linear_orientation_map(cam, velocity.v, convention);
    priors.linear = distort ? distort_orientation_map(map, cam, fill) : std::move(map);
  }
  if (velocity.w.allFinite() && velocity.w.norm() > kEpsVelocity) {
    auto map = angular_orientation_map(cam, velocity.w, convention);
    priors.angular = distort ? distort_orientation_map(map, cam, fill) : std::move(map);
  }
  return priors;
}

}  // namespace opcm
