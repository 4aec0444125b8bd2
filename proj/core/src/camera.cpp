#include "opcm/camera.hpp"

#include <cmath>
#include <sstream>

#include "opcm/error.hpp"

namespace opcm {

CameraModel::CameraModel(double fx, double fy, double cx, double cy, SensorSize sensor,
                         Distortion dist)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), sensor_(sensor), dist_(dist) {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    std::ostringstream os;
    os << "focal lengths must be positive (fx=" << fx << ", fy=" << fy << ")";
    throw ValidationError(os.str());
  }
  if (sensor.width <= 0 || sensor.height <= 0) {
    throw ValidationError("sensor size must be positive");
  }
  if (!(cx >= 0.0 && cx < sensor.width) || !(cy >= 0.0 && cy < sensor.height)) {
    std::ostringstream os;
    os << "principal point (" << cx << ", " << cy << ") outside the " << sensor.width << "x"
       << sensor.height << " sensor";
    throw ValidationError(os.str());
  }
  for (double c : {dist.k1, dist.k2, dist.p1, dist.p2, dist.k3}) {
    if (!std::isfinite(c)) throw ValidationError("distortion coefficients must be finite");
  }
}

Vec2 distort_point(const CameraModel& cam, const Vec2& undistorted) {
  const Distortion& d = cam.distortion();
  const double x = undistorted.x();
  const double y = undistorted.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
  return {x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x),
          y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y};
}

bool undistort_point(const CameraModel& cam, const Vec2& distorted, Vec2& undistorted,
                     int max_iters, double tol) {
  const Distortion& d = cam.distortion();
  if (d.is_zero()) {
    undistorted = distorted;
    return true;
  }
  Vec2 x = distorted;
  for (int i = 0; i < max_iters; ++i) {
    const double r2 = x.squaredNorm();
    const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
    if (!(radial > 0.0)) return false;
    const Vec2 tangential{2.0 * d.p1 * x.x() * x.y() + d.p2 * (r2 + 2.0 * x.x() * x.x()),
                          d.p1 * (r2 + 2.0 * x.y() * x.y()) + 2.0 * d.p2 * x.x() * x.y()};
    x = (distorted - tangential) / radial;
    if (!x.allFinite()) return false;
    if ((distort_point(cam, x) - distorted).norm() < tol) {
      undistorted = x;
      return true;
    }
  }
  undistorted = x;
  return false;
}

}  // namespace opcm
