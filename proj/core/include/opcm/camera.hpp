#pragma once

#include "opcm/types.hpp"

namespace opcm {

/// Plumb-bob radial-tangential coefficients.
struct Distortion {
  double k1 = 0.0;
  double k2 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  double k3 = 0.0;

  bool is_zero() const noexcept {
    return k1 == 0.0 && k2 == 0.0 && p1 == 0.0 && p2 == 0.0 && k3 == 0.0;
  }
  bool operator==(const Distortion&) const = default;
};

/// Pinhole intrinsics plus plumb-bob distortion. Pixel centers sit at integer
/// coordinates.
class CameraModel {
 public:
  /// Throws ValidationError unless fx, fy > 0 and the principal point lies on
  /// the sensor.
  CameraModel(double fx, double fy, double cx, double cy, SensorSize sensor,
              Distortion dist = {});

  double fx() const noexcept { return fx_; }
  double fy() const noexcept { return fy_; }
  double cx() const noexcept { return cx_; }
  double cy() const noexcept { return cy_; }
  SensorSize sensor() const noexcept { return sensor_; }
  const Distortion& distortion() const noexcept { return dist_; }

  Vec2 principal_point() const noexcept { return {cx_, cy_}; }
  Vec2 to_normalized(const Vec2& pixel) const noexcept {
    return {(pixel.x() - cx_) / fx_, (pixel.y() - cy_) / fy_};
  }
  Vec2 to_pixel(const Vec2& normalized) const noexcept {
    return {fx_ * normalized.x() + cx_, fy_ * normalized.y() + cy_};
  }

  bool operator==(const CameraModel&) const = default;

 private:
  double fx_;
  double fy_;
  double cx_;
  double cy_;
  SensorSize sensor_;
  Distortion dist_;
};

/// Forward plumb-bob model on normalized coordinates.
Vec2 distort_point(const CameraModel& cam, const Vec2& undistorted);

/// Inverse of distort_point by fixed-point iteration. Returns false when the
/// iteration does not reach `tol` (normalized units) within `max_iters`.
bool undistort_point(const CameraModel& cam, const Vec2& distorted, Vec2& undistorted,
                     int max_iters = 100, double tol = 1e-10);

}  // namespace opcm
