#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "opcm/image.hpp"

namespace opcm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct SensorSize {
  int width = 0;
  int height = 0;

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  std::size_t area() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  auto operator<=>(const SensorSize&) const = default;
};

/// Time interval [t0, t1] in seconds.
struct Window {
  double t0 = 0.0;
  double t1 = 0.0;

  double duration() const noexcept { return t1 - t0; }
  /// Absolute time of a fractional position inside the window.
  double at(double fraction) const noexcept { return t0 + fraction * (t1 - t0); }
};

/// A single brightness-change spike. Polarity is kept for format fidelity only.
struct Event {
  double t = 0.0;
  int x = 0;
  int y = 0;
  int p = 1;

  bool operator==(const Event&) const = default;
};

/// Time-sorted events from one sensor, with the window they were taken from.
///
/// Construction validates every invariant: coordinates inside the sensor,
/// polarity in {-1, +1}, non-decreasing timestamps and t_start <= t <= t_end.
class EventSet {
 public:
  EventSet() = default;
  /// Window defaults to [first timestamp, last timestamp].
  EventSet(std::vector<Event> events, SensorSize sensor);
  EventSet(std::vector<Event> events, SensorSize sensor, double t_start, double t_end);

  std::span<const Event> events() const noexcept { return events_; }
  const Event& operator[](std::size_t i) const noexcept { return events_[i]; }
  std::size_t size() const noexcept { return events_.size(); }
  bool empty() const noexcept { return events_.empty(); }
  SensorSize sensor() const noexcept { return sensor_; }
  double t_start() const noexcept { return t_start_; }
  double t_end() const noexcept { return t_end_; }
  Window window() const noexcept { return {t_start_, t_end_}; }

  /// Events with t in [t0, t1]; the result's window is exactly [t0, t1].
  EventSet slice_time(double t0, double t1) const;
  /// `count` events starting at the first event with t >= t0. The window
  /// ends at the last selected event.
  EventSet slice_count(double t0, std::size_t count) const;

  bool operator==(const EventSet&) const = default;

 private:
  void validate() const;

  std::vector<Event> events_;
  SensorSize sensor_{};
  double t_start_ = 0.0;
  double t_end_ = 0.0;
};

/// Camera velocity at time t, camera frame. v in m/s, w in rad/s.
struct VelocitySample {
  double t = 0.0;
  Vec3 v = Vec3::Zero();
  Vec3 w = Vec3::Zero();
};

/// Dense displacement field in pixels over an evaluation interval.
struct FlowField {
  FlowField() = default;
  explicit FlowField(SensorSize sensor)
      : u(sensor.width, sensor.height, 0.0f),
        v(sensor.width, sensor.height, 0.0f),
        valid(sensor.width, sensor.height, 1) {}

  SensorSize sensor() const noexcept { return {u.width(), u.height()}; }

  Image<float> u;
  Image<float> v;
  Mask valid;

  bool operator==(const FlowField&) const = default;
};

}  // namespace opcm
