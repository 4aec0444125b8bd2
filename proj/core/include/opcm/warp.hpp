#pragma once

#include <array>
#include <span>
#include <vector>

#include "opcm/types.hpp"

namespace opcm {

/// Shape of a motion-parameter grid.
struct GridShape {
  int cols = 1;
  int rows = 1;

  int tiles() const noexcept { return cols * rows; }
  auto operator<=>(const GridShape&) const = default;
};

/// Bilinear interpolation taps into a tile grid for one query point.
struct BilinearTaps {
  std::array<int, 4> index{};  // row-major tile indices
  std::array<double, 4> weight{};
};

/// Per-tile velocities (pixels/second) on a coarse grid covering the sensor.
///
/// Tile (col, row) has its center at pixel coordinates
/// ((col + 0.5) * W / cols - 0.5, (row + 0.5) * H / rows - 0.5). Queries
/// between centers interpolate bilinearly; outside the center lattice the
/// nearest edge value is held.
class MotionField {
 public:
  MotionField() = default;
  MotionField(GridShape shape, SensorSize sensor, const Vec2& fill = Vec2::Zero());

  GridShape shape() const noexcept { return shape_; }
  SensorSize sensor() const noexcept { return sensor_; }

  Vec2& at(int col, int row) noexcept { return tiles_[index(col, row)]; }
  const Vec2& at(int col, int row) const noexcept { return tiles_[index(col, row)]; }
  std::span<Vec2> tiles() noexcept { return tiles_; }
  std::span<const Vec2> tiles() const noexcept { return tiles_; }

  /// Interpolation taps at a continuous pixel coordinate.
  BilinearTaps taps(double px, double py) const noexcept;
  /// Velocity at a continuous pixel coordinate.
  Vec2 sample(double px, double py) const noexcept;

  /// Same field resampled onto another grid shape by sampling this field at
  /// the new tile centers (the pyramid handover).
  MotionField resampled(GridShape shape) const;

  /// Flattened parameter vector (u0, v0, u1, v1, ...) in tile order.
  Eigen::VectorXd to_vector() const;
  static MotionField from_vector(GridShape shape, SensorSize sensor,
                                 const Eigen::VectorXd& params);

  bool all_finite() const noexcept;

 private:
  std::size_t index(int col, int row) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(shape_.cols) +
           static_cast<std::size_t>(col);
  }

  GridShape shape_{};
  SensorSize sensor_{};
  std::vector<Vec2> tiles_;
};

/// Dense per-pixel velocity at sensor resolution.
Image<Vec2> upsample_bilinear(const MotionField& field);

/// x'_k = x_k + theta(x_k) * (t_ref - t_k), with theta sampled at the event's
/// own pixel. Results are not clipped to the sensor.
std::vector<Vec2> warp_events(const EventSet& events, const MotionField& field, double t_ref);
std::vector<Vec2> warp_events(const EventSet& events, const Image<Vec2>& velocity,
                              double t_ref);

/// Image of warped events.
struct Iwe {
  Image<double> pixels;
  double t_ref = 0.0;
  std::size_t n_events = 0;
};

/// Separable splatting kernel: a Gaussian with its value at distance r + 0.5
/// subtracted, r = ceil(3 sigma), so each tap fades to zero exactly where the
/// support window shifts by one pixel. The splat is therefore continuous in
/// the point location. Weights are normalized to unit mass over the full
/// (2r + 1)^2 support before any border truncation.
class SplatKernel {
 public:
  explicit SplatKernel(double sigma = 1.0);

  double sigma() const noexcept { return sigma_; }
  int radius() const noexcept { return radius_; }
  int taps() const noexcept { return 2 * radius_ + 1; }

  /// Fills the 1D weights for a coordinate; returns the first pixel index.
  /// `weights` and `derivs` must hold taps() values; `derivs` (d weight /
  /// d coordinate) may be empty.
  int weights(double coord, std::span<double> weights, std::span<double> derivs = {}) const;

 private:
  double sigma_;
  int radius_;
  double tail_;
};

Iwe build_iwe(std::span<const Vec2> warped, SensorSize sensor, double sigma = 1.0,
              double t_ref = 0.0);

}  // namespace opcm
