#pragma once

#include <optional>
#include <string_view>

#include "opcm/camera.hpp"
#include "opcm/types.hpp"
#include "opcm/warp.hpp"

namespace opcm {

enum class MapKind { linear, angular };

enum class FillMode { none, navier_stokes, border_reflect, border_replicate };

FillMode parse_fill_mode(std::string_view name);
std::string_view to_string(FillMode mode);

/// Thresholds for the degenerate branches of map generation and scoring.
inline constexpr double kEpsZ = 1e-8;        // |v_Z| below this: planar branch
inline constexpr double kEpsVelocity = 1e-8;  // |v| below this: no map
inline constexpr double kEpsTheta = 1e-3;     // px/s; slower pixels are not scored

/// Sign switches for the planar (v_Z = 0, w_Z = 0) branches. Off, the maps
/// follow +(v_X, v_Y) and M (w_X, w_Y) as written. On, those branches are
/// negated, which matches the limit of the non-planar branches and the
/// egomotion flow of a planar scene.
struct PriorConvention {
  bool flip_linear_sign = false;
  bool flip_angular_sign = false;
};

/// Per-pixel unit direction field. Invalid pixels hold (0, 0).
struct OrientationMap {
  Image<Vec2> dirs;
  Mask valid;
  MapKind kind = MapKind::linear;
  std::optional<Vec2> singularity;

  SensorSize sensor() const noexcept { return {dirs.width(), dirs.height()}; }
  std::size_t invalid_count() const noexcept;
};

/// Image-plane intersection of a camera-frame velocity direction,
/// K [v_X / v_Z, v_Y / v_Z, 1]^T. Empty when |v_Z| <= kEpsZ.
std::optional<Vec2> singularity(const CameraModel& cam, const Vec3& velocity);

/// Diverging from the singularity for v_Z > 0, converging for v_Z < 0,
/// constant along (v_X, v_Y) for v_Z = 0. Throws ValidationError for a
/// (near-)zero or non-finite velocity.
OrientationMap linear_orientation_map(const CameraModel& cam, const Vec3& v,
                                      const PriorConvention& convention = {});

/// The linear construction rotated 90 degrees clockwise by M = [[0, 1], [-1, 0]].
OrientationMap angular_orientation_map(const CameraModel& cam, const Vec3& w,
                                       const PriorConvention& convention = {});

/// Resamples an ideal (undistorted) map into distorted pixel coordinates.
///
/// Each output pixel is mapped to its undistorted source by inverting the
/// plumb-bob model, the source is sampled bilinearly and renormalized. Sources
/// outside the ideal image leave the pixel empty; `fill` then populates the
/// empty pixels. With zero distortion the input is returned unchanged.
OrientationMap distort_orientation_map(const OrientationMap& map, const CameraModel& cam,
                                       FillMode fill = FillMode::border_replicate);

/// Fills invalid pixels of `map` in place. Replicate and reflect walk from the
/// empty pixel toward the principal point until they meet valid data.
void fill_orientation_map(OrientationMap& map, const Vec2& center, FillMode fill);

/// Mean cosine between the normalized flow and the map over pixels where the
/// map is valid and |theta| >= kEpsTheta. Equals 1 - MSE / 2 on that domain.
/// Throws NumericalError when no pixel qualifies.
double alignment_score(const MotionField& field, const OrientationMap& map);
double alignment_score(const Image<Vec2>& velocity, const OrientationMap& map);

/// Gradient-carrying variant used by the optimizer. Returns nullopt when the
/// scored domain is empty; otherwise writes d score / d velocity(x) into
/// `grad` when it is non-null (same size as the sensor).
std::optional<double> alignment_score_with_gradient(const Image<Vec2>& velocity,
                                                    const OrientationMap& map,
                                                    Image<Vec2>* grad);

/// Mean squared error between two unit fields over a mask. Reference form of
/// the alignment measure.
double orientation_mse(const Image<Vec2>& a, const Image<Vec2>& b, const Mask& mask);

/// Optional linear and angular priors fed to the hybrid objective.
struct Priors {
  std::optional<OrientationMap> linear;
  std::optional<OrientationMap> angular;

  bool empty() const noexcept { return !linear && !angular; }
};

/// Builds both maps from a camera velocity, skipping a component whose norm is
/// below kEpsVelocity, and applies distortion when the camera has any.
Priors make_priors(const CameraModel& cam, const VelocitySample& velocity,
                   const PriorConvention& convention = {},
                   FillMode fill = FillMode::border_replicate, bool apply_distortion = true);

}  // namespace opcm
