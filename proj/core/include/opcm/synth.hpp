#pragma once

#include <cstdint>
#include <string_view>

#include "opcm/camera.hpp"
#include "opcm/types.hpp"

namespace opcm {

enum class SceneKind { fronto_planar, textured_plane, edge_bar };

SceneKind parse_scene_kind(std::string_view name);
std::string_view to_string(SceneKind kind);

enum class TextureSide { none, left, right };

/// A fronto-parallel plane at constant depth seen by a camera moving with a
/// constant velocity over the window.
///
/// textured_plane: random discs everywhere. fronto_planar: the same texture
/// with one half of the frame thinned to `low_texture_ratio` of the density.
/// edge_bar: a single vertical bar.
struct SceneSpec {
  SceneKind kind = SceneKind::textured_plane;
  double depth = 1.0;
  std::uint64_t texture_seed = 1;
  /// Events emitted per edge crossing.
  int contrast_density = 1;
  Window window{0.0, 0.1};
  CameraModel camera{100.0, 100.0, 63.5, 47.5, {128, 96}};
  /// Camera egomotion in the camera frame.
  VelocitySample motion{};

  /// Discs per 1000 px^2 of the dense region.
  double texture_density = 6.0;
  double min_radius = 2.0;
  double max_radius = 7.0;
  TextureSide low_texture_side = TextureSide::right;
  double low_texture_ratio = 0.1;
  /// edge_bar geometry in pixels at the start of the window.
  double bar_left = 40.0;
  double bar_width = 12.0;
  /// Mean of an exponential per-event delay in seconds; 0 disables jitter.
  double timing_jitter = 0.0;

  void validate() const;
};

/// Image velocity (px/s) of a static point at `depth` for camera egomotion
/// (v, w), relative to the principal point with per-axis focal lengths:
///   x' = (v_Z x - v_X f)/Z - w_Y f + w_Z y + w_X x y / f - w_Y x^2 / f
///   y' = (v_Z y - v_Y f)/Z + w_X f - w_Z x - w_Y x y / f - w_X y^2 / f
Vec2 motion_field_at(const Vec2& pixel, const CameraModel& cam, const VelocitySample& vel,
                     double depth);

struct SyntheticData {
  EventSet events;
  /// Ground-truth displacement over the window, valid everywhere.
  FlowField flow;
  VelocitySample velocity;
};

/// Deterministic in `texture_seed`. Each pixel center traces the texture
/// backwards along its own image velocity; every edge it crosses emits
/// `contrast_density` events stamped at the crossing time. Throws
/// ValidationError when the scene yields no events (e.g. zero motion).
SyntheticData generate_events(const SceneSpec& spec);

/// edge_bar scene whose bar moves horizontally at `pixels_per_second`.
SceneSpec edge_bar_scene(double pixels_per_second, double duration = 0.1);

}  // namespace opcm
