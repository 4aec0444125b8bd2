#pragma once

#include <filesystem>
#include <vector>

#include "opcm/camera.hpp"
#include "opcm/types.hpp"

namespace opcm {

namespace fs = std::filesystem;

// Event CSV: one `t,x,y,p` record per line, `#` starts a comment line.
// Polarity 0 is read as -1.
EventSet read_events_csv(const fs::path& path, SensorSize sensor);
void write_events_csv(const fs::path& path, const EventSet& events);

// Binary event cache, little-endian:
//   "EVT1" | u32 width | u32 height | u64 count | count x (f64 t, u16 x, u16 y, i8 p)
EventSet read_events_binary(const fs::path& path);
void write_events_binary(const fs::path& path, const EventSet& events);

/// Dispatches on the file magic: "EVT1" reads the binary cache, anything
/// else is parsed as CSV against `sensor`.
EventSet read_events(const fs::path& path, SensorSize sensor);

/// JSON object with fx, fy, cx, cy, width, height and an optional 5-element
/// `dist` array (k1, k2, p1, p2, k3).
CameraModel read_calibration(const fs::path& path);
void write_calibration(const fs::path& path, const CameraModel& cam);

// Middlebury .flo container:
//   f32 202021.25 | i32 width | i32 height | row-major interleaved f32 (u, v)
// Invalid pixels are written as u = v = 1e9 and read back as invalid with
// u = v = 0.
inline constexpr float kFlowMagic = 202021.25f;
inline constexpr float kFlowInvalid = 1e9f;

void write_flow(const fs::path& path, const FlowField& flow);
FlowField read_flow(const fs::path& path);

// Velocity trace CSV: `t,vx,vy,vz,wx,wy,wz` (s, m/s, rad/s). An optional
// header line starting with `t` is skipped on read and always written.
std::vector<VelocitySample> read_velocity_csv(const fs::path& path);
void write_velocity_csv(const fs::path& path, const std::vector<VelocitySample>& samples);

/// Linear interpolation of a time-sorted trace; clamps outside its span.
VelocitySample interpolate_velocity(const std::vector<VelocitySample>& trace, double t);

}  // namespace opcm
