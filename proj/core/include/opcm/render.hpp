#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "opcm/priors.hpp"

namespace opcm {

/// HSV direction coding: hue = atan2(dy, dx) in [0, 360), full saturation
/// and value. Invalid pixels are black. Returns 8-bit RGB.
std::array<std::uint8_t, 3> direction_color(const Vec2& dir);

/// Writes an orientation map as an RGB PNG.
void write_orientation_png(const std::filesystem::path& path, const OrientationMap& map);

}  // namespace opcm
