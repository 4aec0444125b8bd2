#include "opcm/render.hpp"

#include <cmath>
#include <numbers>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "opcm/error.hpp"

namespace opcm {

std::array<std::uint8_t, 3> direction_color(const Vec2& dir) {
  if (!dir.allFinite() || dir.squaredNorm() == 0.0) return {0, 0, 0};
  double hue = std::atan2(dir.y(), dir.x()) * 180.0 / std::numbers::pi;
  if (hue < 0.0) hue += 360.0;
  if (hue >= 360.0) hue -= 360.0;
  const double h = hue / 60.0;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const auto level = [](double v) { return static_cast<std::uint8_t>(std::lround(255.0 * v)); };
  const std::uint8_t on = 255, off = 0, down = level(1.0 - f), up = level(f);
  switch (sector) {
    case 0: return {on, up, off};
    case 1: return {down, on, off};
    case 2: return {off, on, up};
    case 3: return {off, down, on};
    case 4: return {up, off, on};
    default: return {on, off, down};
  }
}

void write_orientation_png(const std::filesystem::path& path, const OrientationMap& map) {
  const SensorSize s = map.sensor();
  cv::Mat bgr(s.height, s.width, CV_8UC3);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const auto rgb = map.valid(x, y) ? direction_color(map.dirs(x, y))
                                       : std::array<std::uint8_t, 3>{0, 0, 0};
      bgr.at<cv::Vec3b>(y, x) = cv::Vec3b(rgb[2], rgb[1], rgb[0]);
    }
  }
  if (!cv::imwrite(path.string(), bgr)) throw Error("cannot write " + path.string());
}

}  // namespace opcm
