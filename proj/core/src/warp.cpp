#include "opcm/warp.hpp"

#include <algorithm>
#include <cmath>

#include "opcm/error.hpp"

namespace opcm {

namespace {

// Continuous tile coordinate of a pixel coordinate along one axis, plus the
// lower tap and its fractional weight.
void axis_taps(double p, int pixels, int tiles, int& lo, int& hi, double& frac) {
  if (tiles == 1) {
    lo = hi = 0;
    frac = 0.0;
    return;
  }
  double a = (p + 0.5) * tiles / pixels - 0.5;
  a = std::clamp(a, 0.0, static_cast<double>(tiles - 1));
  lo = std::min(static_cast<int>(std::floor(a)), tiles - 2);
  hi = lo + 1;
  frac = a - lo;
}

}  // namespace

MotionField::MotionField(GridShape shape, SensorSize sensor, const Vec2& fill)
    : shape_(shape), sensor_(sensor) {
  if (shape.cols < 1 || shape.rows < 1) throw ValidationError("grid shape must be at least 1x1");
  if (sensor.width < 1 || sensor.height < 1) throw ValidationError("sensor size must be positive");
  if (shape.cols > sensor.width || shape.rows > sensor.height) {
    throw ValidationError("grid is finer than the sensor");
  }
  tiles_.assign(static_cast<std::size_t>(shape.tiles()), fill);
}

BilinearTaps MotionField::taps(double px, double py) const noexcept {
  int c0, c1, r0, r1;
  double fx, fy;
  axis_taps(px, sensor_.width, shape_.cols, c0, c1, fx);
  axis_taps(py, sensor_.height, shape_.rows, r0, r1, fy);
  BilinearTaps t;
  t.index = {static_cast<int>(index(c0, r0)), static_cast<int>(index(c1, r0)),
             static_cast<int>(index(c0, r1)), static_cast<int>(index(c1, r1))};
  t.weight = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  return t;
}

// Nested lerps rather than a weighted tap sum so that equal tiles reproduce
// their value exactly.
Vec2 MotionField::sample(double px, double py) const noexcept {
  int c0, c1, r0, r1;
  double fx, fy;
  axis_taps(px, sensor_.width, shape_.cols, c0, c1, fx);
  axis_taps(py, sensor_.height, shape_.rows, r0, r1, fy);
  const auto lerp = [](const Vec2& a, const Vec2& b, double f) -> Vec2 { return a + f * (b - a); };
  const Vec2 top = lerp(at(c0, r0), at(c1, r0), fx);
  const Vec2 bottom = lerp(at(c0, r1), at(c1, r1), fx);
  return lerp(top, bottom, fy);
}

MotionField MotionField::resampled(GridShape shape) const {
  MotionField out(shape, sensor_);
  for (int r = 0; r < shape.rows; ++r) {
    const double cy = (r + 0.5) * sensor_.height / shape.rows - 0.5;
    for (int c = 0; c < shape.cols; ++c) {
      const double cx = (c + 0.5) * sensor_.width / shape.cols - 0.5;
      out.at(c, r) = sample(cx, cy);
    }
  }
  return out;
}

Eigen::VectorXd MotionField::to_vector() const {
  Eigen::VectorXd v(2 * tiles_.size());
  for (std::size_t i = 0; i < tiles_.size(); ++i) {
    v[2 * i] = tiles_[i].x();
    v[2 * i + 1] = tiles_[i].y();
  }
  return v;
}

MotionField MotionField::from_vector(GridShape shape, SensorSize sensor,
                                     const Eigen::VectorXd& params) {
  MotionField f(shape, sensor);
  if (params.size() != 2 * shape.tiles()) {
    throw ValidationError("parameter vector does not match the grid shape");
  }
  for (std::size_t i = 0; i < f.tiles_.size(); ++i) {
    f.tiles_[i] = {params[2 * i], params[2 * i + 1]};
  }
  return f;
}

bool MotionField::all_finite() const noexcept {
  return std::all_of(tiles_.begin(), tiles_.end(), [](const Vec2& v) { return v.allFinite(); });
}

Image<Vec2> upsample_bilinear(const MotionField& field) {
  const SensorSize s = field.sensor();
  Image<Vec2> out(s.width, s.height, Vec2::Zero());
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) out(x, y) = field.sample(x, y);
  }
  return out;
}

std::vector<Vec2> warp_events(const EventSet& events, const MotionField& field, double t_ref) {
  if (events.sensor() != field.sensor()) {
    throw ValidationError("motion field and events use different sensors");
  }
  std::vector<Vec2> out;
  out.reserve(events.size());
  for (const Event& e : events.events()) {
    out.push_back(Vec2(e.x, e.y) + field.sample(e.x, e.y) * (t_ref - e.t));
  }
  return out;
}

std::vector<Vec2> warp_events(const EventSet& events, const Image<Vec2>& velocity, double t_ref) {
  if (velocity.width() != events.sensor().width || velocity.height() != events.sensor().height) {
    throw ValidationError("velocity image and events use different sensors");
  }
  std::vector<Vec2> out;
  out.reserve(events.size());
  for (const Event& e : events.events()) {
    out.push_back(Vec2(e.x, e.y) + velocity(e.x, e.y) * (t_ref - e.t));
  }
  return out;
}

SplatKernel::SplatKernel(double sigma) : sigma_(sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be positive");
  radius_ = static_cast<int>(std::ceil(3.0 * sigma));
  const double edge = radius_ + 0.5;
  tail_ = std::exp(-edge * edge / (2.0 * sigma * sigma));
}

int SplatKernel::weights(double coord, std::span<double> w, std::span<double> dw) const {
  const int center = static_cast<int>(std::floor(coord + 0.5));
  const int first = center - radius_;
  const double inv_var = 1.0 / (sigma_ * sigma_);
  const bool want_d = !dw.empty();
  double sum = 0.0;
  double dsum = 0.0;
  for (int i = 0; i < taps(); ++i) {
    const double d = (first + i) - coord;
    const double g = std::exp(-0.5 * d * d * inv_var);
    w[i] = std::max(0.0, g - tail_);
    sum += w[i];
    if (want_d) {
      dw[i] = w[i] > 0.0 ? g * d * inv_var : 0.0;
      dsum += dw[i];
    }
  }
  const double inv = 1.0 / sum;
  if (want_d) {
    for (int i = 0; i < taps(); ++i) dw[i] = (dw[i] - w[i] * inv * dsum) * inv;
  }
  for (int i = 0; i < taps(); ++i) w[i] *= inv;
  return first;
}

Iwe build_iwe(std::span<const Vec2> warped, SensorSize sensor, double sigma, double t_ref) {
  const SplatKernel kernel(sigma);
  Iwe iwe{Image<double>(sensor.width, sensor.height, 0.0), t_ref, warped.size()};
  const int n = kernel.taps();
  std::vector<double> wx(n), wy(n);
  const double r = kernel.radius() + 1.0;
  for (const Vec2& p : warped) {
    if (!p.allFinite()) continue;
    if (p.x() < -r || p.y() < -r || p.x() > sensor.width - 1 + r ||
        p.y() > sensor.height - 1 + r) {
      continue;
    }
    const int x0 = kernel.weights(p.x(), wx);
    const int y0 = kernel.weights(p.y(), wy);
    for (int j = 0; j < n; ++j) {
      const int y = y0 + j;
      if (y < 0 || y >= sensor.height || wy[j] == 0.0) continue;
      for (int i = 0; i < n; ++i) {
        const int x = x0 + i;
        if (x < 0 || x >= sensor.width) continue;
        iwe.pixels(x, y) += wx[i] * wy[j];
      }
    }
  }
  return iwe;
}

}  // namespace opcm
