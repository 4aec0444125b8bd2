#include "opcm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "opcm/error.hpp"

namespace opcm {

namespace {

struct Disc {
  Vec2 center;
  double radius;
};

// Parameters t in (0, T] at which p - u t lies on the disc boundary.
void disc_crossings(const Vec2& p, const Vec2& u, double T, const Disc& d, std::vector<double>& out) {
  // |p - c - u t|^2 = r^2  ->  a t^2 - 2 b t + c = 0
  const Vec2 q = p - d.center;
  const double a = u.squaredNorm();
  if (a == 0.0) return;
  const double b = q.dot(u);
  const double c = q.squaredNorm() - d.radius * d.radius;
  const double disc = b * b - a * c;
  if (disc <= 0.0) return;  // tangent or miss: no parity change
  const double root = std::sqrt(disc);
  for (double t : {(b - root) / a, (b + root) / a}) {
    if (t > 0.0 && t <= T) out.push_back(t);
  }
}

bool inside_disc(const Vec2& q, const Disc& d) {
  return (q - d.center).squaredNorm() < d.radius * d.radius;
}

std::vector<Disc> make_texture(const SceneSpec& spec, double margin) {
  const SensorSize s = spec.camera.sensor();
  const double x0 = -margin, y0 = -margin;
  const double w = s.width + 2.0 * margin;
  const double h = s.height + 2.0 * margin;
  std::mt19937_64 rng(spec.texture_seed);
  std::uniform_real_distribution<double> ux(x0, x0 + w), uy(y0, y0 + h),
      ur(spec.min_radius, spec.max_radius), keep(0.0, 1.0);
  const auto count = static_cast<std::size_t>(std::llround(spec.texture_density * w * h / 1000.0));
  std::vector<Disc> discs;
  discs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Disc d{{ux(rng), uy(rng)}, ur(rng)};
    const double k = keep(rng);
    if (spec.kind == SceneKind::fronto_planar && spec.low_texture_side != TextureSide::none) {
      const bool right = d.center.x() > spec.camera.cx();
      const bool sparse = (spec.low_texture_side == TextureSide::right) == right;
      if (sparse && k >= spec.low_texture_ratio) continue;
    }
    discs.push_back(d);
  }
  return discs;
}

}  // namespace

SceneKind parse_scene_kind(std::string_view name) {
  if (name == "fronto_planar") return SceneKind::fronto_planar;
  if (name == "textured_plane") return SceneKind::textured_plane;
  if (name == "edge_bar") return SceneKind::edge_bar;
  throw ValidationError("unknown scene '" + std::string(name) +
                        "' (fronto_planar, textured_plane, edge_bar)");
}

std::string_view to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::fronto_planar: return "fronto_planar";
    case SceneKind::textured_plane: return "textured_plane";
    case SceneKind::edge_bar: return "edge_bar";
  }
  return "unknown";
}

void SceneSpec::validate() const {
  if (!(depth > 0.0) || !std::isfinite(depth)) throw ValidationError("depth must be positive");
  if (!(window.t0 < window.t1)) throw ValidationError("window must have t0 < t1");
  if (contrast_density < 1) throw ValidationError("contrast_density must be >= 1");
  if (!(texture_density > 0.0)) throw ValidationError("texture_density must be positive");
  if (!(min_radius > 0.0) || !(max_radius >= min_radius)) {
    throw ValidationError("disc radii must satisfy 0 < min_radius <= max_radius");
  }
  if (!(low_texture_ratio >= 0.0 && low_texture_ratio <= 1.0)) {
    throw ValidationError("low_texture_ratio must lie in [0, 1]");
  }
  if (!(bar_width > 0.0)) throw ValidationError("bar_width must be positive");
  if (!(timing_jitter >= 0.0)) throw ValidationError("timing_jitter must be >= 0");
  if (!motion.v.allFinite() || !motion.w.allFinite()) {
    throw ValidationError("motion must be finite");
  }
}

Vec2 motion_field_at(const Vec2& pixel, const CameraModel& cam, const VelocitySample& vel,
                     double depth) {
  const double fx = cam.fx();
  const double fy = cam.fy();
  const double x = pixel.x() - cam.cx();
  const double y = pixel.y() - cam.cy();
  const Vec3& v = vel.v;
  const Vec3& w = vel.w;
  // Rotational terms use normalized coordinates scaled back per axis.
  const double xn = x / fx;
  const double yn = y / fy;
  const double u = (v.z() * x - v.x() * fx) / depth +
                   fx * (-w.y() + w.z() * yn + w.x() * xn * yn - w.y() * xn * xn);
  const double vv = (v.z() * y - v.y() * fy) / depth +
                    fy * (w.x() - w.z() * xn - w.y() * xn * yn + w.x() * yn * yn);
  return {u, vv};
}

SyntheticData generate_events(const SceneSpec& spec) {
  spec.validate();
  const CameraModel& cam = spec.camera;
  const SensorSize s = cam.sensor();
  const double T = spec.window.duration();

  Image<Vec2> velocity(s.width, s.height, Vec2::Zero());
  double max_disp = 0.0;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      velocity(x, y) = motion_field_at(Vec2(x, y), cam, spec.motion, spec.depth);
      max_disp = std::max(max_disp, velocity(x, y).norm() * T);
    }
  }

  std::vector<Disc> discs;
  if (spec.kind != SceneKind::edge_bar) discs = make_texture(spec, max_disp + spec.max_radius + 1.0);
  const double bar_lo = spec.bar_left;
  const double bar_hi = spec.bar_left + spec.bar_width;

  std::mt19937_64 jitter_rng(spec.texture_seed ^ 0x9e3779b97f4a7c15ULL);
  std::exponential_distribution<double> jitter(
      spec.timing_jitter > 0.0 ? 1.0 / spec.timing_jitter : 1.0);

  std::vector<Event> events;
  std::vector<double> crossings;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const Vec2 p(x, y);
      const Vec2 u = velocity(x, y);
      if (u.squaredNorm() == 0.0) continue;
      crossings.clear();
      int parity = 0;
      if (spec.kind == SceneKind::edge_bar) {
        for (double edge : {bar_lo, bar_hi}) {
          if (u.x() == 0.0) continue;
          const double t = (p.x() - edge) / u.x();
          if (t > 0.0 && t <= T) crossings.push_back(t);
        }
        parity = (p.x() > bar_lo && p.x() < bar_hi) ? 1 : 0;
      } else {
        const Vec2 end = p - u * T;
        const double bx0 = std::min(p.x(), end.x()), bx1 = std::max(p.x(), end.x());
        const double by0 = std::min(p.y(), end.y()), by1 = std::max(p.y(), end.y());
        for (const Disc& d : discs) {
          if (d.center.x() + d.radius < bx0 || d.center.x() - d.radius > bx1 ||
              d.center.y() + d.radius < by0 || d.center.y() - d.radius > by1) {
            continue;
          }
          disc_crossings(p, u, T, d, crossings);
          parity ^= inside_disc(p, d) ? 1 : 0;
        }
      }
      // The pixel sees texture point p - u t at window time t; `parity` is
      // the texture value at t = 0 and flips at every crossing.
      std::sort(crossings.begin(), crossings.end());
      for (double t : crossings) {
        parity ^= 1;
        const int polarity = parity ? 1 : -1;
        const double stamp = spec.window.t0 + t;
        for (int k = 0; k < spec.contrast_density; ++k) {
          double ts = stamp;
          if (spec.timing_jitter > 0.0) ts += jitter(jitter_rng);
          if (ts > spec.window.t1) continue;
          events.push_back({ts, x, y, polarity});
        }
      }
    }
  }
  if (events.empty()) throw ValidationError("scene produced no events (zero motion or empty texture)");
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.p < b.p;
  });

  SyntheticData out{EventSet(std::move(events), s, spec.window.t0, spec.window.t1), FlowField(s),
                    spec.motion};
  out.velocity.t = spec.window.at(0.5);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      out.flow.u(x, y) = static_cast<float>(velocity(x, y).x() * T);
      out.flow.v(x, y) = static_cast<float>(velocity(x, y).y() * T);
    }
  }
  return out;
}

SceneSpec edge_bar_scene(double pixels_per_second, double duration) {
  SceneSpec spec;
  spec.kind = SceneKind::edge_bar;
  spec.window = {0.0, duration};
  spec.motion.v = Vec3(-pixels_per_second * spec.depth / spec.camera.fx(), 0.0, 0.0);
  return spec;
}

}  // namespace opcm
