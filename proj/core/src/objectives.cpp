#include "opcm/objectives.hpp"

#include <cmath>
#include <numbers>

#include "opcm/error.hpp"

namespace opcm {

namespace {

void require_3x3(const Image<double>& image) {
  if (image.width() < 3 || image.height() < 3) {
    throw ValidationError("gradient magnitude needs an image of at least 3x3");
  }
}

// Derivative along one axis with the border scheme used throughout.
// `at(i)` reads the i-th sample of a line of length n.
template <typename At>
double line_derivative(At at, int i, int n) {
  if (i == 0) return at(1) - at(0);
  if (i == n - 1) return at(n - 1) - at(n - 2);
  return 0.5 * (at(i + 1) - at(i - 1));
}

// Transpose of line_derivative: scatter `g` (the derivative value at i) back
// onto the samples it was computed from.
template <typename Add>
void line_derivative_adjoint(Add add, int i, int n, double g) {
  if (i == 0) {
    add(1, g);
    add(0, -g);
  } else if (i == n - 1) {
    add(n - 1, g);
    add(n - 2, -g);
  } else {
    add(i + 1, 0.5 * g);
    add(i - 1, -0.5 * g);
  }
}

}  // namespace

void ContrastConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be positive");
  if (t_refs.empty()) throw ValidationError("t_refs must not be empty");
  for (double t : t_refs) {
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("t_refs must lie in [0, 1]");
  }
  if (!(weight_sigma > 0.0) || !std::isfinite(weight_sigma)) {
    throw ValidationError("weight_sigma must be positive");
  }
  if (!std::isfinite(weight_mean)) throw ValidationError("weight_mean must be finite");
}

double variance(const Image<double>& image) {
  if (image.empty()) throw ValidationError("variance of an empty image");
  const auto px = image.data();
  double mean = 0.0;
  for (double v : px) mean += v;
  mean /= static_cast<double>(px.size());
  double acc = 0.0;
  for (double v : px) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(px.size());
}

double gradient_magnitude(const Image<double>& image) {
  require_3x3(image);
  const int w = image.width();
  const int h = image.height();
  double acc = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = line_derivative([&](int i) { return image(i, y); }, x, w);
      const double gy = line_derivative([&](int j) { return image(x, j); }, y, h);
      acc += gx * gx + gy * gy;
    }
  }
  return acc / static_cast<double>(image.size());
}

Image<double> gradient_magnitude_adjoint(const Image<double>& image) {
  require_3x3(image);
  const int w = image.width();
  const int h = image.height();
  const double scale = 2.0 / static_cast<double>(image.size());
  Image<double> adj(w, h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = line_derivative([&](int i) { return image(i, y); }, x, w);
      const double gy = line_derivative([&](int j) { return image(x, j); }, y, h);
      line_derivative_adjoint([&](int i, double v) { adj(i, y) += v; }, x, w, scale * gx);
      line_derivative_adjoint([&](int j, double v) { adj(x, j) += v; }, y, h, scale * gy);
    }
  }
  return adj;
}

double reference_weight(double fraction, const ContrastConfig& cfg) {
  const double z = (fraction - cfg.weight_mean) / cfg.weight_sigma;
  return std::exp(-0.5 * z * z) / (cfg.weight_sigma * std::sqrt(2.0 * std::numbers::pi));
}

ContrastObjective::ContrastObjective(const EventSet& events, Window window, ContrastConfig cfg)
    : events_(&events), window_(window), cfg_(std::move(cfg)), kernel_(cfg_.sigma) {
  cfg_.validate();
  if (!(window.t0 < window.t1)) throw ValidationError("contrast window must have t0 < t1");
  if (events.empty()) throw ValidationError("contrast objective needs at least one event");
  std::vector<Vec2> identity;
  identity.reserve(events.size());
  for (const Event& e : events.events()) identity.emplace_back(e.x, e.y);
  baseline_ = gradient_magnitude(build_iwe(identity, events.sensor(), cfg_.sigma, 0.0));
  bool single_pixel = true;
  for (const Event& e : events.events()) {
    if (e.x != events[0].x || e.y != events[0].y) {
      single_pixel = false;
      break;
    }
  }
  degenerate_ = !(baseline_ > 0.0) || single_pixel;
}

double ContrastObjective::relative(const MotionField& field, double t_ref) const {
  if (!(baseline_ > 0.0)) throw NumericalError("relative contrast: zero identity-warp sharpness");
  const auto warped = warp_events(*events_, field, t_ref);
  return gradient_magnitude(build_iwe(warped, events_->sensor(), cfg_.sigma, t_ref)) / baseline_;
}

double ContrastObjective::relative(const Image<Vec2>& velocity, double t_ref) const {
  if (!(baseline_ > 0.0)) throw NumericalError("relative contrast: zero identity-warp sharpness");
  const auto warped = warp_events(*events_, velocity, t_ref);
  return gradient_magnitude(build_iwe(warped, events_->sensor(), cfg_.sigma, t_ref)) / baseline_;
}

double ContrastObjective::multi_ref(const MotionField& field) const {
  return multi_ref(field, nullptr);
}

double ContrastObjective::multi_ref(const Image<Vec2>& velocity) const {
  double num = 0.0;
  double den = 0.0;
  for (double frac : cfg_.t_refs) {
    const double w = reference_weight(frac, cfg_);
    num += w * relative(velocity, window_.at(frac));
    den += w;
  }
  return num / den;
}

double ContrastObjective::multi_ref(const MotionField& field, Eigen::VectorXd* grad) const {
  if (!(baseline_ > 0.0)) throw NumericalError("relative contrast: zero identity-warp sharpness");
  std::vector<BilinearTaps> taps;
  if (grad != nullptr) {
    grad->setZero(2 * field.shape().tiles());
    taps.reserve(events_->size());
    for (const Event& e : events_->events()) taps.push_back(field.taps(e.x, e.y));
  }
  double num = 0.0;
  double den = 0.0;
  Eigen::VectorXd g_t;
  for (double frac : cfg_.t_refs) {
    const double w = reference_weight(frac, cfg_);
    const double t_ref = window_.at(frac);
    if (grad != nullptr) {
      g_t.setZero(grad->size());
      num += w * relative_with_gradient(field, taps, t_ref, &g_t);
      *grad += w * g_t;
    } else {
      num += w * relative(field, t_ref);
    }
    den += w;
  }
  if (grad != nullptr) *grad /= den;
  return num / den;
}

double ContrastObjective::relative_with_gradient(const MotionField& field,
                                                 const std::vector<BilinearTaps>& taps,
                                                 double t_ref, Eigen::VectorXd* grad) const {
  const SensorSize s = events_->sensor();
  const auto warped = warp_events(*events_, field, t_ref);
  const Iwe iwe = build_iwe(warped, s, cfg_.sigma, t_ref);
  const double value = gradient_magnitude(iwe.pixels) / baseline_;
  const Image<double> adj = gradient_magnitude_adjoint(iwe.pixels);

  const int n = kernel_.taps();
  std::vector<double> wx(n), wy(n), dwx(n), dwy(n);
  const double reach = kernel_.radius() + 1.0;
  for (std::size_t k = 0; k < warped.size(); ++k) {
    const Vec2& p = warped[k];
    if (!p.allFinite() || p.x() < -reach || p.y() < -reach || p.x() > s.width - 1 + reach ||
        p.y() > s.height - 1 + reach) {
      continue;
    }
    const int x0 = kernel_.weights(p.x(), wx, dwx);
    const int y0 = kernel_.weights(p.y(), wy, dwy);
    double gx = 0.0;
    double gy = 0.0;
    for (int j = 0; j < n; ++j) {
      const int y = y0 + j;
      if (y < 0 || y >= s.height) continue;
      for (int i = 0; i < n; ++i) {
        const int x = x0 + i;
        if (x < 0 || x >= s.width) continue;
        const double a = adj(x, y);
        gx += a * dwx[i] * wy[j];
        gy += a * wx[i] * dwy[j];
      }
    }
    const double dt = (t_ref - (*events_)[k].t) / baseline_;
    const BilinearTaps& t = taps[k];
    for (int q = 0; q < 4; ++q) {
      const double c = t.weight[q] * dt;
      if (c == 0.0) continue;
      (*grad)[2 * t.index[q]] += c * gx;
      (*grad)[2 * t.index[q] + 1] += c * gy;
    }
  }
  return value;
}

double relative_contrast(const EventSet& events, const MotionField& field, double t_ref,
                         const ContrastConfig& cfg) {
  const double lo = events.empty() ? 0.0 : events.t_start();
  const ContrastObjective obj(events, {lo, lo + 1.0}, cfg);
  return obj.relative(field, t_ref);
}

double multi_ref_contrast(const EventSet& events, const MotionField& field, Window window,
                          const ContrastConfig& cfg) {
  const ContrastObjective obj(events, window, cfg);
  return obj.multi_ref(field);
}

}  // namespace opcm
