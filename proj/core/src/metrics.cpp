#include "opcm/metrics.hpp"

#include <cmath>

#include <json.hpp>

#include "opcm/error.hpp"
#include "opcm/warp.hpp"

namespace opcm {

namespace {

void require_same_size(const FlowField& a, const FlowField& b, const Mask& mask) {
  const SensorSize s = a.sensor();
  if (b.sensor() != s || mask.width() != s.width || mask.height() != s.height) {
    throw ValidationError("flow fields and mask must have matching dimensions");
  }
}

double endpoint_error(const FlowField& a, const FlowField& b, int x, int y) {
  return std::hypot(static_cast<double>(a.u(x, y)) - static_cast<double>(b.u(x, y)),
                    static_cast<double>(a.v(x, y)) - static_cast<double>(b.v(x, y)));
}

std::size_t mask_count(const Mask& mask) {
  std::size_t n = 0;
  for (auto m : mask.data()) n += m != 0;
  return n;
}

}  // namespace

MaskPolicy parse_mask_policy(std::string_view name) {
  if (name == "event_presence" || name == "events") return MaskPolicy::event_presence;
  if (name == "gt_valid" || name == "valid") return MaskPolicy::gt_valid;
  throw ValidationError("unknown mask policy '" + std::string(name) +
                        "' (event_presence, gt_valid)");
}

std::string_view to_string(MaskPolicy policy) {
  return policy == MaskPolicy::event_presence ? "event_presence" : "gt_valid";
}

Mask event_mask(const EventSet& events) {
  const SensorSize s = events.sensor();
  Mask mask(s.width, s.height, 0);
  for (const Event& e : events.events()) mask(e.x, e.y) = 1;
  return mask;
}

Mask evaluation_mask(MaskPolicy policy, const FlowField& pred, const FlowField& gt,
                     const EventSet* events) {
  const SensorSize s = gt.sensor();
  if (pred.sensor() != s) throw ValidationError("flow fields must have matching dimensions");
  Mask mask(s.width, s.height, 1);
  if (policy == MaskPolicy::event_presence) {
    if (events == nullptr) throw ValidationError("event-presence mask needs the event set");
    if (events->sensor() != s) throw ValidationError("events and flow use different sensors");
    mask = event_mask(*events);
  }
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (!pred.valid(x, y) || !gt.valid(x, y)) mask(x, y) = 0;
    }
  }
  return mask;
}

double aee(const FlowField& pred, const FlowField& gt, const Mask& mask) {
  require_same_size(pred, gt, mask);
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      acc += endpoint_error(pred, gt, x, y);
      ++n;
    }
  }
  if (n == 0) throw ValidationError("evaluation mask is empty");
  return acc / static_cast<double>(n);
}

double outlier_pct(const FlowField& pred, const FlowField& gt, const Mask& mask, double n) {
  require_same_size(pred, gt, mask);
  std::size_t outliers = 0;
  std::size_t total = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      outliers += endpoint_error(pred, gt, x, y) > n;
      ++total;
    }
  }
  if (total == 0) throw ValidationError("evaluation mask is empty");
  return 100.0 * static_cast<double>(outliers) / static_cast<double>(total);
}

// Flow warp loss as defined by the prior work that introduced it; the
// reference time is the window start.
double fwl(const EventSet& events, const FlowField& flow, Window window, double sigma) {
  if (events.empty()) throw ValidationError("FWL needs events");
  const SensorSize s = events.sensor();
  if (flow.sensor() != s) throw ValidationError("flow and events use different sensors");
  if (!(window.duration() > 0.0)) throw ValidationError("FWL window must have positive length");
  Image<Vec2> velocity(s.width, s.height, Vec2::Zero());
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (!flow.valid(x, y)) continue;
      velocity(x, y) = Vec2(flow.u(x, y), flow.v(x, y)) / window.duration();
    }
  }
  const Image<Vec2> zero(s.width, s.height, Vec2::Zero());
  const double base = variance(build_iwe(warp_events(events, zero, window.t0), s, sigma));
  if (!(base > 0.0)) throw NumericalError("FWL: identity IWE has zero variance");
  return variance(build_iwe(warp_events(events, velocity, window.t0), s, sigma)) / base;
}

std::string EvalReport::to_json() const {
  nlohmann::json j = {{"aee", aee},
                      {"outlier_pct", outlier_pct},
                      {"n_valid", n_valid},
                      {"n", n},
                      {"mask", std::string(to_string(mask))}};
  j["fwl"] = fwl ? nlohmann::json(*fwl) : nlohmann::json(nullptr);
  return j.dump(2);
}

EvalReport evaluate(const FlowField& pred, const FlowField& gt, MaskPolicy policy,
                    const EventSet* events, double n, std::optional<Window> window) {
  const Mask mask = evaluation_mask(policy, pred, gt, events);
  EvalReport r;
  r.n_valid = mask_count(mask);
  if (r.n_valid == 0) throw ValidationError("evaluation mask is empty");
  r.aee = aee(pred, gt, mask);
  r.outlier_pct = outlier_pct(pred, gt, mask, n);
  r.n = n;
  r.mask = policy;
  if (events != nullptr) r.fwl = fwl(*events, pred, window.value_or(events->window()));
  return r;
}

}  // namespace opcm
