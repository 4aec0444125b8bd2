#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "opcm/objectives.hpp"
#include "opcm/types.hpp"

namespace opcm {

enum class MaskPolicy { event_presence, gt_valid };

MaskPolicy parse_mask_policy(std::string_view name);
std::string_view to_string(MaskPolicy policy);

/// Pixels with at least one event.
Mask event_mask(const EventSet& events);

/// Policy mask intersected with the validity of both fields. `events` is
/// required for MaskPolicy::event_presence.
Mask evaluation_mask(MaskPolicy policy, const FlowField& pred, const FlowField& gt,
                     const EventSet* events = nullptr);

/// Mean endpoint error over the mask. Throws ValidationError on a size
/// mismatch or an empty mask.
double aee(const FlowField& pred, const FlowField& gt, const Mask& mask);

/// Percentage of masked pixels whose endpoint error exceeds n pixels.
double outlier_pct(const FlowField& pred, const FlowField& gt, const Mask& mask,
                   double n = 3.0);

/// Flow warp loss: Var(IWE warped to t0 by flow / duration) / Var(IWE(0)).
/// Invalid flow pixels warp with zero velocity.
double fwl(const EventSet& events, const FlowField& flow, Window window, double sigma = 1.0);

struct EvalReport {
  double aee = 0.0;
  double outlier_pct = 0.0;
  std::optional<double> fwl;
  std::size_t n_valid = 0;
  double n = 3.0;
  MaskPolicy mask = MaskPolicy::event_presence;

  std::string to_json() const;
};

/// FWL is included when `events` is given, over `window` or else the event
/// set's own window.
EvalReport evaluate(const FlowField& pred, const FlowField& gt, MaskPolicy policy,
                    const EventSet* events = nullptr, double n = 3.0,
                    std::optional<Window> window = std::nullopt);

}  // namespace opcm
