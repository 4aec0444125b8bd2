#pragma once

#include <vector>

#include "opcm/types.hpp"
#include "opcm/warp.hpp"

namespace opcm {

struct ContrastConfig {
  double sigma = 1.0;
  /// Reference times as fractions of the event window.
  std::vector<double> t_refs{0.0, 0.25, 0.5, 0.75, 1.0};
  double weight_mean = 0.5;
  double weight_sigma = 1.0;

  void validate() const;
};

double variance(const Image<double>& image);
inline double variance(const Iwe& iwe) { return variance(iwe.pixels); }

/// Mean squared norm of the image gradient. Central differences inside,
/// one-sided differences on the border rows and columns. Needs >= 3x3.
double gradient_magnitude(const Image<double>& image);
inline double gradient_magnitude(const Iwe& iwe) { return gradient_magnitude(iwe.pixels); }

/// d gradient_magnitude / d image, same stencils as gradient_magnitude.
Image<double> gradient_magnitude_adjoint(const Image<double>& image);

/// Normal pdf N(fraction; weight_mean, weight_sigma^2), unnormalized over the
/// reference set.
double reference_weight(double fraction, const ContrastConfig& cfg);

/// Relative contrast of one event set, with the identity-warp denominator
/// computed once.
///
/// Evaluations at different reference times are summed in the order of
/// `cfg.t_refs`; within an IWE, events are splatted in storage order.
class ContrastObjective {
 public:
  ContrastObjective(const EventSet& events, Window window, ContrastConfig cfg);

  const EventSet& events() const noexcept { return *events_; }
  Window window() const noexcept { return window_; }
  const ContrastConfig& config() const noexcept { return cfg_; }

  /// G(0; -), the gradient magnitude of the unwarped IWE.
  double baseline() const noexcept { return baseline_; }
  /// True when the identity IWE carries no motion information: zero
  /// baseline, or every event fires on the same pixel.
  bool degenerate() const noexcept { return degenerate_; }

  /// f_rel(theta, t_ref) for an absolute reference time.
  double relative(const MotionField& field, double t_ref) const;
  /// Same with a dense per-pixel velocity (px/s), e.g. a ground-truth field.
  double relative(const Image<Vec2>& velocity, double t_ref) const;
  /// Gaussian-weighted mean of f_rel over the configured reference times.
  double multi_ref(const MotionField& field) const;
  double multi_ref(const Image<Vec2>& velocity) const;
  /// Same value; accumulates d/d(tile params) into `grad` (2 * tiles, u/v
  /// interleaved) when non-null.
  double multi_ref(const MotionField& field, Eigen::VectorXd* grad) const;

 private:
  double relative_with_gradient(const MotionField& field,
                                const std::vector<BilinearTaps>& taps,
                                double t_ref, Eigen::VectorXd* grad) const;

  const EventSet* events_;
  Window window_;
  ContrastConfig cfg_;
  SplatKernel kernel_;
  double baseline_ = 0.0;
  bool degenerate_ = false;
};

/// f_rel(theta, t_ref) = G(theta; t_ref) / G(0; -). Throws NumericalError on a
/// degenerate denominator.
double relative_contrast(const EventSet& events, const MotionField& field, double t_ref,
                         const ContrastConfig& cfg = {});

/// Gaussian-weighted multi-reference relative contrast over `window`.
double multi_ref_contrast(const EventSet& events, const MotionField& field, Window window,
                          const ContrastConfig& cfg = {});

}  // namespace opcm
