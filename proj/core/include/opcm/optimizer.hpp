#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "opcm/bfgs.hpp"
#include "opcm/objectives.hpp"
#include "opcm/priors.hpp"
#include "opcm/types.hpp"
#include "opcm/warp.hpp"

namespace opcm {

enum class GradientMode { analytic, central_difference };

struct OpcmConfig {
  double alpha = 20.0;
  double beta_lin = 1.0;
  double beta_ang = 0.1;
  double lambda = 0.0;
  std::vector<GridShape> pyramid{{1, 1}, {2, 2}, {4, 4}, {8, 8}};
  ContrastConfig contrast{};
  int max_iters = 250;
  double grad_tol = 1e-6;
  GradientMode gradient = GradientMode::analytic;
  /// Central-difference step in px/s.
  double fd_step = 1e-4;
  /// Events per window used by the preset (informational; the CLI applies it).
  std::size_t events_per_window = 30000;

  /// Throws ValidationError on any violated invariant.
  void validate() const;
};

/// Named hyperparameter sets: "ecd", "mvsec", "mvsec-outdoor", "dsec".
OpcmConfig preset(std::string_view name);
std::vector<std::string> preset_names();

/// Parses "1x1,2x2,4x4" (cols x rows).
std::vector<GridShape> parse_pyramid(std::string_view text);
std::string format_pyramid(const std::vector<GridShape>& pyramid);

/// L1 total variation over 4-connected forward differences of the tile grid.
double tv_regularizer(const MotionField& field);

struct TermValues {
  double f_rel = 0.0;
  /// Alignment scores; nullopt when the map is absent or the scored domain
  /// is empty.
  std::optional<double> g_lin;
  std::optional<double> g_ang;
  double tv = 0.0;
  double total = 0.0;
};

/// alpha f_rel + beta_lin g_lin + beta_ang g_ang - lambda TV, to be maximized.
///
/// Alignment terms are mean cosines (the affine equivalent of the MSE). An
/// absent map, or one whose scored domain is empty, contributes 0. A
/// degenerate contrast baseline drops the contrast term; if no other term is
/// active the objective is constant.
class HybridObjective {
 public:
  /// `events` and `priors` must outlive the objective.
  HybridObjective(const EventSet& events, Window window, const Priors& priors,
                  const OpcmConfig& cfg);

  const OpcmConfig& config() const noexcept { return cfg_; }
  SensorSize sensor() const noexcept { return sensor_; }
  Window window() const noexcept { return contrast_.window(); }
  bool contrast_degenerate() const noexcept { return contrast_.degenerate(); }
  bool has_active_term() const noexcept;

  TermValues terms(const MotionField& field) const;
  double value(const MotionField& field) const;
  /// Value and d value / d params in MotionField::to_vector order, using the
  /// configured gradient mode.
  double value_and_gradient(const MotionField& field, Eigen::VectorXd& grad) const;
  double analytic_gradient(const MotionField& field, Eigen::VectorXd& grad) const;
  Eigen::VectorXd finite_difference_gradient(const MotionField& field, double step) const;

 private:
  const Priors* priors_;
  OpcmConfig cfg_;
  SensorSize sensor_;
  ContrastObjective contrast_;
};

struct LevelResult {
  GridShape shape;
  MotionField field;
  /// Objective at the initial point, then after each accepted iterate.
  std::vector<double> trace;
  int iterations = 0;
  int evaluations = 0;
  BfgsStop stop = BfgsStop::max_iterations;
  /// Set when the contrast term was unusable; the field is then returned as
  /// initialized unless a prior term drove the optimization.
  bool degenerate_contrast = false;
};

/// Ascends the hybrid objective from `init` with BFGS. Returns the best
/// iterate. Throws NumericalError naming the term when the initial
/// objective is not finite.
LevelResult optimize_level(const HybridObjective& objective, const MotionField& init);

struct OpcmResult {
  MotionField field;
  /// upsample(field) * window duration, pixels.
  FlowField flow;
  std::vector<LevelResult> levels;
  TermValues terms;
};

/// Coarse-to-fine optimization: the first level starts at zero, each finer
/// level starts from the bilinear resampling of the previous optimum.
OpcmResult optimize_pyramid(const EventSet& events, Window window, const Priors& priors,
                            const OpcmConfig& cfg);

/// Converts a dense velocity field (px/s) into a displacement field.
FlowField velocity_to_flow(const Image<Vec2>& velocity, double duration);

}  // namespace opcm
