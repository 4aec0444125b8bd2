#include "opcm/optimizer.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "opcm/error.hpp"

namespace opcm {

void OpcmConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be >= 0");
  if (!(beta_lin >= 0.0) || !std::isfinite(beta_lin)) throw ValidationError("beta_lin must be >= 0");
  if (!(beta_ang >= 0.0) || !std::isfinite(beta_ang)) throw ValidationError("beta_ang must be >= 0");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
  if (alpha == 0.0 && beta_lin == 0.0 && beta_ang == 0.0) {
    throw ValidationError("at least one of alpha, beta_lin, beta_ang must be positive");
  }
  if (pyramid.empty()) throw ValidationError("pyramid must not be empty");
  for (std::size_t i = 0; i < pyramid.size(); ++i) {
    if (pyramid[i].cols < 1 || pyramid[i].rows < 1) {
      throw ValidationError("pyramid levels must be at least 1x1");
    }
    if (i > 0 && pyramid[i].tiles() <= pyramid[i - 1].tiles()) {
      throw ValidationError("pyramid tile counts must strictly increase");
    }
  }
  contrast.validate();
  if (max_iters < 0) throw ValidationError("max_iters must be >= 0");
  if (!(grad_tol > 0.0)) throw ValidationError("grad_tol must be positive");
  if (!(fd_step > 0.0)) throw ValidationError("fd_step must be positive");
}

OpcmConfig preset(std::string_view name) {
  OpcmConfig cfg;
  if (name == "ecd" || name == "mvsec") return cfg;
  if (name == "mvsec-outdoor") {
    cfg.beta_lin = 2.0;
    cfg.beta_ang = 0.05;
    cfg.events_per_window = 40000;
    return cfg;
  }
  if (name == "dsec") {
    cfg.alpha = 5000.0;
    cfg.beta_lin = 500.0;
    cfg.beta_ang = 100.0;
    cfg.pyramid = {{1, 1}, {2, 2}, {4, 4}, {8, 8}, {16, 16}};
    cfg.events_per_window = 1500000;
    return cfg;
  }
  throw ValidationError("unknown preset '" + std::string(name) +
                        "' (ecd, mvsec, mvsec-outdoor, dsec)");
}

std::vector<std::string> preset_names() { return {"ecd", "mvsec", "mvsec-outdoor", "dsec"}; }

std::vector<GridShape> parse_pyramid(std::string_view text) {
  std::vector<GridShape> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const std::string_view item = text.substr(start, end - start);
    const auto x = item.find('x');
    GridShape shape;
    const auto parse = [&](std::string_view s, int& v) {
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      return ec == std::errc{} && ptr == s.data() + s.size();
    };
    if (x == std::string_view::npos || !parse(item.substr(0, x), shape.cols) ||
        !parse(item.substr(x + 1), shape.rows)) {
      throw ValidationError("bad pyramid level '" + std::string(item) + "' (expected COLSxROWS)");
    }
    out.push_back(shape);
    start = end + 1;
  }
  return out;
}

std::string format_pyramid(const std::vector<GridShape>& pyramid) {
  std::ostringstream os;
  for (std::size_t i = 0; i < pyramid.size(); ++i) {
    if (i) os << ',';
    os << pyramid[i].cols << 'x' << pyramid[i].rows;
  }
  return os.str();
}

double tv_regularizer(const MotionField& field) {
  const GridShape g = field.shape();
  double tv = 0.0;
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      if (c + 1 < g.cols) tv += (field.at(c + 1, r) - field.at(c, r)).lpNorm<1>();
      if (r + 1 < g.rows) tv += (field.at(c, r + 1) - field.at(c, r)).lpNorm<1>();
    }
  }
  return tv;
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void tv_gradient(const MotionField& field, Eigen::VectorXd& grad, double scale) {
  const GridShape g = field.shape();
  const auto idx = [&](int c, int r) { return 2 * (r * g.cols + c); };
  const auto edge = [&](int a, int b, const Vec2& d) {
    for (int k = 0; k < 2; ++k) {
      grad[b + k] += scale * sign(d[k]);
      grad[a + k] -= scale * sign(d[k]);
    }
  };
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      if (c + 1 < g.cols) edge(idx(c, r), idx(c + 1, r), field.at(c + 1, r) - field.at(c, r));
      if (r + 1 < g.rows) edge(idx(c, r), idx(c, r + 1), field.at(c, r + 1) - field.at(c, r));
    }
  }
}

// Pulls a dense per-pixel gradient back onto the tile parameters through the
// bilinear upsampling.
void pull_back(const MotionField& field, const Image<Vec2>& dense, double scale,
               Eigen::VectorXd& grad) {
  for (int y = 0; y < dense.height(); ++y) {
    for (int x = 0; x < dense.width(); ++x) {
      const Vec2& g = dense(x, y);
      if (g.x() == 0.0 && g.y() == 0.0) continue;
      const BilinearTaps t = field.taps(x, y);
      for (int q = 0; q < 4; ++q) {
        const double w = scale * t.weight[q];
        grad[2 * t.index[q]] += w * g.x();
        grad[2 * t.index[q] + 1] += w * g.y();
      }
    }
  }
}

}  // namespace

HybridObjective::HybridObjective(const EventSet& events, Window window, const Priors& priors,
                                 const OpcmConfig& cfg)
    : priors_(&priors), cfg_(cfg), sensor_(events.sensor()),
      contrast_(events, window, cfg.contrast) {
  cfg_.validate();
  for (const auto* map : {&priors.linear, &priors.angular}) {
    if (*map && (*map)->sensor() != sensor_) {
      throw ValidationError("orientation map size differs from the event sensor");
    }
  }
}

bool HybridObjective::has_active_term() const noexcept {
  return (cfg_.alpha > 0.0 && !contrast_.degenerate()) ||
         (priors_->linear && cfg_.beta_lin > 0.0) || (priors_->angular && cfg_.beta_ang > 0.0);
}

TermValues HybridObjective::terms(const MotionField& field) const {
  TermValues t;
  if (cfg_.alpha > 0.0 && !contrast_.degenerate()) {
    t.f_rel = contrast_.multi_ref(field);
    t.total = cfg_.alpha * t.f_rel;
  }
  const bool lin = priors_->linear && cfg_.beta_lin > 0.0;
  const bool ang = priors_->angular && cfg_.beta_ang > 0.0;
  if (lin || ang) {
    const Image<Vec2> dense = upsample_bilinear(field);
    if (lin) {
      t.g_lin = alignment_score_with_gradient(dense, *priors_->linear, nullptr);
      if (t.g_lin) t.total += cfg_.beta_lin * *t.g_lin;
    }
    if (ang) {
      t.g_ang = alignment_score_with_gradient(dense, *priors_->angular, nullptr);
      if (t.g_ang) t.total += cfg_.beta_ang * *t.g_ang;
    }
  }
  if (cfg_.lambda > 0.0) {
    t.tv = tv_regularizer(field);
    t.total -= cfg_.lambda * t.tv;
  }
  return t;
}

double HybridObjective::value(const MotionField& field) const { return terms(field).total; }

double HybridObjective::analytic_gradient(const MotionField& field, Eigen::VectorXd& grad) const {
  grad.setZero(2 * field.shape().tiles());
  double total = 0.0;
  if (cfg_.alpha > 0.0 && !contrast_.degenerate()) {
    Eigen::VectorXd g;
    total = cfg_.alpha * contrast_.multi_ref(field, &g);
    grad += cfg_.alpha * g;
  }
  const bool lin = priors_->linear && cfg_.beta_lin > 0.0;
  const bool ang = priors_->angular && cfg_.beta_ang > 0.0;
  if (lin || ang) {
    const Image<Vec2> dense = upsample_bilinear(field);
    Image<Vec2> dg;
    if (lin) {
      if (const auto s = alignment_score_with_gradient(dense, *priors_->linear, &dg)) {
        total += cfg_.beta_lin * *s;
        pull_back(field, dg, cfg_.beta_lin, grad);
      }
    }
    if (ang) {
      if (const auto s = alignment_score_with_gradient(dense, *priors_->angular, &dg)) {
        total += cfg_.beta_ang * *s;
        pull_back(field, dg, cfg_.beta_ang, grad);
      }
    }
  }
  if (cfg_.lambda > 0.0) {
    total -= cfg_.lambda * tv_regularizer(field);
    tv_gradient(field, grad, -cfg_.lambda);
  }
  return total;
}

Eigen::VectorXd HybridObjective::finite_difference_gradient(const MotionField& field,
                                                            double step) const {
  const Eigen::VectorXd x = field.to_vector();
  Eigen::VectorXd grad(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    const double fp = value(MotionField::from_vector(field.shape(), sensor_, xp));
    const double fm = value(MotionField::from_vector(field.shape(), sensor_, xm));
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

double HybridObjective::value_and_gradient(const MotionField& field, Eigen::VectorXd& grad) const {
  if (cfg_.gradient == GradientMode::analytic) return analytic_gradient(field, grad);
  grad = finite_difference_gradient(field, cfg_.fd_step);
  return value(field);
}

LevelResult optimize_level(const HybridObjective& objective, const MotionField& init) {
  LevelResult out;
  out.shape = init.shape();
  out.field = init;
  out.degenerate_contrast = objective.contrast_degenerate();
  if (!init.all_finite()) throw NumericalError("initial motion field is not finite");

  const TermValues t0 = objective.terms(init);
  if (!std::isfinite(t0.total)) {
    std::string term = "total";
    if (!std::isfinite(t0.f_rel)) term = "f_rel";
    else if (t0.g_lin && !std::isfinite(*t0.g_lin)) term = "g_lin";
    else if (t0.g_ang && !std::isfinite(*t0.g_ang)) term = "g_ang";
    else if (!std::isfinite(t0.tv)) term = "tv";
    throw NumericalError("objective is not finite at the initial point (term " + term + ")");
  }
  out.trace.push_back(t0.total);
  if (!objective.has_active_term()) {
    out.stop = BfgsStop::gradient_tolerance;
    out.evaluations = 1;
    return out;
  }

  const GridShape shape = init.shape();
  const SensorSize sensor = objective.sensor();
  const GradientFunction negated = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const MotionField f = MotionField::from_vector(shape, sensor, x);
    if (grad == nullptr) return -objective.value(f);
    const double v = objective.value_and_gradient(f, *grad);
    *grad = -*grad;
    return -v;
  };
  const OpcmConfig& cfg = objective.config();
  BfgsOptions opt;
  opt.max_iters = cfg.max_iters;
  opt.grad_tol = cfg.grad_tol;
  opt.initial_step = 1.0 / objective.window().duration();
  const BfgsResult r = minimize_bfgs(negated, init.to_vector(), opt);

  out.field = MotionField::from_vector(shape, sensor, r.x);
  out.trace.clear();
  for (double v : r.trace) out.trace.push_back(-v);
  out.iterations = r.iterations;
  out.evaluations = r.evaluations;
  out.stop = r.stop;
  return out;
}

OpcmResult optimize_pyramid(const EventSet& events, Window window, const Priors& priors,
                            const OpcmConfig& cfg) {
  cfg.validate();
  const HybridObjective objective(events, window, priors, cfg);
  OpcmResult result;
  MotionField current(cfg.pyramid.front(), events.sensor());
  for (std::size_t i = 0; i < cfg.pyramid.size(); ++i) {
    if (i > 0) current = current.resampled(cfg.pyramid[i]);
    LevelResult level = optimize_level(objective, current);
    current = level.field;
    result.levels.push_back(std::move(level));
  }
  result.field = current;
  result.flow = velocity_to_flow(upsample_bilinear(current), window.duration());
  result.terms = objective.terms(current);
  return result;
}

FlowField velocity_to_flow(const Image<Vec2>& velocity, double duration) {
  FlowField flow(SensorSize{velocity.width(), velocity.height()});
  for (int y = 0; y < velocity.height(); ++y) {
    for (int x = 0; x < velocity.width(); ++x) {
      flow.u(x, y) = static_cast<float>(velocity(x, y).x() * duration);
      flow.v(x, y) = static_cast<float>(velocity(x, y).y() * duration);
    }
  }
  return flow;
}

}  // namespace opcm
