#include "opcm/bfgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>

namespace opcm {

namespace {

struct Probe {
  double alpha = 0.0;
  double f = 0.0;
  double slope = 0.0;  // directional derivative at alpha
  Eigen::VectorXd x;
  Eigen::VectorXd g;
};

// Minimizer of the cubic through two probes, or bisection when the cubic is
// ill-conditioned or lands outside the safeguarded interior of [lo, hi].
double interpolate(const Probe& a, const Probe& b) {
  const double lo = std::min(a.alpha, b.alpha);
  const double hi = std::max(a.alpha, b.alpha);
  const double mid = 0.5 * (a.alpha + b.alpha);
  const double d = b.alpha - a.alpha;
  if (!(std::abs(d) > 0.0)) return mid;
  const double d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
  const double disc = d1 * d1 - a.slope * b.slope;
  if (!(disc >= 0.0)) return mid;
  const double d2 = std::copysign(std::sqrt(disc), d);
  const double denom = b.slope - a.slope + 2.0 * d2;
  if (!(std::abs(denom) > 0.0)) return mid;
  const double t = b.alpha - d * (b.slope + d2 - d1) / denom;
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) return mid;
  return t;
}

class LineSearch {
 public:
  LineSearch(const GradientFunction& f, const BfgsOptions& opt, int& evaluations)
      : f_(f), opt_(opt), evaluations_(evaluations) {}

  // Returns true when a strong-Wolfe point was found. `armijo` holds the
  // best sufficient-decrease point seen, if any.
  bool search(const Eigen::VectorXd& x, double f0, const Eigen::VectorXd& p, double slope0,
              double alpha, Probe& out, std::optional<Probe>& armijo) {
    x_ = &x;
    p_ = &p;
    f0_ = f0;
    slope0_ = slope0;
    armijo_ = &armijo;
    Probe prev{0.0, f0, slope0, x, {}};
    for (int i = 0; i < opt_.max_line_search; ++i) {
      Probe cur = eval(alpha);
      if (!std::isfinite(cur.f) || cur.f > f0 + opt_.c1 * alpha * slope0 ||
          (i > 0 && cur.f >= prev.f)) {
        return zoom(prev, cur, out);
      }
      if (std::abs(cur.slope) <= -opt_.c2 * slope0) {
        out = std::move(cur);
        return true;
      }
      if (cur.slope >= 0.0) return zoom(cur, prev, out);
      prev = std::move(cur);
      alpha *= 2.0;
    }
    return false;
  }

 private:
  Probe eval(double alpha) {
    Probe pr;
    pr.alpha = alpha;
    pr.x = *x_ + alpha * *p_;
    pr.g.resize(pr.x.size());
    pr.f = f_(pr.x, &pr.g);
    ++evaluations_;
    pr.slope = std::isfinite(pr.f) ? pr.g.dot(*p_) : std::numeric_limits<double>::quiet_NaN();
    if (std::isfinite(pr.f) && pr.g.allFinite() &&
        pr.f <= f0_ + opt_.c1 * alpha * slope0_ && (!*armijo_ || pr.f < (*armijo_)->f)) {
      *armijo_ = pr;
    }
    return pr;
  }

  bool zoom(Probe lo, Probe hi, Probe& out) {
    for (int i = 0; i < opt_.max_line_search; ++i) {
      double alpha;
      if (std::isfinite(hi.f) && std::isfinite(hi.slope)) {
        alpha = interpolate(lo, hi);
      } else {
        alpha = 0.5 * (lo.alpha + hi.alpha);
      }
      if (std::abs(hi.alpha - lo.alpha) < 1e-14 * std::max(1.0, std::abs(lo.alpha))) return false;
      Probe cur = eval(alpha);
      if (!std::isfinite(cur.f) || cur.f > f0_ + opt_.c1 * alpha * slope0_ || cur.f >= lo.f) {
        hi = std::move(cur);
        continue;
      }
      if (std::abs(cur.slope) <= -opt_.c2 * slope0_) {
        out = std::move(cur);
        return true;
      }
      if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
      lo = std::move(cur);
    }
    return false;
  }

  const GradientFunction& f_;
  const BfgsOptions& opt_;
  int& evaluations_;
  const Eigen::VectorXd* x_ = nullptr;
  const Eigen::VectorXd* p_ = nullptr;
  double f0_ = 0.0;
  double slope0_ = 0.0;
  std::optional<Probe>* armijo_ = nullptr;
};

}  // namespace

std::string_view to_string(BfgsStop stop) {
  switch (stop) {
    case BfgsStop::gradient_tolerance: return "gradient_tolerance";
    case BfgsStop::function_tolerance: return "function_tolerance";
    case BfgsStop::max_iterations: return "max_iterations";
    case BfgsStop::line_search_failure: return "line_search_failure";
  }
  return "unknown";
}

BfgsResult minimize_bfgs(const GradientFunction& f, const Eigen::VectorXd& x0,
                         const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  BfgsResult result;
  result.x = x0;
  Eigen::VectorXd g(n);
  result.f = f(result.x, &g);
  result.evaluations = 1;
  result.trace.push_back(result.f);
  if (!std::isfinite(result.f) || !g.allFinite()) {
    result.stop = BfgsStop::line_search_failure;
    return result;
  }

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  LineSearch ls(f, options, result.evaluations);

  while (true) {
    if (n == 0 || g.lpNorm<Eigen::Infinity>() < options.grad_tol) {
      result.stop = BfgsStop::gradient_tolerance;
      break;
    }
    if (result.iterations >= options.max_iters) {
      result.stop = BfgsStop::max_iterations;
      break;
    }
    Eigen::VectorXd p = -H * g;
    double slope = g.dot(p);
    if (!(slope < 0.0)) {
      H.setIdentity();
      scaled = false;
      p = -g;
      slope = g.dot(p);
    }
    const double alpha0 = scaled ? 1.0 : options.initial_step / p.lpNorm<Eigen::Infinity>();

    Probe next;
    std::optional<Probe> armijo;
    const bool wolfe = ls.search(result.x, result.f, p, slope, alpha0, next, armijo);
    if (!wolfe) {
      if (!armijo) {
        result.stop = BfgsStop::line_search_failure;
        break;
      }
      next = std::move(*armijo);
    }

    const Eigen::VectorXd s = next.x - result.x;
    const Eigen::VectorXd y = next.g - g;
    const double improvement = result.f - next.f;
    result.x = std::move(next.x);
    result.f = next.f;
    g = std::move(next.g);
    ++result.iterations;
    result.trace.push_back(result.f);

    const double sy = s.dot(y);
    if (wolfe && sy > 1e-300) {
      if (!scaled) {
        H *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      H += ((sy + y.dot(Hy)) * rho * rho) * (s * s.transpose()) -
           rho * (Hy * s.transpose() + s * Hy.transpose());
    }
    if (improvement < options.f_tol * std::max(1.0, std::abs(result.f))) {
      result.stop = BfgsStop::function_tolerance;
      break;
    }
  }
  return result;
}

}  // namespace opcm
