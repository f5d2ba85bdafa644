#include "pgev/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

namespace pgev::optim {
namespace {

constexpr double kArmijo = 1e-4;
constexpr double kCurvature = 0.9;

struct Trial {
  double step = 0.0;
  double value = 0.0;
  double slope = 0.0;
  Eigen::VectorXd gradient;
};

class LineSearch {
 public:
  LineSearch(const Objective& f, const Eigen::VectorXd& x, double fx, const Eigen::VectorXd& dir,
             double slope0)
      : f_(f), x_(x), f0_(fx), dir_(dir), d0_(slope0) {}

  // Strong-Wolfe search (bracketing + zoom). Falls back to the best point with
  // sufficient decrease if the curvature condition cannot be met.
  std::optional<Trial> run(double step0) {
    Trial prev{0.0, f0_, d0_, {}};
    double step = step0;
    for (int i = 0; i < 40; ++i) {
      Trial cur = eval(step);
      if (!std::isfinite(cur.value) || cur.value > f0_ + kArmijo * step * d0_ ||
          (i > 0 && cur.value >= prev.value)) {
        return zoom(prev, cur);
      }
      if (std::abs(cur.slope) <= -kCurvature * d0_) return cur;
      if (cur.slope >= 0.0) return zoom(cur, prev);
      prev = std::move(cur);
      step *= 2.0;
    }
    return best_;
  }

 private:
  Trial eval(double step) {
    Trial t;
    t.step = step;
    t.gradient.resize(x_.size());
    t.value = f_(x_ + step * dir_, &t.gradient);
    if (std::isfinite(t.value) && t.gradient.allFinite()) {
      t.slope = t.gradient.dot(dir_);
      if (t.value <= f0_ + kArmijo * step * d0_ && (!best_ || t.value < best_->value)) best_ = t;
    } else {
      t.value = std::numeric_limits<double>::infinity();
      t.slope = std::numeric_limits<double>::quiet_NaN();
    }
    return t;
  }

  std::optional<Trial> zoom(Trial lo, Trial hi) {
    for (int i = 0; i < 40; ++i) {
      const double width = hi.step - lo.step;
      double step = 0.5 * (lo.step + hi.step);
      if (std::isfinite(hi.value)) {
        // Safeguarded quadratic through (lo.f, lo.d, hi.f).
        const double denom = 2.0 * (hi.value - lo.value - lo.slope * width);
        if (denom > 0.0) {
          const double cand = lo.step - lo.slope * width * width / denom;
          const double a = std::min(lo.step, hi.step) + 0.1 * std::abs(width);
          const double b = std::max(lo.step, hi.step) - 0.1 * std::abs(width);
          if (cand > a && cand < b) step = cand;
        }
      }
      if (std::abs(width) < 1e-16 * std::max(1.0, std::abs(lo.step))) break;
      Trial cur = eval(step);
      if (!std::isfinite(cur.value) || cur.value > f0_ + kArmijo * step * d0_ ||
          cur.value >= lo.value) {
        hi = std::move(cur);
      } else {
        if (std::abs(cur.slope) <= -kCurvature * d0_) return cur;
        if (cur.slope * (hi.step - lo.step) >= 0.0) hi = lo;
        lo = std::move(cur);
      }
    }
    return best_;
  }

  const Objective& f_;
  const Eigen::VectorXd& x_;
  double f0_;
  const Eigen::VectorXd& dir_;
  double d0_;
  std::optional<Trial> best_;
};

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  BfgsResult res;
  res.x = std::move(x0);
  res.gradient.resize(n);
  res.value = f(res.x, &res.gradient);
  if (!std::isfinite(res.value) || !res.gradient.allFinite()) {
    res.message = "objective not finite at the starting point";
    return res;
  }

  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
  bool fresh = true;  // h_inv is an (unscaled) identity
  int resets = 0;
  int flat_steps = 0;
  for (; res.iterations < options.max_iterations; ++res.iterations) {
    if (inf_norm(res.gradient) <= options.gradient_tolerance) break;
    Eigen::VectorXd dir = -h_inv * res.gradient;
    double slope = res.gradient.dot(dir);
    if (!(slope < 0.0)) {
      h_inv.setIdentity();
      fresh = true;
      dir = -res.gradient;
      slope = res.gradient.dot(dir);
    }
    const double step0 = fresh ? std::min(1.0, 1.0 / inf_norm(dir)) : 1.0;
    LineSearch ls(f, res.x, res.value, dir, slope);
    auto trial = ls.run(step0);
    if (!trial) {
      if (fresh || ++resets > 3) {
        res.message = "line search failed";
        break;
      }
      h_inv.setIdentity();
      fresh = true;
      continue;
    }
    const Eigen::VectorXd s = trial->step * dir;
    const Eigen::VectorXd y = trial->gradient - res.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-14 * s.norm() * y.norm()) {
      if (fresh) {
        h_inv *= sy / y.squaredNorm();
        fresh = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h_inv * y;
      h_inv += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) -
               rho * (hy * s.transpose() + s * hy.transpose());
    }
    // Steps that no longer lower f mean the decrease is below its rounding
    // noise; the Newton polish below takes over from here.
    flat_steps = trial->value < res.value ? 0 : flat_steps + 1;
    res.x += s;
    res.value = trial->value;
    res.gradient = trial->gradient;
    if (flat_steps >= 2) break;
  }

  // Newton polish on a differenced Hessian: reliable where function values
  // are too flat for the Armijo test but the gradient is still informative.
  for (int k = 0; k < options.polish_steps && inf_norm(res.gradient) > options.gradient_tolerance;
       ++k) {
    const Eigen::MatrixXd hess = numeric_hessian(f, res.x);
    if (!hess.allFinite()) break;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    Eigen::VectorXd delta = -ldlt.solve(res.gradient);
    bool improved = false;
    for (int half = 0; half < 6 && !improved; ++half, delta *= 0.5) {
      Eigen::VectorXd g(n);
      const Eigen::VectorXd xn = res.x + delta;
      const double fn = f(xn, &g);
      if (!std::isfinite(fn) || !g.allFinite()) continue;
      if (fn <= res.value + 1e-10 * std::max(1.0, std::abs(res.value)) &&
          inf_norm(g) < inf_norm(res.gradient)) {
        res.x = xn;
        res.value = fn;
        res.gradient = g;
        improved = true;
      }
    }
    if (!improved) break;
  }

  res.converged = inf_norm(res.gradient) <= options.gradient_tolerance;
  if (res.converged) {
    res.message = "converged";
  } else if (res.message.empty()) {
    res.message = res.iterations >= options.max_iterations ? "iteration limit reached"
                                                           : "stalled above gradient tolerance";
  }
  return res;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x,
                                double relative_step) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd hess(n, n);
  Eigen::VectorXd gp(n), gm(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = relative_step * std::max(1.0, std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fp = f(xp, &gp);
    const double fm = f(xm, &gm);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      hess.setConstant(std::numeric_limits<double>::quiet_NaN());
      return hess;
    }
    hess.col(i) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

Objective with_numeric_gradient(std::function<double(const Eigen::VectorXd&)> f,
                                double relative_step) {
  return [f = std::move(f), relative_step](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const double fx = f(x);
    if (grad != nullptr && std::isfinite(fx)) {
      grad->resize(x.size());
      Eigen::VectorXd xp = x;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = relative_step * std::max(1.0, std::abs(x[i]));
        xp[i] = x[i] + h;
        const double fp = f(xp);
        xp[i] = x[i] - h;
        const double fm = f(xp);
        xp[i] = x[i];
        if (std::isfinite(fp) && std::isfinite(fm)) {
          (*grad)[i] = (fp - fm) / (2.0 * h);
        } else if (std::isfinite(fp)) {
          (*grad)[i] = (fp - fx) / h;
        } else if (std::isfinite(fm)) {
          (*grad)[i] = (fx - fm) / h;
        } else {
          (*grad)[i] = 0.0;
        }
      }
    }
    return fx;
  };
}

}  // namespace pgev::optim
