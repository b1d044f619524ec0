#pragma once

// Limited-memory BFGS with a strong-Wolfe line search (bracketing + zoom).
// Accepted steps always satisfy the sufficient-decrease condition, so the
// objective is monotone non-increasing across iterations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace refmine {

struct LbfgsOptions {
  int memory = 10;
  int max_iterations = 200;
  /// Stop when the relative decrease of the objective, or the gradient norm
  /// relative to max(1, |x|), drops below this.
  double tolerance = 1e-5;
  int max_linesearch = 40;
  double c1 = 1e-4;
  double c2 = 0.9;
};

enum class LbfgsStatus { Converged, MaxIterations, LineSearchFailed };

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  LbfgsStatus status = LbfgsStatus::MaxIterations;
  std::vector<double> history;  // objective after each accepted step, history[0] at x0
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db), safeguarded
// to stay inside the interval; falls back to bisection.
inline double cubic_step(double a, double fa, double da, double b, double fb, double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  double t = 0.5 * (a + b);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = db - da + 2.0 * d2;
    if (denom != 0.0) t = b - (b - a) * (db + d2 - d1) / denom;
  }
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = 0.5 * (a + b);
  return t;
}

}  // namespace detail

/// Minimizes f starting from x0. `f(x, grad)` returns the objective and
/// writes the gradient into `grad`.
template <class Objective>
LbfgsResult minimize_lbfgs(Objective&& f, std::vector<double> x0, const LbfgsOptions& opt = {}) {
  using detail::dot;
  const std::size_t n = x0.size();
  LbfgsResult res;
  res.x = std::move(x0);
  std::vector<double> g(n);
  double fx = f(std::span<const double>(res.x), std::span<double>(g));
  res.value = fx;
  res.history.push_back(fx);

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> mem;
  std::vector<double> d(n), xt(n), gt(n), alpha(static_cast<std::size_t>(opt.memory));

  auto converged_by_gradient = [&] {
    return detail::norm(g) / std::max(1.0, detail::norm(res.x)) < opt.tolerance;
  };
  if (n == 0 || converged_by_gradient()) {
    res.status = LbfgsStatus::Converged;
    return res;
  }

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    // Two-loop recursion.
    for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
    for (std::size_t k = mem.size(); k-- > 0;) {
      alpha[k] = mem[k].rho * dot(mem[k].s, d);
      for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[k] * mem[k].y[i];
    }
    if (!mem.empty()) {
      const Pair& last = mem.back();
      const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
      for (double& v : d) v *= gamma;
    }
    for (std::size_t k = 0; k < mem.size(); ++k) {
      const double beta = mem[k].rho * dot(mem[k].y, d);
      for (std::size_t i = 0; i < n; ++i) d[i] += mem[k].s[i] * (alpha[k] - beta);
    }
    double dphi0 = dot(g, d);
    if (!(dphi0 < 0.0)) {
      mem.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      dphi0 = dot(g, d);
    }

    // Strong-Wolfe line search.
    const double f0 = fx;
    auto eval = [&](double step) {
      for (std::size_t i = 0; i < n; ++i) xt[i] = res.x[i] + step * d[i];
      const double v = f(std::span<const double>(xt), std::span<double>(gt));
      return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };
    const bool first = mem.empty();
    double step = first ? 1.0 / std::max(1.0, detail::norm(d)) : 1.0;
    double prev_step = 0.0, f_prev = f0, d_prev = dphi0;
    bool found = false;
    double f_new = f0;
    auto zoom = [&](double lo, double f_lo, double d_lo, double hi, double f_hi, double d_hi,
                    int budget) {
      for (int k = 0; k < budget; ++k) {
        const double a = detail::cubic_step(lo, f_lo, d_lo, hi, f_hi, d_hi);
        const double fa = eval(a);
        const double da = std::isfinite(fa) ? dot(gt, d) : 0.0;
        if (fa > f0 + opt.c1 * a * dphi0 || fa >= f_lo) {
          hi = a;
          f_hi = fa;
          d_hi = std::isfinite(fa) ? da : d_hi;
        } else {
          if (std::abs(da) <= -opt.c2 * dphi0) {
            f_new = fa;
            return true;
          }
          if (da * (hi - lo) >= 0.0) {
            hi = lo;
            f_hi = f_lo;
            d_hi = d_lo;
          }
          lo = a;
          f_lo = fa;
          d_lo = da;
        }
        if (std::abs(hi - lo) < 1e-20) break;
      }
      // Accept the best sufficient-decrease point found, if any.
      if (lo > 0.0 && f_lo <= f0 + opt.c1 * lo * dphi0) {
        f_new = eval(lo);
        return f_new < f0;
      }
      return false;
    };
    for (int ls = 0; ls < opt.max_linesearch; ++ls) {
      const double fa = eval(step);
      if (fa > f0 + opt.c1 * step * dphi0 || (ls > 0 && fa >= f_prev)) {
        const double da = std::isfinite(fa) ? dot(gt, d) : 0.0;
        found = zoom(prev_step, f_prev, d_prev, step, fa, da, opt.max_linesearch);
        break;
      }
      const double da = dot(gt, d);
      if (std::abs(da) <= -opt.c2 * dphi0) {
        f_new = fa;
        found = true;
        break;
      }
      if (da >= 0.0) {
        found = zoom(step, fa, da, prev_step, f_prev, d_prev, opt.max_linesearch);
        break;
      }
      prev_step = step;
      f_prev = fa;
      d_prev = da;
      step *= 2.0;
    }
    if (!found) {
      res.status = LbfgsStatus::LineSearchFailed;
      return res;
    }

    // xt/gt hold the accepted point.
    Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = xt[i] - res.x[i];
      p.y[i] = gt[i] - g[i];
    }
    const double sy = dot(p.s, p.y);
    res.x.swap(xt);
    g.swap(gt);
    fx = f_new;
    res.value = fx;
    res.history.push_back(fx);
    res.iterations = iter + 1;
    if (sy > 1e-10) {
      p.rho = 1.0 / sy;
      mem.push_back(std::move(p));
      if (mem.size() > static_cast<std::size_t>(opt.memory)) mem.pop_front();
    }

    if ((f0 - fx) / std::max(1.0, std::abs(fx)) < opt.tolerance || converged_by_gradient()) {
      res.status = LbfgsStatus::Converged;
      return res;
    }
  }
  res.status = LbfgsStatus::MaxIterations;
  return res;
}

}  // namespace refmine
