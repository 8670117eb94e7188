#pragma once

// Limited-memory BFGS with Armijo backtracking. Small, dense, deterministic;
// sized for the few-dozen-variable problems in this library.

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <limits>
#include <vector>

namespace phri {

struct MinimizeOptions {
  int max_iterations = 1000;
  double gradient_tolerance = 1e-8;
  int memory = 8;
  double armijo = 1e-4;
  int max_backtracks = 60;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// `fn(x, grad)` returns f(x) and writes the gradient into `grad`. Every
/// accepted step strictly decreases f.
template <typename Fn>
MinimizeResult minimize_lbfgs(Fn&& fn, Eigen::VectorXd x0, const MinimizeOptions& opts = {}) {
  using Eigen::VectorXd;
  MinimizeResult res;
  res.x = std::move(x0);
  VectorXd g(res.x.size());
  res.value = fn(res.x, g);
  res.gradient_norm = g.norm();
  if (res.x.size() == 0 || res.gradient_norm <= opts.gradient_tolerance) {
    res.converged = true;
    return res;
  }

  std::deque<VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  VectorXd g_new(res.x.size());

  for (int it = 0; it < opts.max_iterations; ++it) {
    res.iterations = it + 1;
    // Two-loop recursion for the quasi-Newton direction.
    VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += s_hist[i] * (alpha[i] - beta);
    }
    VectorXd dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = 1.0;
    if (s_hist.empty()) step = std::min(1.0, 1.0 / std::max(1e-12, g.norm()));
    bool accepted = false;
    VectorXd x_new;
    double f_new = 0.0;
    for (int b = 0; b < opts.max_backtracks; ++b) {
      x_new = res.x + step * dir;
      f_new = fn(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= res.value + opts.armijo * step * slope && f_new < res.value) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    VectorXd s = x_new - res.x;
    VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-16 * s.norm() * y.norm() && sy > 0.0) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    res.x = std::move(x_new);
    res.value = f_new;
    g = g_new;
    res.gradient_norm = g.norm();
    if (res.gradient_norm <= opts.gradient_tolerance) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace phri
