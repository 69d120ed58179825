#include "nsde/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace nsde {
namespace {

Eigen::VectorXd project(Eigen::VectorXd x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Gradient with components zeroed where a bound blocks descent.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi) {
  Eigen::VectorXd pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x(i) <= lo(i) && g(i) > 0.0) || (x(i) >= hi(i) && g(i) < 0.0)) pg(i) = 0.0;
  }
  return pg;
}

struct Pair {
  Eigen::VectorXd s, y;
  double rho;
};

Eigen::VectorXd two_loop(const std::deque<Pair>& memory, const Eigen::VectorXd& g, const Eigen::VectorXd& mask) {
  Eigen::VectorXd q = g.cwiseProduct(mask);
  std::vector<double> a(memory.size());
  for (std::size_t k = memory.size(); k-- > 0;) {
    const auto& p = memory[k];
    a[k] = p.rho * p.s.cwiseProduct(mask).dot(q);
    q -= a[k] * p.y.cwiseProduct(mask);
  }
  if (!memory.empty()) {
    const auto& last = memory.back();
    const double yy = last.y.cwiseProduct(mask).squaredNorm();
    const double sy = last.s.cwiseProduct(mask).dot(last.y.cwiseProduct(mask));
    if (yy > 0.0 && sy > 0.0) q *= sy / yy;
  }
  for (std::size_t k = 0; k < memory.size(); ++k) {
    const auto& p = memory[k];
    const double b = p.rho * p.y.cwiseProduct(mask).dot(q);
    q += (a[k] - b) * p.s.cwiseProduct(mask);
  }
  return -q.cwiseProduct(mask);
}

}  // namespace

OptimizeResult minimize_box(const Objective& objective, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper, const OptimizeOptions& options) {
  OptimizeResult result;
  Eigen::VectorXd x = project(std::move(x0), lower, upper);
  Eigen::VectorXd g(x.size());
  double f = objective(x, &g);
  result.trace.push_back(f);
  std::deque<Pair> memory;

  const auto finish = [&](bool converged, double pg_norm) {
    result.x = x;
    result.value = f;
    result.converged = converged;
    result.projected_gradient_norm = pg_norm;
    return result;
  };
  if (!std::isfinite(f)) return finish(false, std::numeric_limits<double>::infinity());
  if (x.size() == 0) return finish(true, 0.0);

  for (std::size_t it = 0;; ++it) {
    const Eigen::VectorXd pg = projected_gradient(x, g, lower, upper);
    const double pg_norm = pg.lpNorm<Eigen::Infinity>();
    if (pg_norm < options.gradient_tolerance * (1.0 + std::abs(f))) return finish(true, pg_norm);
    if (it >= options.max_iterations) return finish(false, pg_norm);
    result.iterations = it + 1;

    Eigen::VectorXd mask(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) mask(i) = pg(i) == 0.0 && g(i) != 0.0 ? 0.0 : 1.0;

    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      const bool steepest = memory.empty() || attempt == 1;
      Eigen::VectorXd dir = steepest ? Eigen::VectorXd(-pg) : two_loop(memory, g, mask);
      if (!steepest && dir.dot(g) >= 0.0) continue;
      double t = steepest && memory.empty() ? std::min(1.0, 1.0 / pg_norm) : 1.0;
      for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
        Eigen::VectorXd x_new = project(x + t * dir, lower, upper);
        const Eigen::VectorXd step = x_new - x;
        const double slope = g.dot(step);
        if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
        Eigen::VectorXd g_new(x.size());
        const double f_new = objective(x_new, &g_new);
        if (std::isfinite(f_new) && f_new <= f + 1e-4 * slope && slope < 0.0) {
          const Eigen::VectorXd y = g_new - g;
          const double sy = step.dot(y);
          if (sy > 1e-12 * step.norm() * y.norm()) {
            memory.push_back({step, y, 1.0 / sy});
            if (memory.size() > options.memory) memory.pop_front();
          }
          x = std::move(x_new);
          g = std::move(g_new);
          f = f_new;
          result.trace.push_back(f);
          accepted = true;
          break;
        }
      }
      if (!accepted) memory.clear();
    }
    if (!accepted) return finish(false, pg_norm);
  }
}

Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = 1e-6 * (1.0 + std::abs(x(k)));
    probe(k) = x(k) + h;
    const double up = f(probe);
    probe(k) = x(k) - h;
    const double down = f(probe);
    probe(k) = x(k);
    g(k) = (up - down) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd numerical_hessian(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd step(n);
  for (Eigen::Index k = 0; k < n; ++k) step(k) = 1e-5 * (1.0 + std::abs(x(k)));
  const double f0 = f(x);
  Eigen::VectorXd p = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    p(i) = x(i) + step(i);
    const double fp = f(p);
    p(i) = x(i) - step(i);
    const double fm = f(p);
    p(i) = x(i);
    H(i, i) = (fp - 2.0 * f0 + fm) / (step(i) * step(i));
    for (Eigen::Index j = 0; j < i; ++j) {
      p(i) = x(i) + step(i), p(j) = x(j) + step(j);
      const double fpp = f(p);
      p(j) = x(j) - step(j);
      const double fpm = f(p);
      p(i) = x(i) - step(i);
      const double fmm = f(p);
      p(j) = x(j) + step(j);
      const double fmp = f(p);
      p(i) = x(i), p(j) = x(j);
      H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * step(i) * step(j));
    }
  }
  return H;
}

Eigen::MatrixXd numerical_hessian_from_gradient(const Objective& objective, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd p = x, gp(n), gm(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double h = 1e-5 * (1.0 + std::abs(x(k)));
    p(k) = x(k) + h;
    objective(p, &gp);
    p(k) = x(k) - h;
    objective(p, &gm);
    p(k) = x(k);
    H.col(k) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

Objective with_numeric_gradient(std::function<double(const Eigen::VectorXd&)> f) {
  return [f = std::move(f)](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    if (grad) *grad = finite_difference_gradient(f, x);
    return f(x);
  };
}

}  // namespace nsde
