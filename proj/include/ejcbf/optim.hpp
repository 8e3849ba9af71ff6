#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <numeric>
#include <vector>

namespace ejcbf {

/// Derivative-free minimization of f over R^n (standard Nelder-Mead with
/// adaptive restarts left to the caller). Returns the best vertex found
/// within max_evals function evaluations.
inline Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x0, double step, int max_evals,
                                   double* best_value = nullptr) {
  const int n = static_cast<int>(x0.size());
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : 1e100;
  };

  std::vector<Eigen::VectorXd> vx(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (int i = 1; i <= n; ++i) vx[i](i - 1) += step;
  for (int i = 0; i <= n; ++i) fv[i] = eval(vx[i]);

  std::vector<int> ord(n + 1);
  while (evals < max_evals) {
    std::iota(ord.begin(), ord.end(), 0);
    std::sort(ord.begin(), ord.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    const int best = ord[0], worst = ord[n], second = ord[n - 1];

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += vx[i];
    centroid /= n;

    const Eigen::VectorXd xr = centroid + (centroid - vx[worst]);
    const double fr = eval(xr);
    if (fr < fv[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - vx[worst]);
      const double fe = eval(xe);
      if (fe < fr) { vx[worst] = xe; fv[worst] = fe; }
      else { vx[worst] = xr; fv[worst] = fr; }
    } else if (fr < fv[second]) {
      vx[worst] = xr;
      fv[worst] = fr;
    } else {
      const Eigen::VectorXd xc = centroid + 0.5 * (vx[worst] - centroid);
      const double fc = eval(xc);
      if (fc < fv[worst]) { vx[worst] = xc; fv[worst] = fc; }
      else {
        for (int i = 0; i <= n; ++i) {
          if (i == best) continue;
          vx[i] = vx[best] + 0.5 * (vx[i] - vx[best]);
          fv[i] = eval(vx[i]);
        }
      }
    }
    if (std::abs(fv[ord[0]] - fv[ord[n]]) < 1e-12 * (1.0 + std::abs(fv[ord[0]]))) break;
  }

  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (fv[i] < fv[best]) best = i;
  if (best_value) *best_value = fv[best];
  return vx[best];
}

}  // namespace ejcbf
