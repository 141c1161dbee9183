#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>

namespace navtoken {

struct RootResult {
  double x = 0.0;
  double fx = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Brent's method (inverse quadratic interpolation and secant steps guarded by
// bisection) on a sign-changing bracket [a, b]. Stops once |f(x)| <= f_tol or
// the bracket has shrunk to x_tol. Requires f(a) and f(b) of opposite sign
// (or one of them already within f_tol).
template <typename F>
RootResult brent_root(F&& f, double a, double b, double f_tol, double x_tol = 0.0, int max_iter = 200) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double fa = f(a);
  double fb = f(b);
  RootResult res;
  if (std::abs(fa) <= f_tol) return {a, fa, 0, true};
  if (std::abs(fb) <= f_tol) return {b, fb, 0, true};
  if ((fa > 0) == (fb > 0)) return {b, fb, 0, false};

  double c = a, fc = fa;
  double d = b - a, e = d;
  for (int iter = 1; iter <= max_iter; ++iter) {
    if ((fb > 0) == (fc > 0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double tol = 2.0 * eps * std::abs(b) + 0.5 * x_tol;
    const double m = 0.5 * (c - b);
    if (std::abs(fb) <= f_tol || std::abs(m) <= tol) {
      return {b, fb, iter, std::abs(fb) <= f_tol || x_tol > 0.0};
    }
    if (std::abs(e) >= tol && std::abs(fa) > std::abs(fb)) {
      double p, q;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * m * s;
        q = 1.0 - s;
      } else {
        const double qa = fa / fc;
        const double r = fb / fc;
        p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
        q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0) q = -q; else p = -p;
      if (2.0 * p < std::min(3.0 * m * q - std::abs(tol * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = m;
        e = m;
      }
    } else {
      d = m;
      e = m;
    }
    a = b;
    fa = fb;
    b += std::abs(d) > tol ? d : (m > 0 ? tol : -tol);
    fb = f(b);
    res = {b, fb, iter, false};
  }
  res.converged = std::abs(res.fx) <= f_tol;
  return res;
}

}  // namespace navtoken
