#pragma once

#include <cmath>

namespace rd {

// Adaptive Simpson quadrature with absolute error control. The integrands
// used here are smooth and bounded, so plain interval bisection suffices.
template <typename F>
double adaptive_simpson(F&& f, double a, double b, double tol, int depth = 48) {
  auto simpson = [&](double lo, double hi, double flo, double fmid, double fhi) {
    return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
  };
  struct Rec {
    F& f;
    double operator()(double lo, double hi, double flo, double fmid, double fhi,
                      double whole, double tol, int depth) {
      const double mid = 0.5 * (lo + hi);
      const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
      const double flm = f(lm), frm = f(rm);
      const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
      const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
      if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
      return (*this)(lo, mid, flo, flm, fmid, left, 0.5 * tol, depth - 1) +
             (*this)(mid, hi, fmid, frm, fhi, right, 0.5 * tol, depth - 1);
    }
  };
  if (a == b) return 0.0;
  const double mid = 0.5 * (a + b);
  const double fa = f(a), fm = f(mid), fb = f(b);
  Rec rec{f};
  return rec(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, depth);
}

}  // namespace rd
