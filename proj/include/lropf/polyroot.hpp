#pragma once

// Closed-form univariate kernels used by every coordinate step: real roots of
// cubics (Cardano / trigonometric form), global minimisation of coercive
// quartics and of convex quadratics over an interval.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace lropf {

/// p(x) = a4 x^4 + a3 x^3 + a2 x^2 + a1 x + a0
struct QuarticCoeffs {
  double a4 = 0.0, a3 = 0.0, a2 = 0.0, a1 = 0.0, a0 = 0.0;

  double operator()(double x) const {
    return (((a4 * x + a3) * x + a2) * x + a1) * x + a0;
  }
  double derivative(double x) const {
    return ((4.0 * a4 * x + 3.0 * a3) * x + 2.0 * a2) * x + a1;
  }

  /// Coefficients of q(x) = p(x - x0), i.e. the same curve re-expressed in
  /// an absolute coordinate when p was built in the offset d = x - x0.
  QuarticCoeffs shifted(double x0) const {
    const double s = -x0;
    QuarticCoeffs q;
    q.a4 = a4;
    q.a3 = a3 + 4.0 * a4 * s;
    q.a2 = a2 + 3.0 * a3 * s + 6.0 * a4 * s * s;
    q.a1 = a1 + 2.0 * a2 * s + 3.0 * a3 * s * s + 4.0 * a4 * s * s * s;
    q.a0 = (*this)(s);
    return q;
  }

  QuarticCoeffs& operator+=(const QuarticCoeffs& o) {
    a4 += o.a4;
    a3 += o.a3;
    a2 += o.a2;
    a1 += o.a1;
    a0 += o.a0;
    return *this;
  }
};

/// Raised when a restriction is unbounded below; the Lagrangian restrictions
/// are coercive by construction, so this signals a modelling bug.
class NonCoerciveError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct QuarticMin {
  double argmin = 0.0;
  double value = 0.0;
};

namespace detail {

inline double cubic_eval(double c3, double c2, double c1, double c0, double x) {
  return ((c3 * x + c2) * x + c1) * x + c0;
}

inline double newton_polish(double c3, double c2, double c1, double c0, double x) {
  const double f = cubic_eval(c3, c2, c1, c0, x);
  const double df = (3.0 * c3 * x + 2.0 * c2) * x + c1;
  if (df == 0.0 || !std::isfinite(df)) return x;
  const double y = x - f / df;
  return std::abs(cubic_eval(c3, c2, c1, c0, y)) <= std::abs(f) ? y : x;
}

inline void collapse(std::vector<double>& roots) {
  std::sort(roots.begin(), roots.end());
  std::vector<double> out;
  for (double r : roots) {
    if (!out.empty() && std::abs(r - out.back()) <= 1e-9 * std::max(1.0, std::abs(r)))
      continue;
    out.push_back(r);
  }
  roots.swap(out);
}

}  // namespace detail

/// All real roots of c3 x^3 + c2 x^2 + c1 x + c0, ascending, duplicates
/// merged. Near-zero leading coefficients demote the degree.
inline std::vector<double> cubic_real_roots(double c3, double c2, double c1, double c0) {
  const double scale = std::abs(c3) + std::abs(c2) + std::abs(c1) + std::abs(c0);
  const double tiny = 1e-12 * scale;
  if (std::abs(c3) <= tiny && std::abs(c2) <= tiny && std::abs(c1) <= tiny)
    throw std::invalid_argument("cubic_real_roots: constant polynomial has no root set");

  std::vector<double> roots;
  if (std::abs(c3) <= tiny) {
    if (std::abs(c2) <= tiny) {
      roots.push_back(-c0 / c1);
      return roots;
    }
    const double disc = c1 * c1 - 4.0 * c2 * c0;
    if (disc < -1e-14 * (c1 * c1 + std::abs(4.0 * c2 * c0))) return roots;
    const double sq = std::sqrt(std::max(disc, 0.0));
    const double q = -0.5 * (c1 + std::copysign(sq, c1));
    if (q == 0.0) {
      roots.push_back(0.0);
    } else {
      roots.push_back(q / c2);
      roots.push_back(c0 / q);
    }
    for (double& r : roots) r = detail::newton_polish(0.0, c2, c1, c0, r);
    detail::collapse(roots);
    return roots;
  }

  const double a = c2 / c3, b = c1 / c3, c = c0 / c3;
  const double shift = a / 3.0;
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double half_q = 0.5 * q;
  const double third_p = p / 3.0;
  const double disc = half_q * half_q + third_p * third_p * third_p;
  const double disc_scale = half_q * half_q + std::abs(third_p * third_p * third_p);

  if (disc > 1e-14 * disc_scale) {
    // One real root: numerically stable Cardano.
    const double u = std::cbrt(-half_q - std::copysign(std::sqrt(disc), half_q));
    const double y = (u == 0.0) ? 0.0 : u - third_p / u;
    roots.push_back(y - shift);
  } else if (p >= 0.0 || third_p * third_p * third_p == 0.0) {
    roots.push_back(std::cbrt(-q) - shift);
  } else {
    // Three real roots: trigonometric form, no complex arithmetic.
    const double m = 2.0 * std::sqrt(-third_p);
    const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
    const double theta = std::acos(arg) / 3.0;
    for (int k = 0; k < 3; ++k)
      roots.push_back(m * std::cos(theta - 2.0 * std::numbers::pi * k / 3.0) - shift);
  }
  for (double& r : roots) r = detail::newton_polish(c3, c2, c1, c0, r);
  detail::collapse(roots);
  return roots;
}

/// Global minimiser over the real line of a coercive quartic. Among
/// stationary points of equal value, the one nearest `current` wins.
inline QuarticMin minimize_quartic(const QuarticCoeffs& q, double current) {
  const double scale = std::max({std::abs(q.a4), std::abs(q.a3), std::abs(q.a2),
                                 std::abs(q.a1)});
  const double tiny = 1e-12 * scale;
  if (q.a4 < -tiny) throw NonCoerciveError("minimize_quartic: negative leading coefficient");

  std::vector<double> cand;
  cand.push_back(current);
  if (scale == 0.0) {
    // constant
  } else if (q.a4 > tiny) {
    auto st = cubic_real_roots(4.0 * q.a4, 3.0 * q.a3, 2.0 * q.a2, q.a1);
    cand.insert(cand.end(), st.begin(), st.end());
  } else if (std::abs(q.a3) > tiny) {
    throw NonCoerciveError("minimize_quartic: odd leading term");
  } else if (q.a2 > tiny) {
    cand.push_back(-q.a1 / (2.0 * q.a2));
  } else if (q.a2 < -tiny || std::abs(q.a1) > tiny) {
    throw NonCoerciveError("minimize_quartic: unbounded quadratic or linear restriction");
  }

  QuarticMin best{current, q(current)};
  for (double x : cand) {
    const double v = q(x);
    const double tol = 1e-12 * std::max(1.0, std::abs(best.value));
    if (v < best.value - tol) {
      best = {x, v};
    } else if (std::abs(v - best.value) <= tol &&
               std::abs(x - current) < std::abs(best.argmin - current)) {
      best = {x, std::min(v, best.value)};
    }
  }
  return best;
}

/// argmin of a2 x^2 + a1 x over [lo, hi] for a2 >= 0.
inline double minimize_quadratic_box(double a2, double a1, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("minimize_quadratic_box: empty box");
  if (a2 < 0.0) throw NonCoerciveError("minimize_quadratic_box: concave quadratic");
  if (a2 > 0.0) return std::clamp(-a1 / (2.0 * a2), lo, hi);
  if (a1 < 0.0) return hi;
  return lo;
}

}  // namespace lropf
