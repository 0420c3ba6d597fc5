#pragma once

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>
#include <vector>

#include "nqd/numeric.hpp"

namespace nqd::quad {

struct Result {
  double value = 0.0;
  double abs_error = 0.0;
  int intervals = 0;
};

struct Options {
  double abs_tol = 1e-14;
  double rel_tol = 1e-12;
  int max_intervals = 2000;
};

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
inline constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kWg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a, b, value, error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment kronrod15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double f1 = f(center - dx);
    const double f2 = f(center + dx);
    kronrod += kWgk[j] * (f1 + f2);
    if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
  }
  const double value = kronrod * half;
  double err = std::fabs((kronrod - gauss) * half);
  if (!std::isfinite(value)) err = kInf;
  return {a, b, value, err};
}

}  // namespace detail

/// Adaptive Gauss-Kronrod integration of f over [a, b]. Bisects the segment
/// with the largest error estimate until the tolerance is met; throws
/// NumericError when the interval budget runs out.
template <class F>
Result integrate(F f, double a, double b, const Options& opt = {}) {
  if (a == b) return {};
  std::priority_queue<detail::Segment> heap;
  heap.push(detail::kronrod15(f, a, b));
  double total = heap.top().value;
  double error = heap.top().error;
  int count = 1;
  while (error > std::max(opt.abs_tol, opt.rel_tol * std::fabs(total))) {
    if (count >= opt.max_intervals) {
      throw NumericError("quadrature tolerance not reached within " +
                         std::to_string(opt.max_intervals) +
                         " subintervals (error estimate " +
                         format_double(error) + ")");
    }
    const detail::Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    const auto left = detail::kronrod15(f, worst.a, mid);
    const auto right = detail::kronrod15(f, mid, worst.b);
    heap.push(left);
    heap.push(right);
    ++count;
    total = 0.0;
    error = 0.0;
    CompensatedSum tv;
    auto copy = heap;
    while (!copy.empty()) {
      tv.add(copy.top().value);
      error += copy.top().error;
      copy.pop();
    }
    total = tv.value();
  }
  return {total, error, count};
}

/// Integral over [a, inf) via the map x = a + t / (1 - t), t in [0, 1).
template <class F>
Result integrate_to_infinity(F f, double a, const Options& opt = {}) {
  auto g = [&](double t) {
    if (t >= 1.0) return 0.0;
    const double w = 1.0 - t;
    const double v = f(a + t / w) / (w * w);
    return std::isfinite(v) ? v : 0.0;
  };
  return integrate(g, 0.0, 1.0, opt);
}

}  // namespace nqd::quad
