#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "nqd/marginals.hpp"
#include "nqd/numeric.hpp"
#include "nqd/quadrature.hpp"
#include "nqd/scaling.hpp"
#include "nqd/series.hpp"

namespace nqd {

// ---------------------------------------------------------------------------
// Condition (a)

template <class F>
concept LogNormalizerFamily = requires(const F& f, double x) {
  { f.log_b(x) } -> std::convertible_to<double>;
  { f.log_b_diff(x, x) } -> std::convertible_to<double>;
};

struct ConditionAResult {
  double ratio_sup = 0.0;
  double weight_inf = 0.0;
  bool b_unbounded = false;
  bool pass = false;
  std::string note;
};

namespace detail {

// sum_{j=m}^{2m-1} 1/j for m = 2^k.
inline double dyadic_harmonic_block(double k) {
  if (k <= 40.0) {
    const double m = std::ldexp(1.0, static_cast<int>(k));
    return boost::math::digamma(2.0 * m) - boost::math::digamma(m);
  }
  const double inv = std::ldexp(1.0, -static_cast<int>(k));
  return 0.69314718055994530942 + 0.25 * inv + inv * inv / 16.0;
}

}  // namespace detail

/// b_{m_{k+1}} / b_{m_k} and sum_{m_k <= j < m_{k+1}} 1/j over k in
/// [k_max/2, k_max], with m_k = 2^k.
template <LogNormalizerFamily F>
ConditionAResult check_condition_a(const F& fam, double k_max = 0x1p50) {
  if (!(k_max >= 10.0) || !std::isfinite(k_max)) throw ValidationError("k_max must be at least 10");
  constexpr double ln2 = 0.69314718055994530942;
  const double k_lo = std::floor(k_max / 2.0);
  std::vector<double> grid;
  constexpr int kPoints = 257;
  for (int i = 0; i < kPoints; ++i) {
    grid.push_back(std::floor(k_lo * std::pow(k_max / k_lo, static_cast<double>(i) / (kPoints - 1))));
  }
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  ConditionAResult res;
  res.weight_inf = kInf;
  for (double k : grid) {
    res.ratio_sup = std::max(res.ratio_sup, std::exp(fam.log_b_diff(k * ln2, ln2)));
    res.weight_inf = std::min(res.weight_inf, detail::dyadic_harmonic_block(k));
  }
  const double r_lo = std::exp(fam.log_b_diff(grid.front() * ln2, ln2));
  const double r_hi = std::exp(fam.log_b_diff(grid.back() * ln2, ln2));
  const bool stable = std::fabs(r_hi - r_lo) <= 1e-3 * res.ratio_sup;
  res.b_unbounded = fam.log_b(grid.back() * ln2) > fam.log_b(grid.front() * ln2) + 1e-9;
  res.pass = std::isfinite(res.ratio_sup) && res.weight_inf > 0.0 && stable && res.b_unbounded;
  if (!res.b_unbounded) {
    res.note = "b_n does not grow over the window; b_n must increase to infinity";
  } else if (!stable) {
    res.note = "ratio not stable across the window";
  }
  return res;
}

// ---------------------------------------------------------------------------
// Summands in log space

namespace detail {

/// ln(e^a - e^b) for a >= b.
inline double log_diff(double a, double b) {
  if (b == -kInf) return a;
  if (!(a > b)) return -kInf;
  return a + std::log(-std::expm1(b - a));
}

inline double ln_log(double log_x) { return std::log(log_floor_from_log(log_x)); }
inline double ln_llog(double log_x) { return std::log(loglog_floor_from_log(log_x)); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Block ratio sequences: Q_k = sum_{l_k < j <= l_{k+1}} e^{num(ln j)} / e^{den(ln l_k)}

struct RatioSeries {
  double s = 1.0 / 3.0;
  std::function<double(double log_j)> log_numerator;
  std::function<double(double log_l)> log_denominator;
};

namespace detail {

inline std::vector<int> ratio_checkpoint_log2(int exact_log2) {
  std::vector<int> out;
  for (int m = 4; m <= exact_log2; ++m) out.push_back(m);
  std::vector<int> far{24};
  for (int v = 32; v <= 8192; v *= 2) {
    far.push_back(v);
    far.push_back(v * 3 / 2);
  }
  for (int v : far) {
    if (v > exact_log2 && v <= 8192) out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ln Q for the block (l_k, l_{k+1}] that contains 2^m.
inline double log_block_ratio(const RatioSeries& ser, int m) {
  const double s = ser.s;
  const double log_n = m * kLn2;
  double log_l0, y0, width;
  std::uint64_t count = 0;
  std::uint64_t l0 = 0;
  if (m <= 60) {
    const std::uint64_t n = std::uint64_t{1} << m;
    std::uint64_t k = phi_s(n, s);
    while (k > 1 && block_l(k, s) >= n) --k;
    while (block_l(k + 1, s) < n) ++k;
    l0 = block_l(k, s);
    const std::uint64_t l1 = block_l(k + 1, s);
    count = l1 - l0;
    log_l0 = std::log(static_cast<double>(l0));
    y0 = std::log(static_cast<double>(l0) + 0.5);
    width = std::log1p(static_cast<double>(count) / (static_cast<double>(l0) + 0.5));
  } else {
    const double k = std::max(1.0, std::ceil(std::pow(log_n, 1.0 / s)) - 1.0);
    const double x0 = std::pow(k, s);
    log_l0 = x0;
    y0 = x0;
    width = x0 * std::expm1(s * std::log1p(1.0 / k));
    count = ~std::uint64_t{0};
  }
  const double den = ser.log_denominator(log_l0);
  if (count <= 1000000) {
    double acc = -kInf;
    for (std::uint64_t j = l0 + 1; j <= l0 + count; ++j) {
      acc = log_add(acc, ser.log_numerator(std::log(static_cast<double>(j))));
    }
    return acc - den;
  }
  // Integral of e^{num(y) + y} over the block in the offset t = y - y0,
  // since the block may be narrower than the spacing of doubles near y0.
  const double shift = ser.log_numerator(y0);
  auto f = [&](double t) { return std::exp(ser.log_numerator(y0 + t) - shift + t); };
  quad::Options qo;
  qo.abs_tol = 0.0;
  qo.rel_tol = 1e-10;
  const auto r = quad::integrate(f, 0.0, width, qo);
  return shift + y0 + std::log(r.value) - den;
}

}  // namespace detail

/// Q at the block containing 2^m along a geometric grid; reports a trend,
/// never a limit. Converged iff the last five values strictly decrease and
/// the fitted slope of ln Q against ln n is negative.
inline SeriesDiagnostic evaluate_ratio_series(const std::string& id, const RatioSeries& ser,
                                              const SeriesOptions& opt = {}) {
  opt.validate();
  SeriesDiagnostic d;
  d.condition_id = id;
  std::vector<double> xs, ys;
  for (int m : detail::ratio_checkpoint_log2(opt.exact_log2)) {
    const double lq = detail::log_block_ratio(ser, m);
    d.checkpoints.push_back({static_cast<double>(m), std::exp(lq)});
    xs.push_back(m * detail::kLn2);
    ys.push_back(lq);
  }
  d.log2_end = d.checkpoints.back().log2_n;
  d.value_estimate = d.checkpoints.back().value;
  d.tail_majorant = std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = xs.size();
  const std::size_t w = std::min<std::size_t>(5, n);
  bool decreasing = w >= 2;
  for (std::size_t i = n - w + 1; i < n; ++i) decreasing = decreasing && ys[i] < ys[i - 1];
  double mx = 0, my = 0;
  for (std::size_t i = n - w; i < n; ++i) {
    mx += xs[i] / w;
    my += ys[i] / w;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = n - w; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = sxy / sxx;
  d.decay_rate = -slope;
  if (decreasing && slope < 0.0) {
    d.verdict = Verdict::Converged;
    d.note = "block ratio decreasing over the last " + std::to_string(w) + " checkpoints";
  } else {
    d.verdict = Verdict::Inconclusive;
    d.note = "block ratio not decreasing at the end of the grid";
  }
  d.note += "; ln ratio at 2^" + format_double(d.log2_end) + " = " + format_double(ys.back());
  return d;
}

// ---------------------------------------------------------------------------
// Conditions (b)-(h), lambda = 1

inline const std::vector<std::string>& theorem1_condition_ids() {
  static const std::vector<std::string> ids{"a", "b", "c", "d", "e", "f", "g", "h"};
  return ids;
}

inline SeriesDiagnostic check_condition(const std::string& id, const Marginal& m, const ScalingFamily& fam,
                                        const SeriesOptions& opt = {}) {
  fam.validate();
  const double r = fam.r;
  auto lc = [fam](double x) { return fam.log_c(x); };
  auto ld = [fam](double x) { return fam.log_d(x); };
  if (id == "a") {
    const auto a = check_condition_a(fam);
    SeriesDiagnostic d;
    d.condition_id = "a";
    d.verdict = a.pass ? Verdict::Converged : Verdict::Inconclusive;
    d.value_estimate = a.ratio_sup;
    d.tail_majorant = 0.0;
    d.decay_rate = a.weight_inf;
    d.note = a.pass ? "ratio_sup=" + format_double(a.ratio_sup) + " weight_inf=" + format_double(a.weight_inf)
                    : a.note;
    return d;
  }
  if (id == "b") {
    if (!std::isfinite(m.mean())) throw ValidationError("condition (b) needs a finite mean");
    RatioSeries rs;
    rs.s = fam.s;
    rs.log_numerator = [m, lc](double lj) { return m.log_upper_mean_at(lc(lj)); };
    rs.log_denominator = [fam](double ll) { return fam.log_b(ll); };
    return evaluate_ratio_series("b", rs, opt);
  }
  if (id == "c" || id == "d" || id == "e") {
    PrefixSeries ps;
    if (id == "c" || id == "d") {
      ps.log_weight = [fam, r](double ln, double lam) { return -ln + r * std::log(lam) - r * fam.log_b(ln); };
    } else {
      if (!std::isfinite(m.mean())) throw ValidationError("condition (e) needs a finite mean");
      ps.log_weight = [fam](double ln, double) { return -ln - fam.log_b(ln); };
    }
    if (id == "c") {
      ps.log_inner = [m, lc, r](double lk) { return m.log_truncated_moment_at(r, lc(lk)); };
    } else if (id == "d") {
      ps.log_inner = [m, lc, r](double lk) { return r * lc(lk) + m.log_tail_at(lc(lk)); };
    } else {
      ps.log_inner = [m, ld](double lk) { return m.log_upper_mean_at(ld(lk)); };
    }
    return evaluate_prefix_series(id, ps, opt);
  }
  if (id == "f" || id == "g" || id == "h") {
    BlockSeries bs;
    bs.s = fam.s;
    bs.lambda_in_weight = true;
    bs.log_weight = [fam, r](double ll, double, double q) {
      return r * std::log(std::floor(std::log2(q + 2.0)) + 1.0) - r * fam.log_b(ll);
    };
    if (id == "f") {
      bs.log_inner = [m, lc, ld, r](double li) {
        return detail::log_diff(m.log_truncated_moment_at(r, ld(li)), m.log_truncated_moment_at(r, lc(li)));
      };
    } else if (id == "g") {
      bs.log_inner = [m, lc, r](double li) { return r * lc(li) + m.log_tail_at(lc(li)); };
    } else {
      bs.log_inner = [m, ld, r](double li) { return r * ld(li) + m.log_tail_at(ld(li)); };
    }
    return evaluate_block_series(id, bs, opt);
  }
  throw ValidationError("unknown condition id '" + id + "' (expected a-h)");
}

// ---------------------------------------------------------------------------
// Prefix and block sums with phi = identity on the dominating variable

inline void check_pr(double p, double r) {
  if (!(p > 0.0 && p < 2.0)) throw ValidationError("p must lie in (0, 2)");
  if (!(r > p)) throw ValidationError("r must exceed p");
}

/// which: "moment" (truncated r-th moment above theta_k), "tail"
/// (scaled tail at theta_k) or "upper_mean" (mean excess above the
/// LLog threshold).
inline SeriesDiagnostic lemma2_series(const std::string& which, const Marginal& m, double p, double r,
                                      const SeriesOptions& opt = {}) {
  check_pr(p, r);
  using detail::ln_llog;
  using detail::ln_log;
  PrefixSeries ps;
  if (which == "moment" || which == "tail") {
    ps.log_weight = [p, r](double ln, double) { return r * ln_log(ln) - (r / p + 1.0) * ln; };
    auto theta = [p, r](double lk) { return lk / p - r / (r - p) * ln_log(lk); };
    if (which == "moment") {
      ps.log_inner = [m, r, theta](double lk) { return m.log_truncated_moment_at(r, theta(lk)); };
    } else {
      ps.log_inner = [m, p, r, theta](double lk) {
        return r / p * lk - r * r / (r - p) * ln_log(lk) + m.log_tail_at(theta(lk));
      };
    }
  } else if (which == "upper_mean") {
    if (!(p > 1.0)) throw ValidationError("upper_mean sum needs p > 1");
    if (!std::isfinite(m.mean())) throw ValidationError("upper_mean sum needs a finite mean");
    const double e = r * (p - 1.0) / (p * (r - 1.0));
    ps.log_weight = [p, e](double ln, double) { return -(1.0 / p + 1.0) * ln - e * ln_llog(ln); };
    ps.log_inner = [m, p, r](double lk) {
      return m.log_upper_mean_at(lk / p - r / (p * (r - 1.0)) * ln_llog(lk));
    };
  } else {
    throw ValidationError("unknown prefix sum '" + which + "' (expected moment, tail or upper_mean)");
  }
  return evaluate_prefix_series(which, ps, opt);
}

/// which: "block_moment", "block_tail_log" (Log threshold), "block_tail_llog"
/// (LLog threshold) or "block_ratio" (mean excess over the block normalizer).
inline SeriesDiagnostic lemma4_series(const std::string& which, const Marginal& m, double p, double r, double s,
                                      const SeriesOptions& opt = {}) {
  if (!(p > 1.0 && p < 2.0)) throw ValidationError("p must lie in (1, 2)");
  if (!(r > p)) throw ValidationError("r must exceed p");
  if (!(s > 0.0 && s < 1.0)) throw ValidationError("s must lie in (0, 1)");
  using detail::ln_llog;
  using detail::ln_log;
  const double ell_exp = r * r * (p - 1.0) / (p * (r - 1.0));
  if (which == "block_ratio") {
    const double s_max = (r - p) / (p * (r - 1.0));
    if (s > s_max + 1e-12) {
      throw ValidationError("block_ratio needs s <= (r-p)/[p(r-1)] = " + format_double(s_max));
    }
    if (!std::isfinite(m.mean())) throw ValidationError("block_ratio needs a finite mean");
    RatioSeries rs;
    rs.s = s;
    rs.log_numerator = [m, p, r](double lj) { return m.log_upper_mean_at(lj / p - r / (r - p) * ln_log(lj)); };
    rs.log_denominator = [p, r](double ll) { return ll / p + r * (p - 1.0) / (p * (r - 1.0)) * ln_llog(ll); };
    return evaluate_ratio_series(which, rs, opt);
  }
  BlockSeries bs;
  bs.s = s;
  bs.log_weight = [p, r, ell_exp](double ll, double k, double) {
    return r * ln_log(std::log(k)) - r / p * ll - ell_exp * ln_llog(ll);
  };
  if (which == "block_moment") {
    bs.log_inner = [m, p, r](double ln) {
      return m.log_truncated_moment_at(r, ln / p - r / (p * (r - 1.0)) * ln_llog(ln));
    };
  } else if (which == "block_tail_log") {
    bs.log_inner = [m, p, r](double ln) {
      return r / p * ln - r * r / (r - p) * ln_log(ln) + m.log_tail_at(ln / p - r / (r - p) * ln_log(ln));
    };
  } else if (which == "block_tail_llog") {
    bs.log_inner = [m, p, r](double ln) {
      return r / p * ln - r * r / (p * (r - 1.0)) * ln_llog(ln) +
             m.log_tail_at(ln / p - r / (p * (r - 1.0)) * ln_llog(ln));
    };
  } else {
    throw ValidationError("unknown block sum '" + which + "' (expected block_moment, block_tail_log, block_tail_llog or block_ratio)");
  }
  return evaluate_block_series(which, bs, opt);
}

// ---------------------------------------------------------------------------
// Exponential-tail integral

struct QuadratureSpec {
  double a = 1.0;
  double b = 1.0;
  double r = 0.0;
  double x = 0.0;
  double abs_tol = 1e-13;
  double rel_tol = 1e-10;

  void validate() const {
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
      throw ValidationError("integral needs a > 0 and b > 0");
    }
    if (!(x >= 0.0) || !std::isfinite(x) || !std::isfinite(r)) throw ValidationError("integral needs finite r and x >= 0");
    if (!(abs_tol >= 0.0) || !(rel_tol >= 0.0) || (abs_tol == 0.0 && rel_tol == 0.0)) {
      throw ValidationError("integral tolerances must be nonnegative and not both zero");
    }
  }
};

struct TailIntegralResult {
  double value = 0.0;        // int_x^inf u^{a-1} Log^r u e^{-b u^a} du
  double scaled_value = 0.0;  // value * e^{b x^a}
  double bound_ratio = 0.0;   // value / ((1 + Log^r x) e^{-b x^a})
  double abs_error = 0.0;
};

inline TailIntegralResult lemma3_integral(const QuadratureSpec& q) {
  q.validate();
  const double xa = std::pow(q.x, q.a);
  // v = u^a, t = v - x^a: (1/a) int_0^inf Log^r((t + x^a)^{1/a}) e^{-b t} dt.
  auto f = [&](double t) {
    const double v = t + xa;
    const double lg = v > 0.0 ? std::max(std::log(v) / q.a, 1.0) : 1.0;
    return std::pow(lg, q.r) * std::exp(-q.b * t) / q.a;
  };
  quad::Options qo;
  qo.abs_tol = q.abs_tol;
  qo.rel_tol = q.rel_tol;
  const double t_kink = std::exp(q.a) - xa;  // Log switches branch at u = e
  TailIntegralResult res;
  if (t_kink > 0.0) {
    const auto lo = quad::integrate(f, 0.0, t_kink, qo);
    const auto hi = quad::integrate_to_infinity(f, t_kink, qo);
    res.scaled_value = lo.value + hi.value;
    res.abs_error = lo.abs_error + hi.abs_error;
  } else {
    const auto all = quad::integrate_to_infinity(f, 0.0, qo);
    res.scaled_value = all.value;
    res.abs_error = all.abs_error;
  }
  res.value = res.scaled_value * std::exp(-q.b * xa);
  res.abs_error *= std::exp(-q.b * xa);
  res.bound_ratio = res.scaled_value / (1.0 + std::pow(log_floor(q.x), q.r));
  return res;
}

// ---------------------------------------------------------------------------
// Interchange of summation on finite rectangles

struct InterchangeResult {
  double n_then_k = 0.0;
  double k_then_n = 0.0;
};

/// sum_{n<=N} w_n sum_{k<=n} u_k computed both ways: outer n with a running
/// inner prefix, and outer k with a precomputed suffix of weights.
inline InterchangeResult interchange_check(const std::function<double(std::uint64_t)>& w,
                                           const std::function<double(std::uint64_t)>& u, std::uint64_t n_max) {
  if (n_max == 0) throw ValidationError("interchange rectangle needs n_max >= 1");
  InterchangeResult res;
  CompensatedSum outer, inner;
  for (std::uint64_t n = 1; n <= n_max; ++n) {
    inner.add(u(n));
    outer.add(w(n) * inner.value());
  }
  res.n_then_k = outer.value();
  std::vector<double> suffix(n_max + 2, 0.0);
  CompensatedSum tail;
  for (std::uint64_t n = n_max; n >= 1; --n) {
    tail.add(w(n));
    suffix[n] = tail.value();
  }
  CompensatedSum swapped;
  for (std::uint64_t k = 1; k <= n_max; ++k) swapped.add(u(k) * suffix[k]);
  res.k_then_n = swapped.value();
  return res;
}

// ---------------------------------------------------------------------------
// Lambda_n <= log(2n) audit

struct LambdaAudit {
  std::uint64_t n_max = 0;
  bool base2_holds = false;
  std::uint64_t base2_first_violation = 0;
  bool base_e_holds = false;
  std::uint64_t base_e_first_violation = 0;
};

inline LambdaAudit lambda_audit(std::uint64_t n_max) {
  if (n_max == 0) throw ValidationError("audit needs n_max >= 1");
  const LambdaTable lam(MomentInequalityProfile::unit());
  LambdaAudit a;
  a.n_max = n_max;
  for (std::uint64_t n = 1; n <= n_max; ++n) {
    const double v = lam(n);
    const double twice = 2.0 * static_cast<double>(n);
    if (a.base2_first_violation == 0 && v > std::log2(twice) + 1e-12) a.base2_first_violation = n;
    if (a.base_e_first_violation == 0 && v > std::log(twice) + 1e-12) a.base_e_first_violation = n;
  }
  a.base2_holds = a.base2_first_violation == 0;
  a.base_e_holds = a.base_e_first_violation == 0;
  return a;
}

// ---------------------------------------------------------------------------
// Report rows

/// condition,verdict,estimate,tail_majorant,checkpoints with checkpoints
/// written as 2^m=value pairs separated by ';'.
inline std::string diagnostics_csv(const std::vector<SeriesDiagnostic>& rows) {
  std::ostringstream os;
  os << "condition,verdict,estimate,tail_majorant,checkpoints\n";
  for (const auto& d : rows) {
    os << d.condition_id << ',' << to_string(d.verdict) << ',' << format_double(d.value_estimate) << ','
       << format_double(d.tail_majorant) << ',';
    for (std::size_t i = 0; i < d.checkpoints.size(); ++i) {
      os << (i ? ";" : "") << "2^" << format_double(d.checkpoints[i].log2_n) << '=' << format_double(d.checkpoints[i].value);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace nqd
