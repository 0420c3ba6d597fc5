#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nqd/numeric.hpp"
#include "nqd/scaling.hpp"

namespace nqd {

enum class Verdict { Converged, Diverged, Inconclusive };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Converged: return "converged";
    case Verdict::Diverged: return "diverged";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

/// Partial sum (or ratio) at outer index n = 2^log2_n.
struct Checkpoint {
  double log2_n;
  double value;
};

struct SeriesDiagnostic {
  std::string condition_id;
  Verdict verdict = Verdict::Inconclusive;
  double value_estimate = 0.0;
  double tail_majorant = kInf;
  std::vector<Checkpoint> checkpoints;
  /// Local decay rate of the summand in ln n at the end of the run
  /// (n * t(n) ~ e^{-rate ln n}); for ratio conditions, the fitted slope of
  /// ln ratio against ln n over the last five checkpoints.
  double decay_rate = std::numeric_limits<double>::quiet_NaN();
  double log2_end = 0.0;
  std::string note;
};

struct SeriesOptions {
  int exact_log2 = 20;
  int first_checkpoint_log2 = 4;
  double tolerance = 1e-3;
  double step = 0.69314718055994531 / 8.0;
  double y_max = 20000.0;
  double block_rho_switch = 1e-5;
  std::uint64_t block_step_cap = 4000000;

  void validate() const {
    if (exact_log2 < 4 || exact_log2 > 30) throw ValidationError("exact_log2 must lie in [4, 30]");
    if (!(tolerance > 0.0 && tolerance < 1.0)) throw ValidationError("tolerance must lie in (0, 1)");
    if (!(step > 0.0 && step <= 1.0)) throw ValidationError("step must lie in (0, 1]");
    if (!(y_max > 100.0)) throw ValidationError("y_max must exceed 100");
  }
};

/// sum_n w_n sum_{k<=n} u_k. The weight receives ln n and Lambda_n (lambda = 1).
struct PrefixSeries {
  std::function<double(double log_n, double lambda_cap)> log_weight;
  std::function<double(double log_k)> log_inner;
};

/// sum_k W_k H_k sum_{i <= l_{k+1}} u_i with H_k = sum_{l_k < j <= l_{k+1}} 1/j.
/// The weight receives ln l_k, the original block index k and the
/// deduplicated index q (0 for the first distinct value).
struct BlockSeries {
  double s = 1.0 / 3.0;
  std::function<double(double log_l, double k, double q)> log_weight;
  std::function<double(double log_i)> log_inner;
  /// The weight jumps where floor(log2(q + 2)) changes.
  bool lambda_in_weight = false;
};

namespace detail {

inline constexpr double kLn2 = 0.69314718055994530942;

// log of (h/6)(e^a + 4 e^b + e^c)
inline double log_simpson(double h, double a, double b, double c) {
  const double m = std::max({a, b, c});
  if (m == -kInf || !std::isfinite(m)) return m;
  return m + std::log(h / 6.0 * (std::exp(a - m) + 4.0 * std::exp(b - m) + std::exp(c - m)));
}

// log of the integral over the first half step of the quadratic through
// the three nodes: (h/24)(5 e^a + 8 e^b - e^c).
inline double log_simpson_half(double h, double a, double b, double c) {
  const double m = std::max({a, b, c});
  if (m == -kInf || !std::isfinite(m)) return m;
  const double v = 5.0 * std::exp(a - m) + 8.0 * std::exp(b - m) - std::exp(c - m);
  if (v > 0.0) return m + std::log(h / 24.0 * v);
  return m + std::log(h / 4.0 * (std::exp(a - m) + std::exp(b - m)));
}

struct FarState {
  double y = 0.0;
  double log_inner_sum = -kInf;  // ln I
  double log_sum = -kInf;        // ln of the far contribution
  double allowance = 0.0;        // discretization allowances (linear)
};

struct DecayPoint {
  double y;
  double g;  // ln of the outer integrand per unit y
};

struct FarRun {
  FarState state;
  std::vector<Checkpoint> far_points;  // log of far contribution at checkpoints
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double tail = kInf;
  bool stopped_converged = false;
  bool nondecreasing_tail = false;
  bool overflow = false;
};

// Checkpoints beyond the exact range: 2^16, 2^24, 2^32, 2^48, ...
inline std::vector<double> far_checkpoint_log2(int exact_log2, double y_max) {
  std::vector<double> out;
  for (double v = 16; v * kLn2 <= y_max; v *= 2) {
    out.push_back(v);
    if (v * 1.5 * kLn2 <= y_max) out.push_back(v * 1.5);
  }
  out.erase(std::remove_if(out.begin(), out.end(), [&](double v) { return v <= exact_log2; }), out.end());
  std::sort(out.begin(), out.end());
  return out;
}

// Stop test shared by both far modes. Returns true when the tail beyond the
// current point is negligible.
class DecayMonitor {
 public:
  DecayMonitor(double y_start, double tolerance) : y_start_(y_start), tol_(tolerance) {}

  void push(double y, double g) { hist_.push_back({y, g}); }

  // kappa from the history point closest to `lag` units back.
  [[nodiscard]] double kappa(double lag) const {
    if (hist_.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const auto& last = hist_.back();
    if (last.g == -kInf) return kInf;
    for (auto it = hist_.rbegin(); it != hist_.rend(); ++it) {
      if (last.y - it->y >= lag) return -(last.g - it->g) / (last.y - it->y);
    }
    return std::numeric_limits<double>::quiet_NaN();
  }

  [[nodiscard]] double kappa_at_lag(double lag, double back) const {
    // kappa measured over [y_last - back - lag, y_last - back]
    if (hist_.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double target_end = hist_.back().y - back;
    const DecayPoint* end = nullptr;
    for (auto it = hist_.rbegin(); it != hist_.rend(); ++it) {
      if (it->y <= target_end) {
        end = &*it;
        break;
      }
    }
    if (!end) return std::numeric_limits<double>::quiet_NaN();
    if (end->g == -kInf) return kInf;
    for (auto it = hist_.rbegin(); it != hist_.rend(); ++it) {
      if (end->y - it->y >= lag) return -(end->g - it->g) / (end->y - it->y);
    }
    return std::numeric_limits<double>::quiet_NaN();
  }

  // Envelope tail: with ln g locally linear of slope -kappa, the remainder
  // is g / kappa; the factor 2 absorbs slowly varying corrections.
  [[nodiscard]] double tail_bound() const {
    const double k = kappa(10.0);
    if (!(k > 0.0)) return kInf;
    if (hist_.back().g == -kInf) return 0.0;
    return 2.0 * std::exp(hist_.back().g) / k;
  }

  [[nodiscard]] bool negligible(double log_total) const {
    if (hist_.empty() || hist_.back().y < y_start_ + 20.0) return false;
    const double k_now = kappa(10.0);
    const double k_before = kappa_at_lag(10.0, 10.0);
    if (!(k_now > 0.0) || !(k_before > 0.0) || k_now < 0.5 * k_before) return false;
    const double t = tail_bound();
    if (t == 0.0) return true;
    return std::log(t) < std::log(1e-2 * tol_) + log_total;
  }

  // g nondecreasing over the second half of the run.
  [[nodiscard]] bool nondecreasing_since(double y_from) const {
    double prev = -kInf;
    bool any = false;
    for (const auto& pnt : hist_) {
      if (pnt.y < y_from) continue;
      if (pnt.g < prev - 1e-12 * std::fabs(prev)) return false;
      prev = pnt.g;
      any = true;
    }
    return any;
  }

  [[nodiscard]] const std::vector<DecayPoint>& history() const noexcept { return hist_; }

 private:
  double y_start_;
  double tol_;
  std::vector<DecayPoint> hist_;
};

// Advances ln I from y0 to y1 by Simpson panels no wider than h.
template <class Inner>
double advance_inner(double log_i, double y0, double y1, double h, Inner&& inner) {
  if (!(y1 > y0)) return log_i;
  const auto panels = static_cast<int>(std::ceil((y1 - y0) / h));
  const double hh = (y1 - y0) / panels;
  double a0 = inner(y0);
  for (int i = 0; i < panels; ++i) {
    const double ya = y0 + i * hh;
    const double am = inner(ya + 0.5 * hh);
    const double a1 = inner(ya + hh);
    log_i = log_add(log_i, log_simpson(hh, a0, am, a1));
    a0 = a1;
  }
  return log_i;
}

// One Simpson step of the coupled system dI/dy = e^{inner}, dS/dy = e^{outer(y, ln I)}.
template <class Inner, class Outer>
double far_step(FarState& st, double hh, Inner&& inner, Outer&& outer) {
  const double y0 = st.y, ym = y0 + 0.5 * hh, y1 = y0 + hh;
  const double a0 = inner(y0), am = inner(ym), a1 = inner(y1);
  const double l0 = st.log_inner_sum;
  const double lm = log_add(l0, log_simpson_half(hh, a0, am, a1));
  const double l1 = log_add(l0, log_simpson(hh, a0, am, a1));
  const double g0 = outer(y0, l0), gm = outer(ym, lm), g1 = outer(y1, l1);
  st.log_sum = log_add(st.log_sum, log_simpson(hh, g0, gm, g1));
  st.log_inner_sum = l1;
  st.y = y1;
  return g1;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Prefix (n-indexed) double series

namespace detail {

inline FarRun run_prefix_far(const PrefixSeries& ser, const SeriesOptions& opt, double log_i0, double y0,
                             double h, std::optional<double> y_stop, double log_exact_total) {
  FarRun run;
  run.state.y = y0;
  run.state.log_inner_sum = log_i0;
  const auto cps = far_checkpoint_log2(opt.exact_log2, opt.y_max);
  std::size_t next_cp = 0;
  DecayMonitor mon(y0, opt.tolerance);
  auto inner = [&](double y) { return y + ser.log_inner(y); };
  int m = opt.exact_log2;  // current dyadic interval (2^m, 2^{m+1}]
  const double y_end = y_stop.value_or(opt.y_max);
  while (run.state.y < y_end - 1e-12) {
    const double lam = m + 1;
    auto outer = [&](double y, double log_i) { return y + ser.log_weight(y, lam) + log_i; };
    const double piece_end = std::min((m + 1) * kLn2, y_end);
    // Monotone summand: one term per piece bounds the sum/integral gap.
    const double g_start = outer(run.state.y, run.state.log_inner_sum);
    run.state.allowance += std::exp(g_start - run.state.y);
    const auto steps = std::max(1, static_cast<int>(std::ceil((piece_end - run.state.y) / h)));
    const double hh = (piece_end - run.state.y) / steps;
    double g = g_start;
    for (int i = 0; i < steps; ++i) g = far_step(run.state, hh, inner, outer);
    if (!std::isfinite(run.state.log_sum) && run.state.log_sum > 0) {
      run.overflow = true;
      break;
    }
    mon.push(run.state.y, g);
    while (next_cp < cps.size() && cps[next_cp] * kLn2 <= run.state.y + 1e-9) {
      run.far_points.push_back({cps[next_cp], run.state.log_sum});
      ++next_cp;
    }
    ++m;
    if (!y_stop && mon.negligible(log_add(log_exact_total, run.state.log_sum))) {
      run.stopped_converged = true;
      break;
    }
  }
  run.kappa = mon.kappa(10.0);
  run.tail = mon.tail_bound();
  run.nondecreasing_tail = mon.nondecreasing_since(0.5 * (y0 + run.state.y));
  return run;
}

inline SeriesDiagnostic finish(std::string id, const SeriesOptions& opt, double exact_total,
                               std::vector<Checkpoint> cps, const FarRun& coarse, const FarRun& fine,
                               double far_relative_allowance) {
  SeriesDiagnostic d;
  d.condition_id = std::move(id);
  d.checkpoints = std::move(cps);
  const double s_far_coarse = std::exp(coarse.state.log_sum);
  const double s_far = std::exp(fine.state.log_sum);
  for (const auto& fp : fine.far_points) d.checkpoints.push_back({fp.log2_n, exact_total + std::exp(fp.value)});
  const double total = exact_total + s_far;
  d.value_estimate = total;
  d.decay_rate = fine.kappa;
  d.log2_end = fine.state.y / kLn2;
  const double quad_err = std::fabs(s_far - s_far_coarse);
  const double majorant =
      fine.tail + quad_err + fine.state.allowance + far_relative_allowance * s_far;
  d.tail_majorant = majorant;
  if (fine.overflow || !std::isfinite(total)) {
    d.verdict = fine.nondecreasing_tail ? Verdict::Diverged : Verdict::Inconclusive;
    d.value_estimate = kInf;
    d.tail_majorant = kInf;
    d.note = "partial sums exceed double range by ln n = " + format_double(fine.state.y);
    return d;
  }
  if (total == 0.0 && majorant == 0.0) {
    d.verdict = Verdict::Converged;
    d.note = "all terms vanish";
    return d;
  }
  if (std::isfinite(majorant) && majorant < opt.tolerance * total) {
    d.verdict = Verdict::Converged;
  } else if (!(fine.kappa > 0.0) && fine.nondecreasing_tail && fine.state.y >= opt.y_max - 1e-9) {
    d.verdict = Verdict::Diverged;
    d.note = "n t(n) nondecreasing up to ln n = " + format_double(fine.state.y) + "; minorant c/n diverges";
  } else {
    d.verdict = Verdict::Inconclusive;
    d.note = "tail majorant not below tolerance";
  }
  return d;
}

}  // namespace detail

inline SeriesDiagnostic evaluate_prefix_series(const std::string& id, const PrefixSeries& ser,
                                               const SeriesOptions& opt = {}) {
  opt.validate();
  const std::uint64_t n0 = std::uint64_t{1} << opt.exact_log2;
  CompensatedSum inner_sum, total;
  std::vector<Checkpoint> cps;
  bool bad = false;
  for (std::uint64_t n = 1; n <= n0; ++n) {
    const double ln = std::log(static_cast<double>(n));
    inner_sum.add(std::exp(ser.log_inner(ln)));
    const double t = std::exp(ser.log_weight(ln, static_cast<double>(std::bit_width(n)))) * inner_sum.value();
    if (!std::isfinite(t)) {
      bad = true;
      break;
    }
    total.add(t);
    if (std::has_single_bit(n) && std::countr_zero(n) >= opt.first_checkpoint_log2) {
      cps.push_back({static_cast<double>(std::countr_zero(n)), total.value()});
    }
  }
  if (bad || !std::isfinite(total.value())) {
    SeriesDiagnostic d;
    d.condition_id = id;
    d.checkpoints = cps;
    d.value_estimate = kInf;
    d.note = "overflow in exact partial sums";
    return d;
  }
  const double log_i0 = inner_sum.value() > 0 ? std::log(inner_sum.value()) : -kInf;
  const double y0 = std::log(static_cast<double>(n0) + 0.5);
  const double log_exact = total.value() > 0 ? std::log(total.value()) : -kInf;
  const auto coarse = detail::run_prefix_far(ser, opt, log_i0, y0, opt.step, std::nullopt, log_exact);
  const auto fine = detail::run_prefix_far(ser, opt, log_i0, y0, 0.5 * opt.step, coarse.state.y, log_exact);
  return detail::finish(id, opt, total.value(), std::move(cps), coarse, fine, 4.0 / static_cast<double>(n0));
}

// ---------------------------------------------------------------------------
// Block-indexed triple series

namespace detail {

// Number of distinct l values up to continuous block index k, anchored at
// (k_c, q_c). While l_k grows by less than one per unit k, every integer
// is a new value; afterwards every k is.
struct DedupMap {
  double s = 0.5;
  double k_c = 1, x_c = 0, q_c = 0;
  double k_star = 1, q_star = 0;
  bool dup = false;

  DedupMap(double s_, double k_c_, double q_c_) : s(s_), k_c(k_c_), x_c(std::pow(k_c_, s_)), q_c(q_c_) {
    auto f = [&](double x) { return std::log(s) + (s - 1.0) / s * std::log(x) + x; };
    dup = f(x_c) < 0.0;
    if (!dup) {
      k_star = k_c;
      q_star = q_c;
      return;
    }
    double lo = x_c, hi = x_c + 1.0;
    while (f(hi) < 0.0) hi = x_c + 2.0 * (hi - x_c);
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (f(mid) < 0.0 ? lo : hi) = mid;
    }
    k_star = std::pow(hi, 1.0 / s);
    q_star = q_c + std::exp(x_c) * std::expm1(hi - x_c);
  }

  [[nodiscard]] double q(double k) const {
    if (dup && k <= k_star) return q_c + std::exp(x_c) * std::expm1(std::pow(k, s) - x_c);
    return q_star + (k - k_star);
  }

  // x = k^s at which q reaches `target`.
  [[nodiscard]] double x_at(double target) const {
    if (dup && target <= q_star) return x_c + std::log1p((target - q_c) * std::exp(-x_c));
    return std::pow(k_star + (target - q_star), s);
  }
};

struct BlockFarContext {
  const BlockSeries* ser;
  const SeriesOptions* opt;
  double h;
  std::optional<double> y_stop;
  double log_exact_total;
};

inline FarRun run_block_far(const BlockFarContext& cx, double k_start, double q_start, double log_i0, double y0) {
  const auto& ser = *cx.ser;
  const auto& opt = *cx.opt;
  const double s = ser.s;
  FarRun run;
  run.state.y = y0;
  run.state.log_inner_sum = log_i0;
  const auto cps = far_checkpoint_log2(opt.exact_log2, opt.y_max);
  std::size_t next_cp = 0;
  DecayMonitor mon(y0, opt.tolerance);
  const double y_end = cx.y_stop.value_or(opt.y_max);
  auto inner = [&](double y) { return y + ser.log_inner(y); };
  auto mark_checkpoints = [&]() {
    while (next_cp < cps.size() && cps[next_cp] * kLn2 <= run.state.y + 1e-9) {
      run.far_points.push_back({cps[next_cp], run.state.log_sum});
      ++next_cp;
    }
  };
  auto record = [&](double g) {
    mon.push(run.state.y, g);
    mark_checkpoints();
  };
  auto should_stop = [&]() {
    return !cx.y_stop && mon.negligible(log_add(cx.log_exact_total, run.state.log_sum));
  };

  // Phase B: one block at a time while blocks are relatively wide.
  double k = k_start, q = q_start;
  std::uint64_t count = 0;
  double next_mark = std::floor(run.state.y) + 1.0;
  bool done = false;
  auto exact_l = [&](double kk) -> std::optional<double> {
    const double v = std::exp(std::pow(kk, s));
    if (v < kMaxBlockValue) return std::floor(v);
    return std::nullopt;
  };
  while (true) {
    const double x0 = std::pow(k, s);
    const double rho = x0 * std::expm1(s * std::log1p(1.0 / k));
    const auto l0 = exact_l(k);
    const bool dup_regime = rho * std::exp(x0) < 2.0;
    if (rho < opt.block_rho_switch || dup_regime || count >= opt.block_step_cap) break;
    const auto l1 = exact_l(k + 1.0);
    double log_l0, y1, h_block;
    if (l0 && l1) {
      log_l0 = std::log(*l0);
      y1 = std::log(*l1 + 0.5);
      h_block = std::log((*l1 + 0.5) / (*l0 + 0.5));
    } else {
      log_l0 = x0;
      y1 = x0 + rho;
      h_block = rho;
    }
    if (y1 > y_end + 1e-12) {
      done = true;
      break;
    }
    const double l_next = advance_inner(run.state.log_inner_sum, run.state.y, y1, cx.h, inner);
    const double lw = ser.log_weight(log_l0, k, q);
    run.state.log_sum = log_add(run.state.log_sum, lw + std::log(h_block) + l_next);
    run.state.log_inner_sum = l_next;
    run.state.y = y1;
    k += 1.0;
    q += 1.0;
    ++count;
    mark_checkpoints();
    if (run.state.y >= next_mark) {
      next_mark = std::floor(run.state.y) + 1.0;
      record(lw + l_next);
      if (should_stop()) {
        run.stopped_converged = true;
        done = true;
        break;
      }
    }
  }

  // Phase C: continuous in y = k^s.
  if (!done) {
    const DedupMap dm(s, k, q);
    const double y_c = std::pow(k, s);
    run.state.y = y_c;
    auto k_of = [&](double y) { return std::pow(y, 1.0 / s); };
    auto outer = [&](double y, double log_i) {
      const double kk = k_of(y);
      const double hb = y * std::expm1(s * std::log1p(1.0 / kk));
      const double a_lo = inner(y), a_hi = inner(y + hb);
      const double bump = std::max(a_lo, a_hi) + std::log(hb * 0.5 * (std::exp(a_lo - std::max(a_lo, a_hi)) +
                                                                       std::exp(a_hi - std::max(a_lo, a_hi))));
      const double log_end = log_add(log_i, bump);
      const double dkdy = kk / (s * y);
      return ser.log_weight(y, kk, dm.q(kk)) + std::log(hb * dkdy) + log_end;
    };
    auto per_block = [&](double y) {
      const double kk = k_of(y);
      return std::exp(outer(y, run.state.log_inner_sum)) / (kk / (s * y));
    };
    // Piece ends: unit spacing plus the points where Lambda jumps.
    std::vector<double> breaks;
    if (ser.lambda_in_weight) {
      for (int m = 1; m < 1000; ++m) {
        const double target = std::ldexp(1.0, m) - 2.0;
        if (target <= q) continue;
        const double xb = dm.x_at(target);
        if (xb > y_end) break;
        if (xb > y_c) breaks.push_back(xb);
      }
    }
    std::size_t next_break = 0;
    run.state.allowance += per_block(run.state.y);
    double g = outer(run.state.y, run.state.log_inner_sum);
    while (run.state.y < y_end - 1e-12) {
      double piece_end = std::min(std::floor(run.state.y) + 1.0, y_end);
      bool at_break = false;
      if (next_break < breaks.size() && breaks[next_break] <= piece_end) {
        piece_end = breaks[next_break++];
        at_break = true;
      }
      if (next_cp < cps.size() && cps[next_cp] * kLn2 > run.state.y && cps[next_cp] * kLn2 < piece_end) {
        piece_end = cps[next_cp] * kLn2;
        if (at_break) --next_break;
        at_break = false;
      }
      if (piece_end > run.state.y) {
        const auto steps = std::max(1, static_cast<int>(std::ceil((piece_end - run.state.y) / cx.h)));
        const double hh = (piece_end - run.state.y) / steps;
        for (int i = 0; i < steps; ++i) g = far_step(run.state, hh, inner, outer);
      }
      if (at_break) run.state.allowance += per_block(run.state.y);
      if (!std::isfinite(run.state.log_sum) && run.state.log_sum > 0) {
        run.overflow = true;
        break;
      }
      record(g);
      if (should_stop()) {
        run.stopped_converged = true;
        break;
      }
    }
  }
  run.kappa = mon.kappa(10.0);
  run.tail = mon.tail_bound();
  run.nondecreasing_tail = mon.nondecreasing_since(0.5 * (y0 + run.state.y));
  return run;
}

}  // namespace detail

inline SeriesDiagnostic evaluate_block_series(const std::string& id, const BlockSeries& ser,
                                              const SeriesOptions& opt = {}) {
  opt.validate();
  if (!(ser.s > 0.0 && ser.s < 1.0)) throw ValidationError("s must lie in (0, 1)");
  const std::uint64_t n0 = std::uint64_t{1} << opt.exact_log2;
  const auto blocks = distinct_blocks(ser.s, n0);
  const std::uint64_t l_max = blocks.back().value;
  if (l_max > 64 * n0) throw ValidationError("first block beyond the exact range is too long; lower s");
  // Inner prefix sums at every distinct block value.
  std::vector<double> inner_at(blocks.size());
  CompensatedSum inner_sum;
  {
    std::size_t q = 0;
    for (std::uint64_t i = 1; i <= l_max; ++i) {
      inner_sum.add(std::exp(ser.log_inner(std::log(static_cast<double>(i)))));
      while (q < blocks.size() && blocks[q].value == i) inner_at[q++] = inner_sum.value();
    }
  }
  CompensatedSum total;
  std::vector<Checkpoint> cps;
  int next_m = opt.first_checkpoint_log2;
  for (std::size_t q = 0; q + 1 < blocks.size(); ++q) {
    CompensatedSum h;
    for (std::uint64_t j = blocks[q].value + 1; j <= blocks[q + 1].value; ++j) h.add(1.0 / static_cast<double>(j));
    const double lw = ser.log_weight(std::log(static_cast<double>(blocks[q].value)),
                                     static_cast<double>(blocks[q].k_last), static_cast<double>(q));
    const double t = std::exp(lw) * h.value() * inner_at[q + 1];
    if (!std::isfinite(t)) {
      SeriesDiagnostic d;
      d.condition_id = id;
      d.value_estimate = kInf;
      d.note = "overflow in exact partial sums";
      return d;
    }
    total.add(t);
    while (next_m <= opt.exact_log2 && blocks[q + 1].value >= (std::uint64_t{1} << next_m)) {
      cps.push_back({static_cast<double>(next_m), total.value()});
      ++next_m;
    }
  }
  const auto& last = blocks.back();
  const double q_last = static_cast<double>(blocks.size() - 1);
  const double k_last = static_cast<double>(last.k_last);
  const double log_i0 = inner_at.back() > 0 ? std::log(inner_at.back()) : -kInf;
  const double y0 = std::log(static_cast<double>(last.value) + 0.5);
  const double log_exact = total.value() > 0 ? std::log(total.value()) : -kInf;
  detail::BlockFarContext cx{&ser, &opt, opt.step, std::nullopt, log_exact};
  const auto coarse = detail::run_block_far(cx, k_last, q_last, log_i0, y0);
  cx.h = 0.5 * opt.step;
  cx.y_stop = coarse.state.y;
  const auto fine = detail::run_block_far(cx, k_last, q_last, log_i0, y0);
  return detail::finish(id, opt, total.value(), std::move(cps), coarse, fine, 4.0 / static_cast<double>(n0));
}

}  // namespace nqd
