#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "nqd/numeric.hpp"
#include "nqd/quadrature.hpp"

namespace nqd {

/// Natural log clamped below at 1: ln max(x, e).
inline double log_floor(double x) noexcept { return x > kE ? std::log(x) : 1.0; }

/// Iterated log clamped below at 1: ln ln max(x, e^e).
inline double loglog_floor(double x) noexcept {
  static const double kEE = std::exp(kE);
  return x > kEE ? std::log(std::log(x)) : 1.0;
}

/// Same as log_floor / loglog_floor but taking ln x, for arguments far
/// beyond the double range.
inline double log_floor_from_log(double log_x) noexcept { return log_x > 1.0 ? log_x : 1.0; }
inline double loglog_floor_from_log(double log_x) noexcept {
  return log_x > kE ? std::log(log_x) : 1.0;
}

struct TruncationWindow {
  double s_lo = 0.0;
  double t_len = 1.0;

  TruncationWindow() = default;
  TruncationWindow(double lo, double len) : s_lo(lo), t_len(len) {
    if (!(lo >= 0.0) || !(len > 0.0) || !std::isfinite(lo) || !std::isfinite(len)) {
      throw ValidationError("truncation window needs s_lo >= 0 and t_len > 0");
    }
  }
};

/// max(min(x - s, t), 0): the part of x above s, capped at t.
inline double g_trunc(double x, const TruncationWindow& w) noexcept {
  return std::max(std::min(x - w.s_lo, w.t_len), 0.0);
}

// ---------------------------------------------------------------------------
// Moment-inequality constants

/// Block constants of the moment inequality. `lambda` must be positive and
/// nondecreasing in n; it is given as a rule over real n so that the
/// recursion can also be evaluated far beyond any table.
struct MomentInequalityProfile {
  double r = 2.0;
  std::function<double(double)> lambda = [](double) { return 1.0; };
  bool lambda_is_unit = true;
  std::vector<std::uint64_t> block_bounds;
  std::uint64_t offset = 0;

  static MomentInequalityProfile unit(double r = 2.0) {
    MomentInequalityProfile p;
    p.r = r;
    return p;
  }
  static MomentInequalityProfile from_rule(double r, std::function<double(double)> rule) {
    MomentInequalityProfile p;
    p.r = r;
    p.lambda = std::move(rule);
    p.lambda_is_unit = false;
    return p;
  }
  static MomentInequalityProfile from_table(double r, std::vector<double> table) {
    if (table.empty()) throw ValidationError("lambda table is empty");
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (!(table[i] > 0.0) || (i > 0 && table[i] < table[i - 1])) {
        throw ValidationError("lambda table must be positive and nondecreasing");
      }
    }
    // Beyond the table the last value is held constant.
    return from_rule(r, [t = std::move(table)](double n) {
      const auto idx = static_cast<std::size_t>(std::max(1.0, n)) - 1;
      return idx < t.size() ? t[idx] : t.back();
    });
  }

  void validate() const {
    if (!(r > 1.0)) throw ValidationError("moment order r must exceed 1");
    for (std::size_t i = 1; i < block_bounds.size(); ++i) {
      if (block_bounds[i] <= block_bounds[i - 1]) {
        throw ValidationError("block bounds must be strictly increasing");
      }
    }
  }
};

/// Memoized Lambda_n: Lambda_1 = lambda_1,
/// Lambda_n = lambda_{floor((n+2)/2)} + Lambda_{floor((n+2)/2) - 1}.
/// Dense table grows on demand under an exclusive lock; readers share.
class LambdaTable {
 public:
  explicit LambdaTable(MomentInequalityProfile profile) : profile_(std::move(profile)) {}

  [[nodiscard]] double operator()(std::uint64_t n) const {
    if (n == 0) throw ValidationError("Lambda_n is defined for n >= 1");
    if (n <= kDenseLimit) {
      {
        std::shared_lock lock(mutex_);
        if (n < table_.size()) return table_[n];
      }
      std::unique_lock lock(mutex_);
      grow(n);
      return table_[n];
    }
    const std::uint64_t half = (n + 2) / 2;
    return lambda(static_cast<double>(half)) + (*this)(half - 1);
  }

  /// Lambda at a real argument, recursing on floor((n+2)/2) in floating
  /// point; used where n exceeds 64-bit range.
  [[nodiscard]] double at_real(double n) const {
    if (n < 1.0) throw ValidationError("Lambda_n is defined for n >= 1");
    if (n < 9.0e18) return (*this)(static_cast<std::uint64_t>(n));
    if (profile_.lambda_is_unit) return std::floor(std::log2(n)) + 1.0;
    const double half = std::floor((n + 2.0) / 2.0);
    return lambda(half) + at_real(half - 1.0);
  }

  [[nodiscard]] const MomentInequalityProfile& profile() const noexcept { return profile_; }

 private:
  static constexpr std::uint64_t kDenseLimit = std::uint64_t{1} << 24;

  double lambda(double n) const { return profile_.lambda_is_unit ? 1.0 : profile_.lambda(n); }

  void grow(std::uint64_t n) const {
    if (table_.empty()) {
      table_.push_back(0.0);
      table_.push_back(lambda(1.0));
    }
    for (std::uint64_t m = table_.size(); m <= n; ++m) {
      const std::uint64_t half = (m + 2) / 2;
      table_.push_back(lambda(static_cast<double>(half)) + table_[half - 1]);
    }
  }

  MomentInequalityProfile profile_;
  mutable std::shared_mutex mutex_;
  mutable std::vector<double> table_;
};

inline double lambda_capital(std::uint64_t n, const MomentInequalityProfile& profile) {
  if (n == 0) throw ValidationError("Lambda_n is defined for n >= 1");
  if (n == 1) return profile.lambda_is_unit ? 1.0 : profile.lambda(1.0);
  const std::uint64_t half = (n + 2) / 2;
  const double lam = profile.lambda_is_unit ? 1.0 : profile.lambda(static_cast<double>(half));
  return lam + lambda_capital(half - 1, profile);
}

// ---------------------------------------------------------------------------
// Normalizing, threshold and block sequences

/// The (p, r, s) family: a_n = 1/n, b_n = n^{1/p} (LLog n)^{2(p-1)/p},
/// c_n = n^{1/p} / (Log n)^{2/(2-p)}, d_n = n^{1/p} / (LLog n)^{2/p},
/// l_k = floor(e^{k^s}), m_k = 2^k.
struct ScalingFamily {
  double p = 1.5;
  double r = 2.0;
  double s = 1.0 / 3.0;

  static ScalingFamily make(double p, double r = 2.0) { return make(p, r, (2.0 - p) / p); }
  static ScalingFamily make(double p, double r, double s) {
    ScalingFamily f{p, r, s};
    f.validate();
    return f;
  }

  void validate() const {
    if (!(p > 1.0 && p < 2.0)) throw ValidationError("p must lie in (1, 2)");
    if (!(r > p)) throw ValidationError("r must exceed p");
    if (!(s > 0.0 && s < 1.0)) throw ValidationError("s must lie in (0, 1)");
  }

  [[nodiscard]] double weight_a(double n) const noexcept { return 1.0 / n; }
  [[nodiscard]] double normalizer_b(double n) const noexcept { return std::exp(log_b(std::log(n))); }
  [[nodiscard]] double threshold_c(double n) const noexcept { return std::exp(log_c(std::log(n))); }
  [[nodiscard]] double threshold_d(double n) const noexcept { return std::exp(log_d(std::log(n))); }
  [[nodiscard]] double plain_normalizer(double n) const noexcept { return std::pow(n, 1.0 / p); }

  // Log-space forms taking ln n.
  [[nodiscard]] double log_b(double log_n) const noexcept {
    return log_n / p + 2.0 * (p - 1.0) / p * std::log(loglog_floor_from_log(log_n));
  }
  /// log_b(log_n + d) - log_b(log_n) without cancellation.
  [[nodiscard]] double log_b_diff(double log_n, double d) const noexcept {
    const double hi = log_n + d;
    double ll;
    if (log_n > kE) {
      ll = std::log1p(std::log1p(d / log_n) / std::log(log_n));
    } else {
      ll = std::log(loglog_floor_from_log(hi)) - std::log(loglog_floor_from_log(log_n));
    }
    return d / p + 2.0 * (p - 1.0) / p * ll;
  }
  [[nodiscard]] double log_c(double log_n) const noexcept {
    return log_n / p - 2.0 / (2.0 - p) * std::log(log_floor_from_log(log_n));
  }
  [[nodiscard]] double log_d(double log_n) const noexcept {
    return log_n / p - 2.0 / p * std::log(loglog_floor_from_log(log_n));
  }
};

inline constexpr double kMaxBlockValue = 9.2e18;

/// l_k = floor(e^{k^s}); throws NumericError once the value leaves int64.
inline std::uint64_t block_l(std::uint64_t k, double s) {
  if (k == 0) throw ValidationError("block index k must be >= 1");
  const double v = std::exp(std::pow(static_cast<double>(k), s));
  if (!(v < kMaxBlockValue)) {
    throw NumericError("l_k = floor(e^{k^s}) overflows 64 bits at k = " + std::to_string(k));
  }
  return static_cast<std::uint64_t>(std::floor(v));
}

inline std::uint64_t block_m(std::uint64_t k) {
  if (k == 0) throw ValidationError("block index k must be >= 1");
  if (k > 62) throw NumericError("m_k = 2^k overflows 64 bits at k = " + std::to_string(k));
  return std::uint64_t{1} << k;
}

/// max(ceil((ln n)^{1/s}) - 1, 1): the first k with l_{k+1} >= n.
inline std::uint64_t phi_s(std::uint64_t n, double s) {
  if (n == 0) throw ValidationError("phi_s is defined for n >= 1");
  if (!(s > 0.0 && s < 1.0)) throw ValidationError("s must lie in (0, 1)");
  const double v = std::ceil(std::pow(std::log(static_cast<double>(n)), 1.0 / s)) - 1.0;
  return v < 1.0 ? 1 : static_cast<std::uint64_t>(v);
}

/// One run of equal l_k values: l_k = value for k in [k_first, k_last].
struct DistinctBlock {
  std::uint64_t value;
  std::uint64_t k_first;
  std::uint64_t k_last;
};

/// Distinct values of l_k in increasing order, up to the first value that
/// reaches `horizon` (inclusive). Position q in the result is the
/// deduplicated block index (q = 0 is the first block).
inline std::vector<DistinctBlock> distinct_blocks(double s, std::uint64_t horizon) {
  std::vector<DistinctBlock> out;
  std::uint64_t k = 1;
  std::uint64_t value = block_l(1, s);
  while (true) {
    // Largest k with e^{k^s} < value + 1.
    auto kl = static_cast<std::uint64_t>(
        std::max(1.0, std::ceil(std::pow(std::log(static_cast<double>(value) + 1.0), 1.0 / s)) - 1.0));
    if (kl < k) kl = k;
    while (kl > k && block_l(kl, s) != value) --kl;
    while (block_l(kl + 1, s) == value) ++kl;
    out.push_back({value, k, kl});
    if (value >= horizon) break;
    k = kl + 1;
    value = block_l(k, s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Asymptotic equivalents of weighted log-power sums and block sequences

enum class AsymptoticKind { PowerLogPrefix, PowerLogTail, PowerLogLogPrefix, PowerLogLogTail,
                            BlockRatio, BlockIncrement, BlockLogLog };

struct AsymptoticParams {
  double alpha = 0.0;
  double exponent = 0.0;  // beta (< 1) for prefix kinds, delta (> 1) for tail kinds
  double s = 1.0 / 3.0;
};

struct AsymptoticRow {
  double n, lhs, rhs, ratio;
};

namespace detail {

inline double asymptotic_term(AsymptoticKind kind, const AsymptoticParams& prm, double k) {
  const bool loglog = kind == AsymptoticKind::PowerLogLogPrefix || kind == AsymptoticKind::PowerLogLogTail;
  const double lg = loglog ? loglog_floor(k) : log_floor(k);
  return std::pow(lg, prm.alpha) / std::pow(k, prm.exponent);
}

}  // namespace detail

/// Exact (compensated) left-hand sides against their closed-form
/// equivalents, reported as ratio columns.
inline std::vector<AsymptoticRow> asymptotic_ratio(AsymptoticKind kind, const AsymptoticParams& prm,
                                                  const std::vector<std::uint64_t>& n_grid) {
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] == 0 || (i > 0 && n_grid[i] <= n_grid[i - 1])) {
      throw ValidationError("asymptotic_ratio grid must be positive and increasing");
    }
  }
  std::vector<AsymptoticRow> rows;
  switch (kind) {
    case AsymptoticKind::PowerLogPrefix:
    case AsymptoticKind::PowerLogLogPrefix: {
      if (!(prm.exponent < 1.0)) throw ValidationError("prefix equivalents need beta < 1");
      const bool loglog = kind == AsymptoticKind::PowerLogLogPrefix;
      CompensatedSum sum;
      std::uint64_t k = 0;
      for (auto n : n_grid) {
        while (k < n) sum.add(detail::asymptotic_term(kind, prm, static_cast<double>(++k)));
        const double nd = static_cast<double>(n);
        const double lg = loglog ? loglog_floor(nd) : log_floor(nd);
        const double rhs = std::pow(nd, 1.0 - prm.exponent) * std::pow(lg, prm.alpha) / (1.0 - prm.exponent);
        rows.push_back({nd, sum.value(), rhs, sum.value() / rhs});
      }
      break;
    }
    case AsymptoticKind::PowerLogTail:
    case AsymptoticKind::PowerLogLogTail: {
      if (!(prm.exponent > 1.0)) throw ValidationError("tail equivalents need delta > 1");
      const bool loglog = kind == AsymptoticKind::PowerLogLogTail;
      for (auto n : n_grid) {
        // Exact terms up to `cut`, then the midpoint-corrected integral.
        const std::uint64_t cut = n + 4000000;
        CompensatedSum sum;
        for (std::uint64_t k = n; k < cut; ++k) sum.add(detail::asymptotic_term(kind, prm, static_cast<double>(k)));
        auto f = [&](double y) {
          const double u = std::exp(y);
          return detail::asymptotic_term(kind, prm, u) * u;
        };
        sum.add(quad::integrate_to_infinity(f, std::log(static_cast<double>(cut) - 0.5)).value);
        const double nd = static_cast<double>(n);
        const double lg = loglog ? loglog_floor(nd) : log_floor(nd);
        const double rhs = std::pow(nd, 1.0 - prm.exponent) * std::pow(lg, prm.alpha) / (prm.exponent - 1.0);
        rows.push_back({nd, sum.value(), rhs, sum.value() / rhs});
      }
      break;
    }
    case AsymptoticKind::BlockRatio:
    case AsymptoticKind::BlockIncrement:
    case AsymptoticKind::BlockLogLog: {
      if (!(prm.s > 0.0 && prm.s < 1.0)) throw ValidationError("s must lie in (0, 1)");
      for (auto k : n_grid) {
        const double lk = static_cast<double>(block_l(k, prm.s));
        const double lk1 = static_cast<double>(block_l(k + 1, prm.s));
        const double kd = static_cast<double>(k);
        double lhs = 0, rhs = 0;
        if (kind == AsymptoticKind::BlockRatio) {
          lhs = lk1;
          rhs = lk;
        } else if (kind == AsymptoticKind::BlockIncrement) {
          lhs = (lk1 - lk) / lk;
          rhs = prm.s * std::pow(kd, prm.s - 1.0);
        } else {
          lhs = loglog_floor(lk1);
          rhs = prm.s * log_floor(kd);
        }
        rows.push_back({kd, lhs, rhs, lhs / rhs});
      }
      break;
    }
  }
  return rows;
}

}  // namespace nqd
