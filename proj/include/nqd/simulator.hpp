#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "nqd/dependence.hpp"
#include "nqd/numeric.hpp"
#include "nqd/oracles.hpp"
#include "nqd/scaling.hpp"

namespace nqd {

enum class NormalizerKind { Bn, Plain, Reference };

inline constexpr std::array<NormalizerKind, 3> kAllNormalizers{NormalizerKind::Bn, NormalizerKind::Plain,
                                                              NormalizerKind::Reference};

inline std::string to_string(NormalizerKind k) {
  switch (k) {
    case NormalizerKind::Bn: return "b_n";
    case NormalizerKind::Plain: return "plain";
    case NormalizerKind::Reference: return "reference";
  }
  return "?";
}

/// Bn: b_n. Plain and Reference: n^{1/p}. The reference setting moves the
/// log factor into the moment condition, so its normalizer is the plain one.
inline double normalizer_value(NormalizerKind k, const ScalingFamily& fam, double n) {
  return k == NormalizerKind::Bn ? fam.normalizer_b(n) : fam.plain_normalizer(n);
}

/// round(10^{3 + i/4}) up to the horizon; short horizons start at 10.
inline std::vector<std::uint64_t> default_checkpoints(std::uint64_t horizon) {
  std::vector<std::uint64_t> out;
  const double start = horizon >= 1000 ? 3.0 : 1.0;
  for (int i = 0;; ++i) {
    const auto n = static_cast<std::uint64_t>(std::llround(std::pow(10.0, start + i / 4.0)));
    if (n > horizon) break;
    if (out.empty() || n > out.back()) out.push_back(n);
  }
  if (out.empty()) out.push_back(horizon);
  return out;
}

struct SimConfig {
  DependenceModel model = DependenceModel::iid(Marginal::pareto(1.8, 1.0));
  ScalingFamily fam = ScalingFamily::make(1.5);
  std::uint64_t seed = 0;
  std::uint64_t paths = 200;
  std::uint64_t horizon = 1000000;
  std::vector<std::uint64_t> checkpoints;  // empty: default_checkpoints(horizon)
  std::vector<double> epsilons{0.1, 0.5, 1.0};
  unsigned threads = 1;

  [[nodiscard]] std::vector<std::uint64_t> resolved_checkpoints() const {
    return checkpoints.empty() ? default_checkpoints(horizon) : checkpoints;
  }

  void validate() const {
    model.validate();
    fam.validate();
    if (paths < 2) throw ValidationError("simulate.paths must be at least 2");
    if (horizon < 1) throw ValidationError("simulate.horizon must be at least 1");
    const auto cps = resolved_checkpoints();
    for (std::size_t i = 0; i < cps.size(); ++i) {
      if (cps[i] == 0 || (i > 0 && cps[i] <= cps[i - 1])) {
        throw ValidationError("simulate.checkpoints must be positive and increasing");
      }
    }
    if (cps.back() > horizon) throw ValidationError("simulate.horizon must cover the largest checkpoint");
    for (double e : epsilons) {
      if (!(e > 0.0) || !std::isfinite(e)) throw ValidationError("simulate.epsilons must be positive");
    }
  }
};

struct QuantileRow {
  std::uint64_t n = 0;
  NormalizerKind normalizer = NormalizerKind::Bn;
  double median = 0.0;
  double q90 = 0.0;
  double max = 0.0;
};

struct EventRow {
  double epsilon = 0.0;
  std::uint64_t k = 0;  // deduplicated block index
  double event_freq = 0.0;
};

struct TrajectoryStats {
  std::vector<QuantileRow> quantiles;
  std::vector<EventRow> events;
  std::uint64_t paths = 0;
};

/// Order statistic with linear interpolation between closest ranks.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace detail {

// Blocks used for the block-maximum events: for each checkpoint n the last block
// start l_q <= n with l_{q+1} inside the horizon.
struct EventPlan {
  std::vector<std::uint64_t> ends;  // l_1 < l_2 < ... <= horizon
  std::vector<std::size_t> q;       // 0-based positions into ends; event uses ends[0..q+1]
};

inline EventPlan make_event_plan(const ScalingFamily& fam, std::uint64_t horizon,
                                 const std::vector<std::uint64_t>& checkpoints) {
  EventPlan plan;
  for (const auto& b : distinct_blocks(fam.s, horizon)) {
    if (b.value <= horizon) plan.ends.push_back(b.value);
  }
  for (auto n : checkpoints) {
    const auto it = std::upper_bound(plan.ends.begin(), plan.ends.end(), n);
    if (it == plan.ends.begin()) continue;
    const auto q = static_cast<std::size_t>(it - plan.ends.begin()) - 1;
    if (q + 1 >= plan.ends.size()) continue;
    if (plan.q.empty() || q > plan.q.back()) plan.q.push_back(q);
  }
  return plan;
}

struct PathResult {
  std::vector<double> abs_sum;      // |S_n| at checkpoints
  std::vector<double> running_max;  // max_{j <= q+1} |S_{l_j}| per planned event
};

}  // namespace detail

/// Streams every path once and reduces in path order.
inline TrajectoryStats simulate(const SimConfig& cfg) {
  cfg.validate();
  const auto cps = cfg.resolved_checkpoints();
  const PathGenerator gen(cfg.model, cfg.seed, cfg.horizon);
  const auto plan = detail::make_event_plan(cfg.fam, cfg.horizon, cps);
  std::vector<double> means(cfg.horizon);
  for (std::uint64_t k = 1; k <= cfg.horizon; ++k) means[k - 1] = gen.mean(k);
  std::vector<detail::PathResult> results(cfg.paths);
  const unsigned workers = std::max(1u, cfg.threads);
  std::vector<std::vector<double>> buffers(workers, std::vector<double>(cfg.horizon));
  // Worker t owns paths t, t + workers, ...; buffer index follows.
  parallel_paths(cfg.paths, workers, [&](std::uint64_t p) {
    auto& buf = buffers[p % workers];
    gen.fill(p, buf);
    auto& res = results[p];
    res.abs_sum.reserve(cps.size());
    std::vector<double> boundary_max;
    boundary_max.reserve(plan.ends.size());
    CompensatedSum s;
    std::size_t next_cp = 0, next_end = 0;
    double best = 0.0;
    for (std::uint64_t i = 0; i < cfg.horizon; ++i) {
      s.add(buf[i] - means[i]);
      const std::uint64_t n = i + 1;
      if (next_cp < cps.size() && cps[next_cp] == n) {
        res.abs_sum.push_back(std::fabs(s.value()));
        ++next_cp;
      }
      if (next_end < plan.ends.size() && plan.ends[next_end] == n) {
        best = std::max(best, std::fabs(s.value()));
        boundary_max.push_back(best);
        ++next_end;
      }
    }
    for (auto q : plan.q) res.running_max.push_back(boundary_max[q + 1]);
  });

  TrajectoryStats out;
  out.paths = cfg.paths;
  std::vector<double> col(cfg.paths);
  for (std::size_t c = 0; c < cps.size(); ++c) {
    for (std::uint64_t p = 0; p < cfg.paths; ++p) col[p] = results[p].abs_sum[c];
    std::sort(col.begin(), col.end());
    for (auto kind : kAllNormalizers) {
      const double b = normalizer_value(kind, cfg.fam, static_cast<double>(cps[c]));
      out.quantiles.push_back({cps[c], kind, quantile_sorted(col, 0.5) / b, quantile_sorted(col, 0.9) / b,
                               col.back() / b});
    }
  }
  for (double eps : cfg.epsilons) {
    for (std::size_t e = 0; e < plan.q.size(); ++e) {
      const double level = eps * cfg.fam.normalizer_b(static_cast<double>(plan.ends[plan.q[e]]));
      std::uint64_t hits = 0;
      for (std::uint64_t p = 0; p < cfg.paths; ++p) hits += results[p].running_max[e] > level ? 1 : 0;
      out.events.push_back({eps, plan.q[e] + 1, static_cast<double>(hits) / static_cast<double>(cfg.paths)});
    }
  }
  return out;
}

inline std::string quantiles_csv(const TrajectoryStats& st) {
  std::ostringstream os;
  os << "checkpoint_n,normalizer,median,q90,max\n";
  for (const auto& r : st.quantiles) {
    os << r.n << ',' << to_string(r.normalizer) << ',' << format_double(r.median) << ',' << format_double(r.q90)
       << ',' << format_double(r.max) << '\n';
  }
  return os.str();
}

inline std::string events_csv(const TrajectoryStats& st) {
  std::ostringstream os;
  os << "epsilon,k,event_freq\n";
  for (const auto& r : st.events) {
    os << format_double(r.epsilon) << ',' << r.k << ',' << format_double(r.event_freq) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Normalizer comparison

struct NormalizerComparisonRow {
  std::uint64_t n = 0;
  double b_n = 0.0;
  double plain = 0.0;
  double reference = 0.0;
};

/// Medians of the normalized deviation on identical paths under the three
/// normalizers.
inline std::vector<NormalizerComparisonRow> compare_normalizers(const SimConfig& cfg) {
  const auto st = simulate(cfg);
  std::vector<NormalizerComparisonRow> rows;
  for (const auto& q : st.quantiles) {
    if (rows.empty() || rows.back().n != q.n) rows.push_back({q.n, 0, 0, 0});
    auto& row = rows.back();
    (q.normalizer == NormalizerKind::Bn ? row.b_n : q.normalizer == NormalizerKind::Plain ? row.plain : row.reference) =
        q.median;
  }
  return rows;
}

inline std::string comparison_csv(const std::vector<NormalizerComparisonRow>& rows) {
  std::ostringstream os;
  os << "checkpoint_n,b_n,plain,reference\n";
  for (const auto& r : rows) {
    os << r.n << ',' << format_double(r.b_n) << ',' << format_double(r.plain) << ',' << format_double(r.reference) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Monte-Carlo moment inequality

struct EmpiricalMomentInequality {
  double lhs = 0.0;
  double rhs = 0.0;
  double lhs_se = 0.0;
  double rhs_se = 0.0;
  double ratio = 0.0;
  double ratio_se = 0.0;
};

/// Estimates E|sum_k Y_k|^r and sum_k E|Y_k|^r (lambda = 1) with
/// Y_k the centered truncated sum over block k of `layout`.
inline EmpiricalMomentInequality empirical_moment_inequality(const SimConfig& cfg, const TruncationWindow& window,
                                                             double r, const BlockLayout& layout) {
  if (!(r > 1.0)) throw ValidationError("moment order r must exceed 1");
  if (cfg.paths < 2) throw ValidationError("simulate.paths must be at least 2");
  cfg.model.validate();
  const std::uint64_t last = layout.bounds.at(layout.offset + layout.count);
  layout.validate(last);
  const PathGenerator gen(cfg.model, cfg.seed, last);
  std::vector<double> centers(last);
  for (std::uint64_t i = 0; i < last; ++i) {
    if (cfg.model.analytic()) {
      centers[i] = cfg.model.marginal_at(i + 1).expected_truncation(window);
    } else {
      const auto& j = *cfg.model.joint;
      const std::size_t v = i % j.dims();
      centers[i] = j.expectation([&](const double* x) { return g_trunc(x[v], window); });
    }
  }
  std::vector<double> lhs(cfg.paths), rhs(cfg.paths);
  const unsigned workers = std::max(1u, cfg.threads);
  std::vector<std::vector<double>> buffers(workers, std::vector<double>(last));
  parallel_paths(cfg.paths, workers, [&](std::uint64_t p) {
    auto& buf = buffers[p % workers];
    gen.fill(p, buf);
    double total = 0.0, parts = 0.0;
    for (std::uint64_t b = 0; b < layout.count; ++b) {
      const auto k = layout.offset + 1 + b;
      double y = 0.0;
      for (auto i = layout.bounds[k - 1]; i < layout.bounds[k]; ++i) y += g_trunc(buf[i], window) - centers[i];
      total += y;
      parts += std::pow(std::fabs(y), r);
    }
    lhs[p] = std::pow(std::fabs(total), r);
    rhs[p] = parts;
  });
  const double n = static_cast<double>(cfg.paths);
  auto mean_se = [&](const std::vector<double>& v) {
    CompensatedSum s;
    for (double x : v) s.add(x);
    const double m = s.value() / n;
    CompensatedSum q;
    for (double x : v) q.add((x - m) * (x - m));
    return std::pair{m, std::sqrt(q.value() / (n - 1.0) / n)};
  };
  EmpiricalMomentInequality out;
  std::tie(out.lhs, out.lhs_se) = mean_se(lhs);
  std::tie(out.rhs, out.rhs_se) = mean_se(rhs);
  out.ratio = out.lhs / out.rhs;
  std::vector<double> resid(cfg.paths);
  for (std::uint64_t p = 0; p < cfg.paths; ++p) resid[p] = lhs[p] - out.ratio * rhs[p];
  out.ratio_se = mean_se(resid).second / out.rhs;
  return out;
}

}  // namespace nqd
