#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nqd/dependence.hpp"
#include "nqd/marginals.hpp"
#include "nqd/numeric.hpp"
#include "nqd/scaling.hpp"

namespace nqd {

struct TruncationTriple {
  double x_prime = 0.0;
  double x_dprime = 0.0;
  double x_tprime = 0.0;

  [[nodiscard]] double sum() const noexcept { return x_prime + x_dprime + x_tprime; }
  friend bool operator==(const TruncationTriple&, const TruncationTriple&) = default;
};

/// x = c belongs to the core, x = d to the middle band.
inline TruncationTriple decompose(double x, double c, double d) {
  if (!(c >= 0.0) || !(c <= d)) throw ValidationError("decompose needs 0 <= c <= d");
  if (!(x >= 0.0)) throw ValidationError("decompose needs a nonnegative sample");
  if (x <= c) return {x, 0.0, 0.0};
  if (x <= d) return {c, x - c, 0.0};
  return {c, d - c, x - d};
}

struct ComponentMeans {
  double ex = 0.0;
  double ex_prime = 0.0;
  double ex_dprime = 0.0;
  double ex_tprime = 0.0;
};

/// E X', E X'', E X''' at thresholds (c, d) for an analytic marginal.
inline ComponentMeans component_means(const Marginal& m, double c, double d) {
  if (!(c >= 0.0) || !(c <= d)) throw ValidationError("component means need 0 <= c <= d");
  ComponentMeans out;
  out.ex = m.mean();
  out.ex_prime = m.truncated_moment(1.0, c) + c * m.tail(c);
  out.ex_tprime = m.partial_expectation(d);
  out.ex_dprime = m.partial_expectation(c) - out.ex_tprime;
  return out;
}

struct DecomposedPaths {
  std::uint64_t path_count = 0;
  std::uint64_t horizon = 0;
  std::vector<double> prime, dprime, tprime;  // path-major, like PathBatch
  std::vector<ComponentMeans> means;         // per index k = 1..horizon
};

inline DecomposedPaths decompose_path(const PathBatch& batch, const DependenceModel& model, const ScalingFamily& fam) {
  DecomposedPaths out;
  out.path_count = batch.path_count;
  out.horizon = batch.horizon;
  out.prime.resize(batch.values.size());
  out.dprime.resize(batch.values.size());
  out.tprime.resize(batch.values.size());
  std::vector<double> cs(batch.horizon), ds(batch.horizon);
  for (std::uint64_t k = 1; k <= batch.horizon; ++k) {
    cs[k - 1] = fam.threshold_c(static_cast<double>(k));
    ds[k - 1] = fam.threshold_d(static_cast<double>(k));
    if (cs[k - 1] > ds[k - 1]) {
      throw ValidationError("threshold c_k exceeds d_k at k = " + std::to_string(k));
    }
  }
  for (std::uint64_t p = 0; p < batch.path_count; ++p) {
    for (std::uint64_t i = 0; i < batch.horizon; ++i) {
      const auto at = p * batch.horizon + i;
      const auto t = decompose(batch.values[at], cs[i], ds[i]);
      out.prime[at] = t.x_prime;
      out.dprime[at] = t.x_dprime;
      out.tprime[at] = t.x_tprime;
    }
  }
  out.means.resize(batch.horizon);
  if (model.analytic()) {
    for (std::uint64_t k = 1; k <= batch.horizon; ++k) out.means[k - 1] = component_means(model.marginal_at(k), cs[k - 1], ds[k - 1]);
  } else {
    // Exact from the pmf: each index sees the marginal of its coordinate.
    const auto& joint = *model.joint;
    for (std::uint64_t k = 1; k <= batch.horizon; ++k) {
      const auto v = (k - 1) % joint.dims();
      const double c = cs[k - 1], d = ds[k - 1];
      auto& m = out.means[k - 1];
      m.ex = joint.marginal_mean(v);
      m.ex_prime = joint.expectation([&](const double* x) { return decompose(x[v], c, d).x_prime; });
      m.ex_dprime = joint.expectation([&](const double* x) { return decompose(x[v], c, d).x_dprime; });
      m.ex_tprime = joint.expectation([&](const double* x) { return decompose(x[v], c, d).x_tprime; });
    }
  }
  return out;
}

struct BlockSum {
  std::uint64_t k = 0;      // deduplicated block index, 1-based
  std::uint64_t first = 0;  // first index in the block (1-based)
  std::uint64_t last = 0;   // last index in the block
  double sum = 0.0;
};

struct BlockSumReport {
  std::vector<BlockSum> blocks;
  /// prefix_abs[q] = |sum_{i <= l_q} (x_i - mu_i)| at the end of block q.
  std::vector<double> prefix_abs;
  /// running_max[q] = max_{j <= q} prefix_abs[j].
  std::vector<double> running_max;
};

/// Block ends: the distinct values of l_k capped at the horizon. The first
/// block starts at index 1 and the last block ends at the horizon.
inline std::vector<std::uint64_t> block_ends(double s, std::uint64_t horizon) {
  const auto blocks = distinct_blocks(s, horizon);
  if (blocks.front().value > horizon) {
    throw ValidationError("horizon " + std::to_string(horizon) + " is shorter than the first block l_1 = " +
                          std::to_string(blocks.front().value));
  }
  std::vector<std::uint64_t> ends;
  for (const auto& b : blocks) ends.push_back(std::min(b.value, horizon));
  return ends;
}

/// Centered block sums of one path and the prefix-maximum statistic at
/// block boundaries.
inline BlockSumReport block_sums(std::span<const double> path, std::span<const double> means, double s) {
  if (path.size() != means.size()) throw ValidationError("path and mean arrays differ in length");
  const auto ends = block_ends(s, path.size());
  BlockSumReport out;
  CompensatedSum prefix;
  std::uint64_t i = 0;
  double best = 0.0;
  for (std::size_t q = 0; q < ends.size(); ++q) {
    CompensatedSum block;
    const std::uint64_t first = i + 1;
    for (; i < ends[q]; ++i) {
      block.add(path[i] - means[i]);
      prefix.add(path[i] - means[i]);
    }
    out.blocks.push_back({q + 1, first, ends[q], block.value()});
    out.prefix_abs.push_back(std::fabs(prefix.value()));
    best = std::max(best, out.prefix_abs.back());
    out.running_max.push_back(best);
  }
  return out;
}

}  // namespace nqd
