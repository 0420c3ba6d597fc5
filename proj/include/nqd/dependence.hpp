#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "nqd/marginals.hpp"
#include "nqd/numeric.hpp"
#include "nqd/oracles.hpp"
#include "nqd/rng.hpp"

namespace nqd {

enum class DependenceKind { Iid, AntitheticPairs, GaussianCopula, DiscreteJoint };

inline std::string to_string(DependenceKind k) {
  switch (k) {
    case DependenceKind::Iid: return "iid";
    case DependenceKind::AntitheticPairs: return "antithetic_pairs";
    case DependenceKind::GaussianCopula: return "gaussian_copula";
    case DependenceKind::DiscreteJoint: return "discrete_joint";
  }
  return "?";
}

/// Recipe for pairwise NQD paths. Index k (1-based) uses
/// marginals[(k - 1) % marginals.size()]. For the Gaussian copula,
/// band[j - 1] is the correlation between X_k and X_{k+j}; lags beyond the
/// band are uncorrelated. A discrete joint of dimension d is tiled over
/// consecutive independent blocks of d indices.
struct DependenceModel {
  DependenceKind kind = DependenceKind::Iid;
  std::vector<Marginal> marginals;
  std::vector<double> band;
  std::shared_ptr<const DiscreteJoint> joint;

  static DependenceModel iid(Marginal m) { return make(DependenceKind::Iid, {m}); }
  static DependenceModel antithetic_pairs(Marginal m) { return make(DependenceKind::AntitheticPairs, {m}); }
  static DependenceModel gaussian_copula(Marginal m, std::vector<double> band) {
    auto out = make(DependenceKind::GaussianCopula, {m});
    out.band = std::move(band);
    out.validate();
    return out;
  }
  static DependenceModel discrete_joint(DiscreteJoint j) {
    DependenceModel out;
    out.kind = DependenceKind::DiscreteJoint;
    out.joint = std::make_shared<const DiscreteJoint>(std::move(j));
    return out;
  }
  static DependenceModel make(DependenceKind k, std::vector<Marginal> ms) {
    DependenceModel out;
    out.kind = k;
    out.marginals = std::move(ms);
    out.validate();
    return out;
  }

  [[nodiscard]] bool analytic() const noexcept { return kind != DependenceKind::DiscreteJoint; }

  [[nodiscard]] const Marginal& marginal_at(std::uint64_t k) const {
    if (!analytic()) throw ValidationError("discrete_joint models have no analytic marginal");
    return marginals[(k - 1) % marginals.size()];
  }

  /// Exact E X_k.
  [[nodiscard]] double mean_at(std::uint64_t k) const {
    if (!analytic()) return joint->marginal_mean((k - 1) % joint->dims());
    return marginal_at(k).mean();
  }

  void validate() const {
    if (kind == DependenceKind::DiscreteJoint) {
      if (!joint) throw ValidationError("discrete_joint model without a pmf");
      return;
    }
    if (marginals.empty()) throw ValidationError("dependence model needs a marginal");
    if (kind != DependenceKind::GaussianCopula) return;
    for (std::size_t j = 0; j < band.size(); ++j) {
      if (!(band[j] <= 0.0) || !(band[j] >= -1.0)) {
        throw ValidationError("gaussian_copula correlation at lag " + std::to_string(j + 1) +
                              " must lie in [-1, 0], got " + format_double(band[j]));
      }
    }
    // PSD of the infinite banded Toeplitz matrix: its symbol
    // 1 + 2 sum_j rho_j cos(j theta) must be nonnegative.
    constexpr int kGrid = 4096;
    for (int g = 0; g <= kGrid; ++g) {
      const double theta = M_PI * g / kGrid;
      double symbol = 1.0;
      for (std::size_t j = 0; j < band.size(); ++j) symbol += 2.0 * band[j] * std::cos(static_cast<double>(j + 1) * theta);
      if (symbol < -1e-12) {
        throw ValidationError("gaussian_copula correlation band is not positive semidefinite (symbol " +
                              format_double(symbol) + " at theta " + format_double(theta) + ")");
      }
    }
  }

  [[nodiscard]] std::string describe() const {
    std::string out = to_string(kind);
    if (kind == DependenceKind::GaussianCopula) {
      out += "(band=";
      for (std::size_t j = 0; j < band.size(); ++j) out += (j ? ";" : "") + format_double(band[j]);
      out += ")";
    }
    if (kind == DependenceKind::DiscreteJoint) out += "(dims=" + std::to_string(joint->dims()) + ")";
    return out;
  }
};

/// Lower-triangular banded Cholesky factor of the Toeplitz correlation
/// matrix over a given horizon. Rows settle to a fixed pattern quickly, so
/// only rows up to the first repeat are stored.
class BandedCholesky {
 public:
  BandedCholesky(std::span<const double> band, std::uint64_t horizon) : m_(band.size()) {
    if (m_ == 0) {
      rows_.push_back({1.0});
      return;
    }
    std::vector<double> corr(m_ + 1, 0.0);
    corr[0] = 1.0;
    for (std::size_t j = 0; j < m_; ++j) corr[j + 1] = band[j];
    // Row i holds L[i][i-m..i] (index 0 is column i-m).
    for (std::uint64_t i = 0; i < horizon; ++i) {
      std::vector<double> row(m_ + 1, 0.0);
      for (std::size_t c = 0; c <= m_; ++c) {
        if (i + c < m_) continue;
        const std::uint64_t col = i + c - m_;
        double acc = corr[i - col];
        // sum over shared columns q of L[i][q] L[col][q]
        for (std::size_t q = 0; q < c; ++q) {
          if (i + q < m_) continue;
          acc -= row[q] * (c == m_ ? row[q] : at(col, i + q - m_));
        }
        if (c == m_) {
          if (!(acc > 1e-14)) {
            throw ValidationError("gaussian_copula correlation matrix is not positive definite at index " +
                                  std::to_string(i + 1));
          }
          row[c] = std::sqrt(acc);
        } else {
          row[c] = acc / at(col, col);
        }
      }
      if (!rows_.empty() && i >= m_) {
        const auto& prev = rows_.back();
        bool same = true;
        for (std::size_t c = 0; c <= m_; ++c) same = same && std::fabs(row[c] - prev[c]) <= 1e-15 * std::fabs(prev[c]);
        if (same) break;
      }
      rows_.push_back(std::move(row));
    }
  }

  [[nodiscard]] std::size_t bandwidth() const noexcept { return m_; }
  [[nodiscard]] std::size_t stored_rows() const noexcept { return rows_.size(); }

  /// L[i][col] for i - m <= col <= i (0-based).
  [[nodiscard]] double at(std::uint64_t i, std::uint64_t col) const {
    const auto& row = rows_[std::min<std::uint64_t>(i, rows_.size() - 1)];
    return row[m_ - (i - col)];
  }

  /// z = L eps, in place on a path buffer holding eps.
  void apply(std::span<double> eps) const {
    // Walk backwards so that entries still needed are untouched.
    for (std::uint64_t i = eps.size(); i-- > 0;) {
      double z = 0.0;
      for (std::size_t c = 0; c <= m_; ++c) {
        if (i + c < m_) continue;
        const std::uint64_t col = i + c - m_;
        z += at(i, col) * eps[col];
      }
      eps[i] = z;
    }
  }

 private:
  std::size_t m_;
  std::vector<std::vector<double>> rows_;
};

/// Fills single paths of a model for a fixed horizon. Immutable after
/// construction and safe to share across threads.
class PathGenerator {
 public:
  PathGenerator(DependenceModel model, std::uint64_t master_seed, std::uint64_t horizon)
      : model_(std::move(model)), seed_(master_seed), horizon_(horizon) {
    model_.validate();
    if (horizon_ < 1) throw ValidationError("horizon must be at least 1");
    if (model_.kind == DependenceKind::GaussianCopula) chol_.emplace(model_.band, horizon_);
    if (model_.kind == DependenceKind::DiscreteJoint) {
      CompensatedSum c;
      for (double p : model_.joint->probs()) cumulative_.push_back((c += p).value());
      cumulative_.back() = 1.0;
    }
    means_.reserve(std::min<std::uint64_t>(horizon_, period()));
    for (std::uint64_t k = 1; k <= std::min<std::uint64_t>(horizon_, period()); ++k) means_.push_back(model_.mean_at(k));
  }

  [[nodiscard]] const DependenceModel& model() const noexcept { return model_; }
  [[nodiscard]] std::uint64_t horizon() const noexcept { return horizon_; }
  [[nodiscard]] std::uint64_t master_seed() const noexcept { return seed_; }

  /// E X_k, 1-based.
  [[nodiscard]] double mean(std::uint64_t k) const { return means_[(k - 1) % means_.size()]; }

  void fill(std::uint64_t path, std::span<double> out) const {
    if (out.size() != horizon_) throw ValidationError("path buffer size does not match the horizon");
    const CounterStream rng(seed_, path);
    const auto& ms = model_.marginals;
    switch (model_.kind) {
      case DependenceKind::Iid:
        for (std::uint64_t i = 0; i < horizon_; ++i) out[i] = ms[i % ms.size()].survival_quantile(rng.uniform(i));
        break;
      case DependenceKind::AntitheticPairs:
        for (std::uint64_t i = 0; i < horizon_; ++i) {
          const double s = rng.uniform(i / 2);
          out[i] = ms[i % ms.size()].survival_quantile(i % 2 == 0 ? s : 1.0 - s);
        }
        break;
      case DependenceKind::GaussianCopula:
        for (std::uint64_t i = 0; i < horizon_; ++i) out[i] = rng.normal(i);
        chol_->apply(out);
        for (std::uint64_t i = 0; i < horizon_; ++i) {
          out[i] = ms[i % ms.size()].survival_quantile(0.5 * std::erfc(out[i] * M_SQRT1_2));
        }
        break;
      case DependenceKind::DiscreteJoint: {
        const auto& joint = *model_.joint;
        const std::size_t d = joint.dims();
        for (std::uint64_t b = 0; b * d < horizon_; ++b) {
          const double u = rng.uniform(b);
          const auto atom = std::min<std::size_t>(
              std::lower_bound(cumulative_.begin(), cumulative_.end(), u) - cumulative_.begin(), joint.atoms() - 1);
          for (std::size_t v = 0; v < d && b * d + v < horizon_; ++v) out[b * d + v] = joint.point(atom, v);
        }
        break;
      }
    }
  }

 private:
  [[nodiscard]] std::uint64_t period() const {
    return model_.analytic() ? model_.marginals.size() : model_.joint->dims();
  }

  DependenceModel model_;
  std::uint64_t seed_;
  std::uint64_t horizon_;
  std::optional<BandedCholesky> chol_;
  std::vector<double> cumulative_;
  std::vector<double> means_;
};

/// Runs body(path) for path in [0, count) on up to `threads` workers with
/// a static interleaved assignment.
template <class Body>
void parallel_paths(std::uint64_t count, unsigned threads, Body&& body) {
  threads = std::max(1u, threads);
  if (threads == 1 || count <= 1) {
    for (std::uint64_t p = 0; p < count; ++p) body(p);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::uint64_t p = t; p < count; p += threads) body(p);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

struct PathBatch {
  std::uint64_t master_seed = 0;
  std::uint64_t path_count = 0;
  std::uint64_t horizon = 0;
  std::vector<double> values;  // path-major
  std::vector<double> means;   // E X_k for k = 1..horizon

  [[nodiscard]] std::span<const double> path(std::uint64_t p) const {
    return {values.data() + p * horizon, horizon};
  }
};

inline PathBatch generate(const DependenceModel& model, std::uint64_t master_seed, std::uint64_t path_count,
                          std::uint64_t horizon, unsigned threads = 1) {
  if (path_count * horizon > (std::uint64_t{1} << 28)) {
    throw ValidationError("path batch too large to hold in memory; use the streaming simulator");
  }
  const PathGenerator gen(model, master_seed, horizon);
  PathBatch out;
  out.master_seed = master_seed;
  out.path_count = path_count;
  out.horizon = horizon;
  out.values.resize(path_count * horizon);
  out.means.resize(horizon);
  for (std::uint64_t k = 1; k <= horizon; ++k) out.means[k - 1] = gen.mean(k);
  parallel_paths(path_count, threads, [&](std::uint64_t p) {
    gen.fill(p, std::span<double>(out.values.data() + p * horizon, horizon));
  });
  return out;
}

}  // namespace nqd
