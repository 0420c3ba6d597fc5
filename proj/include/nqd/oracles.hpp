#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nqd/marginals.hpp"
#include "nqd/numeric.hpp"
#include "nqd/scaling.hpp"

namespace nqd {

/// Finite joint pmf of `dims` variables: atom a sits at
/// points[a * dims .. a * dims + dims) with probability probs[a].
class DiscreteJoint {
 public:
  static constexpr std::size_t kMaxAtoms = 1000000;

  DiscreteJoint(std::size_t dims, std::vector<double> points, std::vector<double> probs)
      : dims_(dims), points_(std::move(points)), probs_(std::move(probs)) {
    if (dims_ == 0) throw ValidationError("discrete joint needs at least one variable");
    if (points_.size() != dims_ * probs_.size()) throw ValidationError("discrete joint: ragged atom table");
    if (probs_.size() > kMaxAtoms) {
      throw ValidationError("discrete joint has " + std::to_string(probs_.size()) +
                            " support combinations; exact enumeration is capped at 1e6");
    }
    CompensatedSum total;
    for (double p : probs_) {
      if (!(p >= 0.0)) throw ValidationError("discrete joint: negative probability");
      total.add(p);
    }
    if (std::fabs(total.value() - 1.0) > 1e-12) {
      throw ValidationError("discrete joint: probabilities sum to " + format_double(total.value()) + ", not 1");
    }
  }

  /// Rows of `x_1, ..., x_d, probability`; a non-numeric first line is
  /// taken as a header.
  static DiscreteJoint load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open joint pmf file '" + path + "'");
    std::vector<double> points, probs;
    std::size_t dims = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      bool numeric = true;
      while (std::getline(ss, cell, ',')) {
        try {
          row.push_back(detail::parse_number(detail::trim(cell), "cell"));
        } catch (const ValidationError&) {
          numeric = false;
        }
      }
      if (!numeric) {
        if (lineno == 1) continue;
        throw ValidationError(path + ":" + std::to_string(lineno) + ": non-numeric cell");
      }
      if (row.size() < 2) throw ValidationError(path + ":" + std::to_string(lineno) + ": need at least 2 columns");
      if (dims == 0) dims = row.size() - 1;
      if (row.size() != dims + 1) throw ValidationError(path + ":" + std::to_string(lineno) + ": ragged row");
      points.insert(points.end(), row.begin(), row.end() - 1);
      probs.push_back(row.back());
    }
    return DiscreteJoint(dims, std::move(points), std::move(probs));
  }

  [[nodiscard]] std::size_t dims() const noexcept { return dims_; }
  [[nodiscard]] std::size_t atoms() const noexcept { return probs_.size(); }
  [[nodiscard]] double point(std::size_t atom, std::size_t var) const { return points_[atom * dims_ + var]; }
  [[nodiscard]] double prob(std::size_t atom) const { return probs_[atom]; }
  [[nodiscard]] const std::vector<double>& probs() const noexcept { return probs_; }

  /// Sorted distinct support values of variable `var`.
  [[nodiscard]] std::vector<double> support(std::size_t var) const {
    std::vector<double> v;
    v.reserve(atoms());
    for (std::size_t a = 0; a < atoms(); ++a) v.push_back(point(a, var));
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }

  [[nodiscard]] double expectation(const std::function<double(const double*)>& f) const {
    CompensatedSum s;
    for (std::size_t a = 0; a < atoms(); ++a) s.add(probs_[a] * f(&points_[a * dims_]));
    return s.value();
  }

  [[nodiscard]] double marginal_mean(std::size_t var) const {
    return expectation([var](const double* x) { return x[var]; });
  }

 private:
  std::size_t dims_;
  std::vector<double> points_;
  std::vector<double> probs_;
};

/// P{X_i <= x, X_j <= y} - P{X_i <= x} P{X_j <= y}.
inline double quadrant_gap(const DiscreteJoint& joint, std::size_t i, std::size_t j, double x, double y) {
  CompensatedSum both, fi, fj;
  for (std::size_t a = 0; a < joint.atoms(); ++a) {
    const bool in_i = joint.point(a, i) <= x;
    const bool in_j = joint.point(a, j) <= y;
    if (in_i) fi.add(joint.prob(a));
    if (in_j) fj.add(joint.prob(a));
    if (in_i && in_j) both.add(joint.prob(a));
  }
  return both.value() - fi.value() * fj.value();
}

struct NqdVerdict {
  bool pass = true;
  double worst_gap = 0.0;  // max over pairs and grid; 0 when NQD holds with equality somewhere
  std::size_t var_i = 0, var_j = 0;
  double x = 0.0, y = 0.0;
};

/// Evaluates the quadrant inequality at every support grid point of every
/// pair of variables.
inline NqdVerdict nqd_check_exact(const DiscreteJoint& joint, double tolerance = 1e-12) {
  NqdVerdict out;
  const std::size_t d = joint.dims();
  std::vector<std::vector<double>> supports(d);
  for (std::size_t v = 0; v < d; ++v) supports[v] = joint.support(v);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const auto& si = supports[i];
      const auto& sj = supports[j];
      const std::size_t ni = si.size(), nj = sj.size();
      if (ni * nj > 50000000) throw ValidationError("pairwise support grid too large for exact enumeration");
      std::vector<double> cell(ni * nj, 0.0);
      for (std::size_t a = 0; a < joint.atoms(); ++a) {
        const auto xi = std::lower_bound(si.begin(), si.end(), joint.point(a, i)) - si.begin();
        const auto yj = std::lower_bound(sj.begin(), sj.end(), joint.point(a, j)) - sj.begin();
        cell[xi * nj + yj] += joint.prob(a);
      }
      // 2-D cumulative table, then the marginals from its last row/column.
      for (std::size_t x = 0; x < ni; ++x) {
        for (std::size_t y = 0; y < nj; ++y) {
          double v = cell[x * nj + y];
          if (x > 0) v += cell[(x - 1) * nj + y];
          if (y > 0) v += cell[x * nj + y - 1];
          if (x > 0 && y > 0) v -= cell[(x - 1) * nj + y - 1];
          cell[x * nj + y] = v;
        }
      }
      for (std::size_t x = 0; x < ni; ++x) {
        const double fx = cell[x * nj + nj - 1];
        for (std::size_t y = 0; y < nj; ++y) {
          const double gap = cell[x * nj + y] - fx * cell[(ni - 1) * nj + y];
          if (gap > out.worst_gap) {
            out.worst_gap = gap;
            out.var_i = i;
            out.var_j = j;
            out.x = si[x];
            out.y = sj[y];
          }
        }
      }
    }
  }
  out.pass = out.worst_gap <= tolerance;
  return out;
}

/// Cov(f(X_i), g(X_j)) from the pmf. f and g must be nondecreasing on the
/// respective supports; for an NQD pair the result is <= 0.
inline double covariance_sign_oracle(const DiscreteJoint& joint, std::size_t i, std::size_t j,
                                     const std::function<double(double)>& f,
                                     const std::function<double(double)>& g) {
  auto check_monotone = [&](std::size_t var, const std::function<double(double)>& h, const char* name) {
    const auto supp = joint.support(var);
    for (std::size_t k = 1; k < supp.size(); ++k) {
      if (h(supp[k]) < h(supp[k - 1])) {
        throw ValidationError(std::string("transform ") + name + " is not nondecreasing on the support of X_" +
                              std::to_string(var + 1));
      }
    }
  };
  check_monotone(i, f, "f");
  check_monotone(j, g, "g");
  const double ef = joint.expectation([&](const double* x) { return f(x[i]); });
  const double eg = joint.expectation([&](const double* x) { return g(x[j]); });
  return joint.expectation([&](const double* x) { return (f(x[i]) - ef) * (g(x[j]) - eg); });
}

/// Block layout for the moment inequality: block k covers variables
/// (bounds[k-1], bounds[k]] (1-based), and the blocks used are
/// k = offset + 1, ..., offset + count.
struct BlockLayout {
  std::vector<std::uint64_t> bounds;  // bounds[0] = xi_0
  std::uint64_t offset = 0;
  std::uint64_t count = 0;

  static BlockLayout singletons(std::size_t dims) {
    BlockLayout b;
    for (std::size_t k = 0; k <= dims; ++k) b.bounds.push_back(k);
    b.count = dims;
    return b;
  }

  void validate(std::size_t dims) const {
    if (bounds.size() < 2) throw ValidationError("block layout needs at least one block");
    for (std::size_t k = 1; k < bounds.size(); ++k) {
      if (bounds[k] <= bounds[k - 1]) throw ValidationError("block bounds must be strictly increasing");
    }
    if (count == 0 || offset + count >= bounds.size()) throw ValidationError("block layout: offset/count out of range");
    if (bounds[offset + count] > dims) throw ValidationError("block layout reaches past the last variable");
  }
};

struct MomentInequalityValues {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// Exact second-moment sides of the block moment inequality with
/// lambda = 1: lhs = E|sum over blocks of centered truncated block sums|^2,
/// rhs = sum over blocks of E|centered truncated block sum|^2.
inline MomentInequalityValues moment_inequality_exact(const DiscreteJoint& joint, const TruncationWindow& window,
                                                      const BlockLayout& layout) {
  layout.validate(joint.dims());
  const std::size_t d = joint.dims();
  std::vector<double> centers(d);
  for (std::size_t v = 0; v < d; ++v) {
    centers[v] = joint.expectation([&](const double* x) { return g_trunc(x[v], window); });
  }
  CompensatedSum lhs, rhs;
  std::vector<double> block_sum(layout.count);
  for (std::size_t a = 0; a < joint.atoms(); ++a) {
    double total = 0.0;
    double squares = 0.0;
    for (std::uint64_t b = 0; b < layout.count; ++b) {
      const auto k = layout.offset + 1 + b;
      double sum = 0.0;
      for (auto v = layout.bounds[k - 1]; v < layout.bounds[k]; ++v) sum += g_trunc(joint.point(a, v), window) - centers[v];
      total += sum;
      squares += sum * sum;
    }
    lhs.add(joint.prob(a) * total * total);
    rhs.add(joint.prob(a) * squares);
  }
  return {lhs.value(), rhs.value()};
}

// ---------------------------------------------------------------------------
// Constructive NQD corpus

namespace detail {

struct DiscreteLaw {
  std::vector<double> values;  // sorted, distinct
  std::vector<double> probs;

  double quantile(double t) const {
    double c = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      c += probs[i];
      if (t <= c) return values[i];
    }
    return values.back();
  }
  std::vector<double> cumulative() const {
    std::vector<double> c;
    double acc = 0.0;
    for (double p : probs) c.push_back(acc += p);
    c.back() = 1.0;
    return c;
  }
};

// Countermonotone coupling (Q_i(U), Q_j(1 - U)) as a list of (x, y, prob).
inline std::vector<std::array<double, 3>> countermonotone(const DiscreteLaw& li, const DiscreteLaw& lj) {
  std::vector<double> cuts{0.0, 1.0};
  for (double c : li.cumulative()) cuts.push_back(c);
  for (double c : lj.cumulative()) cuts.push_back(1.0 - c);
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::array<double, 3>> out;
  for (std::size_t k = 1; k < cuts.size(); ++k) {
    const double w = cuts[k] - cuts[k - 1];
    if (w <= 0.0) continue;
    const double mid = 0.5 * (cuts[k] + cuts[k - 1]);
    out.push_back({li.quantile(mid), lj.quantile(1.0 - mid), w});
  }
  return out;
}

}  // namespace detail

/// Random pairwise-NQD pmf built as a mixture of layers that share the same
/// marginals. Each layer is either the independent product or couples one
/// random pair countermonotonically (others independent). Each layer is
/// NQD, and with common marginals so is the mixture.
inline DiscreteJoint make_antithetic_mixture(std::uint64_t seed, std::size_t dims, std::size_t max_support = 4,
                                             std::size_t layers = 3) {
  if (dims < 2) throw ValidationError("antithetic mixture needs at least two variables");
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> weight(1, 9);
  std::uniform_int_distribution<std::size_t> support_size(2, std::max<std::size_t>(2, max_support));
  std::vector<detail::DiscreteLaw> laws(dims);
  for (auto& law : laws) {
    const std::size_t n = support_size(gen);
    double v = 0.0;
    double total = 0.0;
    std::vector<double> w;
    for (std::size_t i = 0; i < n; ++i) {
      v += static_cast<double>(weight(gen)) * 0.25;
      law.values.push_back(v);
      w.push_back(weight(gen));
      total += w.back();
    }
    for (double x : w) law.probs.push_back(x / total);
  }
  std::map<std::vector<double>, double> pmf;
  std::vector<double> mix;
  double mix_total = 0.0;
  for (std::size_t l = 0; l < layers; ++l) mix_total += mix.emplace_back(weight(gen));
  std::uniform_int_distribution<std::size_t> pick(0, dims - 1);
  for (std::size_t l = 0; l < layers; ++l) {
    const double lw = mix[l] / mix_total;
    // Independent layer for l == 0, coupled pair otherwise.
    std::size_t ci = 0, cj = 0;
    bool coupled = l > 0;
    if (coupled) {
      ci = pick(gen);
      do cj = pick(gen); while (cj == ci);
    }
    // Enumerate: coupled pair as one factor, remaining variables independent.
    std::vector<std::pair<std::vector<double>, double>> partial{{std::vector<double>(dims, 0.0), lw}};
    if (coupled) {
      std::vector<std::pair<std::vector<double>, double>> next;
      for (auto& [pt, pr] : partial) {
        for (auto& [x, y, w] : detail::countermonotone(laws[ci], laws[cj])) {
          auto q = pt;
          q[ci] = x;
          q[cj] = y;
          next.emplace_back(std::move(q), pr * w);
        }
      }
      partial.swap(next);
    }
    for (std::size_t v = 0; v < dims; ++v) {
      if (coupled && (v == ci || v == cj)) continue;
      std::vector<std::pair<std::vector<double>, double>> next;
      for (auto& [pt, pr] : partial) {
        for (std::size_t a = 0; a < laws[v].values.size(); ++a) {
          auto q = pt;
          q[v] = laws[v].values[a];
          next.emplace_back(std::move(q), pr * laws[v].probs[a]);
        }
      }
      partial.swap(next);
    }
    for (auto& [pt, pr] : partial) pmf[pt] += pr;
  }
  std::vector<double> points, probs;
  double total = 0.0;
  for (auto& [pt, pr] : pmf) total += pr;
  for (auto& [pt, pr] : pmf) {
    points.insert(points.end(), pt.begin(), pt.end());
    probs.push_back(pr / total);
  }
  return DiscreteJoint(dims, std::move(points), std::move(probs));
}

/// Antithetic pair (U, 1 - U) on a symmetric `atoms`-point grid in (0, 1)
/// whose spacing is stretched so that Var U = 1/12 exactly, matching the
/// continuous uniform.
inline DiscreteJoint antithetic_uniform_pair(std::size_t atoms) {
  if (atoms < 2) throw ValidationError("antithetic grid needs at least two atoms");
  const double n = static_cast<double>(atoms);
  const double stretch = 1.0 / std::sqrt(1.0 - 1.0 / (n * n));
  std::vector<double> points, probs;
  for (std::size_t i = 0; i < atoms; ++i) {
    const double offset = (static_cast<double>(i) + 0.5 - 0.5 * n) / n * stretch;
    points.push_back(0.5 + offset);
    points.push_back(0.5 - offset);
    probs.push_back(1.0 / n);
  }
  return DiscreteJoint(2, std::move(points), std::move(probs));
}

}  // namespace nqd
