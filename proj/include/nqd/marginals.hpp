#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "nqd/numeric.hpp"
#include "nqd/scaling.hpp"

namespace nqd {

/// Nonnegative marginal law with closed-form tail, quantile and truncated
/// moments. Parameters by kind:
///   pareto(alpha, xm)        P{X > t} = (xm / t)^alpha, t >= xm
///   exponential(rate)
///   uniform(lo, hi)          0 <= lo < hi
///   two_point(v1, p1, v2)    P{X = v1} = p1, P{X = v2} = 1 - p1
class Marginal {
 public:
  enum class Kind { Pareto, Exponential, Uniform, TwoPoint };

  static Marginal pareto(double alpha, double xm = 1.0) {
    if (!(alpha > 0.0) || !(xm > 0.0)) throw ValidationError("pareto needs alpha > 0 and xm > 0");
    return Marginal(Kind::Pareto, alpha, xm, 0.0);
  }
  static Marginal exponential(double rate) {
    if (!(rate > 0.0)) throw ValidationError("exponential needs rate > 0");
    return Marginal(Kind::Exponential, rate, 0.0, 0.0);
  }
  static Marginal uniform(double lo, double hi) {
    if (!(lo >= 0.0) || !(hi > lo)) throw ValidationError("uniform needs 0 <= lo < hi");
    return Marginal(Kind::Uniform, lo, hi, 0.0);
  }
  static Marginal two_point(double v1, double p1, double v2) {
    if (!(v1 >= 0.0) || !(v2 >= 0.0)) throw ValidationError("two_point values must be nonnegative");
    if (!(p1 > 0.0 && p1 <= 1.0)) throw ValidationError("two_point needs 0 < p1 <= 1");
    if (v2 < v1) {
      if (p1 == 1.0) return Marginal(Kind::TwoPoint, v1, 1.0, v1);
      return Marginal(Kind::TwoPoint, v2, 1.0 - p1, v1);
    }
    return Marginal(Kind::TwoPoint, v1, p1, v2);
  }
  static Marginal degenerate(double v) { return two_point(v, 1.0, v); }

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] bool continuous() const noexcept { return kind_ != Kind::TwoPoint; }

  [[nodiscard]] double alpha() const noexcept { return a_; }
  [[nodiscard]] double xm() const noexcept { return b_; }

  /// P{X > t}.
  [[nodiscard]] double tail(double t) const {
    switch (kind_) {
      case Kind::Pareto: return t <= b_ ? 1.0 : std::pow(b_ / t, a_);
      case Kind::Exponential: return t <= 0.0 ? 1.0 : std::exp(-a_ * t);
      case Kind::Uniform: return t <= a_ ? 1.0 : (t >= b_ ? 0.0 : (b_ - t) / (b_ - a_));
      case Kind::TwoPoint: return (t < a_ ? b_ : 0.0) + (t < c_ ? 1.0 - b_ : 0.0);
    }
    return 0.0;
  }

  [[nodiscard]] double cdf(double t) const { return 1.0 - tail(t); }

  [[nodiscard]] double density(double x) const {
    switch (kind_) {
      case Kind::Pareto: return x < b_ ? 0.0 : a_ * std::pow(b_, a_) / std::pow(x, a_ + 1.0);
      case Kind::Exponential: return x < 0.0 ? 0.0 : a_ * std::exp(-a_ * x);
      case Kind::Uniform: return (x < a_ || x > b_) ? 0.0 : 1.0 / (b_ - a_);
      case Kind::TwoPoint: throw ValidationError("two_point marginal has no density");
    }
    return 0.0;
  }

  /// Inverse cdf on (0, 1).
  [[nodiscard]] double quantile(double u) const {
    switch (kind_) {
      case Kind::Pareto: return b_ * std::pow(1.0 - u, -1.0 / a_);
      case Kind::Exponential: return -std::log1p(-u) / a_;
      case Kind::Uniform: return a_ + u * (b_ - a_);
      case Kind::TwoPoint: return u <= b_ ? a_ : c_;
    }
    return 0.0;
  }

  /// Quantile at survival level s, i.e. quantile(1 - s) without forming
  /// 1 - s; keeps resolution in the far tail.
  [[nodiscard]] double survival_quantile(double s) const {
    switch (kind_) {
      case Kind::Pareto: return b_ * std::pow(s, -1.0 / a_);
      case Kind::Exponential: return -std::log(s) / a_;
      case Kind::Uniform: return b_ - s * (b_ - a_);
      case Kind::TwoPoint: return s < 1.0 - b_ ? c_ : a_;
    }
    return 0.0;
  }

  /// E X^order, or +inf when divergent.
  [[nodiscard]] double moment(double order) const {
    if (!(order > 0.0)) throw ValidationError("moment order must be positive");
    switch (kind_) {
      case Kind::Pareto: return order < a_ ? a_ * std::pow(b_, order) / (a_ - order) : kInf;
      case Kind::Exponential: return std::tgamma(order + 1.0) / std::pow(a_, order);
      case Kind::Uniform:
        return (std::pow(b_, order + 1.0) - std::pow(a_, order + 1.0)) / ((order + 1.0) * (b_ - a_));
      case Kind::TwoPoint: return b_ * std::pow(a_, order) + (1.0 - b_) * std::pow(c_, order);
    }
    return 0.0;
  }

  [[nodiscard]] double mean() const { return moment(1.0); }

  /// E X^order 1{X <= cap}.
  [[nodiscard]] double truncated_moment(double order, double cap) const {
    if (!(order > 0.0)) throw ValidationError("moment order must be positive");
    if (!(cap > 0.0)) return 0.0;
    switch (kind_) {
      case Kind::Pareto: {
        if (cap <= b_) return 0.0;
        return std::exp(pareto_log_truncated(order, std::log(cap)));
      }
      case Kind::Exponential: {
        if (std::isinf(cap)) return moment(order);
        return std::tgamma(order + 1.0) * boost::math::gamma_p(order + 1.0, a_ * cap) / std::pow(a_, order);
      }
      case Kind::Uniform: {
        if (cap <= a_) return 0.0;
        const double top = std::min(cap, b_);
        return (std::pow(top, order + 1.0) - std::pow(a_, order + 1.0)) / ((order + 1.0) * (b_ - a_));
      }
      case Kind::TwoPoint:
        return (a_ <= cap ? b_ * std::pow(a_, order) : 0.0) + (c_ <= cap ? (1.0 - b_) * std::pow(c_, order) : 0.0);
    }
    return 0.0;
  }

  /// E X 1{X > floor}; requires a finite mean.
  [[nodiscard]] double upper_mean(double floor) const {
    if (!std::isfinite(mean())) throw ValidationError("upper_mean needs a finite mean (pareto alpha > 1)");
    const double t = std::max(floor, 0.0);
    switch (kind_) {
      case Kind::Pareto:
        return t <= b_ ? mean() : a_ * std::pow(b_, a_) * std::pow(t, 1.0 - a_) / (a_ - 1.0);
      case Kind::Exponential: return std::isinf(t) ? 0.0 : (t + 1.0 / a_) * std::exp(-a_ * t);
      case Kind::Uniform: {
        if (t >= b_) return 0.0;
        const double lo = std::max(t, a_);
        return (b_ * b_ - lo * lo) / (2.0 * (b_ - a_));
      }
      case Kind::TwoPoint: return (a_ > t ? b_ * a_ : 0.0) + (c_ > t ? (1.0 - b_) * c_ : 0.0);
    }
    return 0.0;
  }

  /// E (X - a)^+.
  [[nodiscard]] double partial_expectation(double level) const {
    return upper_mean(level) - std::max(level, 0.0) * tail(level);
  }

  /// E g_{s,t}(X).
  [[nodiscard]] double expected_truncation(const TruncationWindow& w) const {
    return partial_expectation(w.s_lo) - partial_expectation(w.s_lo + w.t_len);
  }

  // Log-space forms taking ln of the threshold; they stay finite where the
  // linear values would overflow.
  [[nodiscard]] double log_tail_at(double log_t) const {
    if (kind_ == Kind::Pareto) {
      const double lx = std::log(b_);
      return log_t <= lx ? 0.0 : a_ * (lx - log_t);
    }
    if (kind_ == Kind::Exponential) {
      const double t = std::exp(log_t);
      return -a_ * t;
    }
    return std::log(tail(std::exp(log_t)));
  }

  [[nodiscard]] double log_truncated_moment_at(double order, double log_cap) const {
    if (kind_ == Kind::Pareto) {
      if (log_cap <= std::log(b_)) return -kInf;
      return pareto_log_truncated(order, log_cap);
    }
    return std::log(truncated_moment(order, std::exp(log_cap)));
  }

  [[nodiscard]] double log_upper_mean_at(double log_floor_value) const {
    if (kind_ == Kind::Pareto) {
      if (!(a_ > 1.0)) throw ValidationError("upper_mean needs a finite mean (pareto alpha > 1)");
      const double lx = std::log(b_);
      if (log_floor_value <= lx) return std::log(mean());
      return std::log(a_ / (a_ - 1.0)) + a_ * lx + (1.0 - a_) * log_floor_value;
    }
    return std::log(upper_mean(std::exp(log_floor_value)));
  }

  /// Text form accepted by `parse`.
  [[nodiscard]] std::string to_string() const {
    switch (kind_) {
      case Kind::Pareto: return "pareto(alpha=" + format_double(a_) + ", xm=" + format_double(b_) + ")";
      case Kind::Exponential: return "exponential(rate=" + format_double(a_) + ")";
      case Kind::Uniform: return "uniform(lo=" + format_double(a_) + ", hi=" + format_double(b_) + ")";
      case Kind::TwoPoint:
        return "two_point(v1=" + format_double(a_) + ", p1=" + format_double(b_) + ", v2=" + format_double(c_) + ")";
    }
    return {};
  }

  /// Parses `name(key=value, ...)`, e.g. `pareto(alpha=1.8, xm=1.0)`.
  /// `degenerate(v=...)` is shorthand for a one-atom two_point law.
  static Marginal parse(const std::string& text);

  friend bool operator==(const Marginal& x, const Marginal& y) {
    return x.kind_ == y.kind_ && x.a_ == y.a_ && x.b_ == y.b_ && x.c_ == y.c_;
  }

 private:
  Marginal(Kind k, double a, double b, double c) : kind_(k), a_(a), b_(b), c_(c) {}

  // ln E X^o 1{X <= cap} for the Pareto law, cap > xm. Near o = alpha the
  // log form alpha xm^alpha ln(cap/xm) replaces the power difference.
  double pareto_log_truncated(double order, double log_cap) const {
    const double lx = std::log(b_);
    const double e = order - a_;
    const double span = log_cap - lx;
    const double base = std::log(a_) + order * lx;  // alpha xm^order
    if (std::fabs(e) < 1e-8) return base + std::log(span);
    // xm^order * alpha * (exp(e * span) - 1) / e
    if (e > 0.0) return base + e * span + std::log(-std::expm1(-e * span)) - std::log(e);
    return base + std::log(-std::expm1(e * span)) - std::log(-e);
  }

  Kind kind_;
  double a_, b_, c_;
};

namespace detail {

inline std::string trim(std::string s) {
  auto ws = [](unsigned char ch) { return std::isspace(ch) != 0; };
  while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && ws(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

inline double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (trim(text.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError(what + ": not a number: '" + text + "'");
}

}  // namespace detail

inline Marginal Marginal::parse(const std::string& raw) {
  const std::string text = detail::trim(raw);
  const auto open = text.find('(');
  if (open == std::string::npos || text.back() != ')') {
    throw ValidationError("marginal spec must look like name(key=value, ...): '" + text + "'");
  }
  const std::string name = detail::trim(text.substr(0, open));
  std::map<std::string, double> args;
  std::string body = text.substr(open + 1, text.size() - open - 2);
  std::size_t pos = 0;
  while (pos <= body.size()) {
    const auto comma = body.find(',', pos);
    const std::string item = detail::trim(body.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (!item.empty()) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ValidationError("marginal argument needs key=value: '" + item + "'");
      const std::string key = detail::trim(item.substr(0, eq));
      if (args.count(key)) throw ValidationError("duplicate marginal argument '" + key + "'");
      args[key] = detail::parse_number(detail::trim(item.substr(eq + 1)), "marginal argument '" + key + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  auto take = [&](const char* key, std::optional<double> fallback = std::nullopt) {
    auto it = args.find(key);
    if (it == args.end()) {
      if (fallback) return *fallback;
      throw ValidationError("marginal '" + name + "' is missing argument '" + key + "'");
    }
    const double v = it->second;
    args.erase(it);
    return v;
  };
  Marginal m = [&] {
    if (name == "pareto") {
      const double alpha = take("alpha");
      return pareto(alpha, take("xm", 1.0));
    }
    if (name == "exponential") return exponential(take("rate", 1.0));
    if (name == "uniform" || name == "bounded_uniform") {
      const double lo = take("lo", 0.0);
      return uniform(lo, take("hi", 1.0));
    }
    if (name == "two_point") {
      const double v1 = take("v1");
      const double p1 = take("p1");
      return two_point(v1, p1, take("v2"));
    }
    if (name == "degenerate") return degenerate(take("v"));
    throw ValidationError("unknown marginal kind '" + name + "'");
  }();
  if (!args.empty()) throw ValidationError("unknown marginal argument '" + args.begin()->first + "' for " + name);
  return m;
}

struct DominationCheck {
  double constant_C = 1.0;
  std::vector<double> t_grid;
  double worst_ratio = 0.0;
  double worst_t = 0.0;
  std::size_t worst_index = 0;
  std::size_t skipped = 0;  // grid points where the dominator tail vanishes
  bool pass = false;
};

/// sup over indices and grid of P{X_n > t} / P{X > t}, compared with C.
inline DominationCheck domination_audit(std::span<const Marginal> per_index, const Marginal& dominator,
                                        double constant_C, std::vector<double> t_grid) {
  if (!(constant_C > 0.0)) throw ValidationError("domination constant C must be positive");
  if (per_index.empty()) throw ValidationError("domination audit needs at least one marginal");
  DominationCheck out;
  out.constant_C = constant_C;
  for (double t : t_grid) {
    if (!(t > 0.0)) throw ValidationError("domination grid must be positive");
    const double denom = dominator.tail(t);
    if (denom <= 0.0) {
      ++out.skipped;
      continue;
    }
    for (std::size_t i = 0; i < per_index.size(); ++i) {
      const double ratio = per_index[i].tail(t) / denom;
      if (ratio > out.worst_ratio) {
        out.worst_ratio = ratio;
        out.worst_t = t;
        out.worst_index = i;
      }
    }
  }
  out.t_grid = std::move(t_grid);
  out.pass = out.worst_ratio <= constant_C;
  return out;
}

}  // namespace nqd
