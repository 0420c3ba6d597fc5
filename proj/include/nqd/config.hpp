#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nqd/dependence.hpp"
#include "nqd/marginals.hpp"
#include "nqd/numeric.hpp"
#include "nqd/scaling.hpp"
#include "nqd/series.hpp"
#include "nqd/simulator.hpp"
#include "nqd/theorem1.hpp"

namespace nqd {

inline constexpr const char* kArtifactVersion = "nqd 1.0.0";

/// Run configuration, read from an INI-style document:
///
///   marginal = pareto(alpha=1.8, xm=1)   ; shorthand for [marginal] law
///   [marginal]     law
///   [dependence]   kind (iid | antithetic_pairs | gaussian_copula | discrete_joint),
///                  band (comma list, gaussian_copula), joint_file (discrete_joint)
///   [scaling]      p, r, s
///   [simulate]     seed, paths, horizon, checkpoints, epsilons
///   [check]        conditions, tolerance, exact_log2, y_max
///   [output]       dir, prefix
///
/// Lines starting with ';' or '#' are comments. Unknown sections and keys
/// are rejected. The marginal is only required by commands that use it.
struct RunConfig {
  std::optional<Marginal> marginal;
  DependenceKind dependence = DependenceKind::Iid;
  std::vector<double> band;
  std::string joint_file;
  double p = 1.5;
  double r = 2.0;
  std::optional<double> s;
  std::uint64_t seed = 0;
  std::uint64_t paths = 200;
  std::uint64_t horizon = 1000000;
  std::vector<std::uint64_t> checkpoints;
  std::vector<double> epsilons{0.1, 0.5, 1.0};
  std::vector<std::string> conditions = theorem1_condition_ids();
  SeriesOptions series;
  std::string output_dir;
  std::string output_prefix = "nqd";
  std::string source = "<config>";

  [[nodiscard]] double resolved_s() const { return s.value_or((2.0 - p) / p); }

  [[nodiscard]] ScalingFamily family() const {
    try {
      return ScalingFamily::make(p, r, resolved_s());
    } catch (const ValidationError& e) {
      throw ValidationError(source + ": scaling: " + e.what());
    }
  }

  [[nodiscard]] const Marginal& require_marginal() const {
    if (!marginal) throw ValidationError(source + ": missing [marginal] section (set marginal.law)");
    return *marginal;
  }

  [[nodiscard]] DependenceModel model() const {
    try {
      switch (dependence) {
        case DependenceKind::Iid: return DependenceModel::iid(require_marginal());
        case DependenceKind::AntitheticPairs: return DependenceModel::antithetic_pairs(require_marginal());
        case DependenceKind::GaussianCopula: return DependenceModel::gaussian_copula(require_marginal(), band);
        case DependenceKind::DiscreteJoint:
          if (joint_file.empty()) throw ValidationError("dependence.joint_file is required for discrete_joint");
          return DependenceModel::discrete_joint(DiscreteJoint::load_csv(joint_file));
      }
    } catch (const ValidationError& e) {
      const std::string what = e.what();
      if (what.rfind(source, 0) == 0) throw;
      throw ValidationError(source + ": dependence: " + what);
    }
    throw ValidationError(source + ": dependence.kind: unsupported");
  }

  [[nodiscard]] SimConfig sim(unsigned threads) const {
    SimConfig c;
    c.model = model();
    c.fam = family();
    c.seed = seed;
    c.paths = paths;
    c.horizon = horizon;
    c.checkpoints = checkpoints;
    c.epsilons = epsilons;
    c.threads = threads;
    try {
      c.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(source + ": " + e.what());
    }
    return c;
  }

  /// Fully resolved document; parse(to_ini()) reproduces this config.
  [[nodiscard]] std::string to_ini() const {
    std::ostringstream os;
    auto list = [](const auto& v, auto fmt) {
      std::string out;
      for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i]);
      return out;
    };
    auto dbl = [](double x) { return format_double(x); };
    auto u64 = [](std::uint64_t x) { return std::to_string(x); };
    auto str = [](const std::string& x) { return x; };
    if (marginal) os << "[marginal]\nlaw = " << marginal->to_string() << "\n";
    os << "[dependence]\nkind = " << to_string(dependence) << "\n";
    if (dependence == DependenceKind::GaussianCopula) os << "band = " << list(band, dbl) << "\n";
    if (dependence == DependenceKind::DiscreteJoint) os << "joint_file = " << joint_file << "\n";
    os << "[scaling]\np = " << dbl(p) << "\nr = " << dbl(r) << "\ns = " << dbl(resolved_s()) << "\n";
    os << "[simulate]\nseed = " << seed << "\npaths = " << paths << "\nhorizon = " << horizon << "\n";
    if (!checkpoints.empty()) os << "checkpoints = " << list(checkpoints, u64) << "\n";
    os << "epsilons = " << list(epsilons, dbl) << "\n";
    os << "[check]\nconditions = " << list(conditions, str) << "\ntolerance = " << dbl(series.tolerance)
       << "\nexact_log2 = " << series.exact_log2 << "\ny_max = " << dbl(series.y_max) << "\n";
    os << "[output]\n";
    if (!output_dir.empty()) os << "dir = " << output_dir << "\n";
    os << "prefix = " << output_prefix << "\n";
    return os.str();
  }

  static RunConfig parse(std::istream& in, const std::string& source_name);

  static RunConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError(path + ": cannot open config file");
    return parse(f, path);
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::uint64_t parse_count(const std::string& text, const std::string& where) {
  const double v = parse_number(text, where);
  if (!(v >= 0.0) || v != std::floor(v) || v > 1.8e19) {
    throw ValidationError(where + ": expected a nonnegative integer, got '" + text + "'");
  }
  return static_cast<std::uint64_t>(v);
}

}  // namespace detail

inline RunConfig RunConfig::parse(std::istream& in, const std::string& source_name) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(source_name + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  static const std::map<std::string, std::set<std::string>> schema{
      {"marginal", {"law"}},
      {"dependence", {"kind", "band", "joint_file"}},
      {"scaling", {"p", "r", "s"}},
      {"simulate", {"seed", "paths", "horizon", "checkpoints", "epsilons"}},
      {"check", {"conditions", "tolerance", "exact_log2", "y_max"}},
      {"output", {"dir", "prefix"}},
  };
  RunConfig c;
  c.source = source_name;
  auto where = [&](const std::string& sec, const std::string& key) { return source_name + ": " + sec + "." + key; };
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      if (name != "marginal") throw ValidationError(source_name + ": unknown top-level key '" + name + "'");
      continue;
    }
    const auto sec = schema.find(name);
    if (sec == schema.end()) throw ValidationError(source_name + ": unknown section [" + name + "]");
    for (const auto& [key, leaf] : node) {
      if (!sec->second.count(key)) throw ValidationError(where(name, key) + ": unknown key");
      const std::string value = detail::trim(leaf.data());
      const std::string at = where(name, key);
      try {
        if (name == "marginal") {
          c.marginal = Marginal::parse(value);
        } else if (name == "dependence") {
          if (key == "kind") {
            if (value == "iid") c.dependence = DependenceKind::Iid;
            else if (value == "antithetic_pairs") c.dependence = DependenceKind::AntitheticPairs;
            else if (value == "gaussian_copula") c.dependence = DependenceKind::GaussianCopula;
            else if (value == "discrete_joint") c.dependence = DependenceKind::DiscreteJoint;
            else throw ValidationError("unknown dependence kind '" + value + "'");
          } else if (key == "band") {
            c.band.clear();
            for (const auto& item : detail::split_list(value)) c.band.push_back(detail::parse_number(item, at));
          } else {
            c.joint_file = value;
          }
        } else if (name == "scaling") {
          const double v = detail::parse_number(value, at);
          (key == "p" ? c.p : key == "r" ? c.r : c.s.emplace()) = v;
        } else if (name == "simulate") {
          if (key == "seed") c.seed = detail::parse_count(value, at);
          else if (key == "paths") c.paths = detail::parse_count(value, at);
          else if (key == "horizon") c.horizon = detail::parse_count(value, at);
          else if (key == "checkpoints") {
            c.checkpoints.clear();
            for (const auto& item : detail::split_list(value)) c.checkpoints.push_back(detail::parse_count(item, at));
          } else {
            c.epsilons.clear();
            for (const auto& item : detail::split_list(value)) c.epsilons.push_back(detail::parse_number(item, at));
          }
        } else if (name == "check") {
          if (key == "conditions") {
            c.conditions = detail::split_list(value);
            for (const auto& id : c.conditions) {
              const auto& ids = theorem1_condition_ids();
              if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
                throw ValidationError("unknown condition '" + id + "'");
              }
            }
          } else if (key == "tolerance") {
            c.series.tolerance = detail::parse_number(value, at);
          } else if (key == "exact_log2") {
            c.series.exact_log2 = static_cast<int>(detail::parse_count(value, at));
          } else {
            c.series.y_max = detail::parse_number(value, at);
          }
        } else {
          (key == "dir" ? c.output_dir : c.output_prefix) = value;
        }
      } catch (const ValidationError& e) {
        const std::string what = e.what();
        throw ValidationError(what.rfind(at, 0) == 0 ? what : at + ": " + what);
      }
    }
  }
  if (auto top = tree.get_child_optional("marginal"); top && top->empty()) {
    if (c.marginal) throw ValidationError(source_name + ": marginal given both as a key and as a section");
    try {
      c.marginal = Marginal::parse(top->data());
    } catch (const ValidationError& e) {
      throw ValidationError(where("marginal", "law") + ": " + e.what());
    }
  }
  (void)c.family();
  try {
    c.series.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(source_name + ": check: " + e.what());
  }
  if (c.output_prefix.empty() || c.output_prefix.find('/') != std::string::npos) {
    throw ValidationError(where("output", "prefix") + ": must be a plain file name stem");
  }
  return c;
}

}  // namespace nqd
