#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "nqd/nqd.hpp"

namespace fs = std::filesystem;
using namespace nqd;

namespace {

constexpr const char* kOutputDirEnv = "NQD_OUTPUT_DIR";

struct Globals {
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

struct Common {
  std::string config;
  std::string out;
};

RunConfig load_config(const Common& c, const Globals& g) {
  RunConfig cfg;
  if (!c.config.empty()) cfg = RunConfig::load(c.config);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

fs::path output_path(const Common& c, const Globals& g, const RunConfig& cfg, const std::string& command) {
  if (!c.out.empty()) return c.out;
  std::string dir = g.out_dir;
  if (dir.empty()) dir = cfg.output_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv(kOutputDirEnv)) dir = env;
  }
  if (dir.empty()) dir = ".";
  return fs::path(dir) / (cfg.output_prefix + "_" + command + ".csv");
}

fs::path sibling(const fs::path& primary, const std::string& suffix) {
  return primary.parent_path() / (primary.stem().string() + "_" + suffix + primary.extension().string());
}

std::string header(const std::string& command, const std::string& resolved) {
  std::ostringstream os;
  os << "# " << kArtifactVersion << "\n# command: " << command << "\n";
  std::istringstream in(resolved);
  for (std::string line; std::getline(in, line);) os << "# " << line << "\n";
  return os.str();
}

void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError(path.string() + ": cannot open for writing");
    f << text;
    f.flush();
    if (!f) throw ValidationError(path.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

void emit(const fs::path& path, const std::string& command, const RunConfig& cfg, const std::string& csv) {
  write_atomic(path, header(command, cfg.to_ini()) + csv);
  std::cout << "wrote " << path.string() << "\n";
}

// Subcommands

void run_sequences(const Common& c, const Globals& g, std::optional<double> p, std::optional<double> r,
                   std::optional<double> s, std::uint64_t n) {
  RunConfig cfg = load_config(c, g);
  if (p) cfg.p = *p;
  if (r) cfg.r = *r;
  if (s) cfg.s = *s;
  if (n == 0) throw ValidationError("--n must be at least 1");
  const auto fam = cfg.family();
  std::ostringstream seq;
  seq << "n,a_n,b_n,c_n,d_n\n";
  for (std::uint64_t i = 1; i <= n; ++i) {
    const double x = static_cast<double>(i);
    seq << i << ',' << format_double(fam.weight_a(x)) << ',' << format_double(fam.normalizer_b(x)) << ','
        << format_double(fam.threshold_c(x)) << ',' << format_double(fam.threshold_d(x)) << '\n';
  }
  const auto profile = MomentInequalityProfile::unit(fam.r);
  std::ostringstream blocks;
  blocks << "k,l_k,m_k,Lambda_k\n";
  for (std::uint64_t k = 1; k <= n && k <= 62; ++k) {
    const double v = std::exp(std::pow(static_cast<double>(k), fam.s));
    if (!(v < kMaxBlockValue)) break;
    blocks << k << ',' << block_l(k, fam.s) << ',' << block_m(k) << ',' << format_double(lambda_capital(k, profile))
           << '\n';
  }
  const auto out = output_path(c, g, cfg, "sequences");
  emit(out, "sequences", cfg, seq.str());
  emit(sibling(out, "blocks"), "sequences", cfg, blocks.str());
}

void run_decompose(const Common& c, const Globals& g, std::uint64_t n) {
  const RunConfig cfg = load_config(c, g);
  const auto fam = cfg.family();
  const Marginal& m = cfg.require_marginal();
  if (n == 0) throw ValidationError("--n must be at least 1");
  std::ostringstream os;
  os << "k,c_k,d_k,EX,EXp,EXpp,EXppp\n";
  for (std::uint64_t k = 1; k <= n; ++k) {
    const double x = static_cast<double>(k);
    const double ck = fam.threshold_c(x);
    const double dk = fam.threshold_d(x);
    const auto mu = component_means(m, ck, dk);
    os << k << ',' << format_double(ck) << ',' << format_double(dk) << ',' << format_double(mu.ex) << ','
       << format_double(mu.ex_prime) << ',' << format_double(mu.ex_dprime) << ',' << format_double(mu.ex_tprime)
       << '\n';
  }
  emit(output_path(c, g, cfg, "decompose"), "decompose", cfg, os.str());
}

void summarize(const std::vector<SeriesDiagnostic>& rows) {
  std::size_t converged = 0;
  for (const auto& d : rows) {
    converged += d.verdict == Verdict::Converged;
    std::cout << d.condition_id << ": " << to_string(d.verdict) << "  estimate " << format_double(d.value_estimate)
              << "  tail " << format_double(d.tail_majorant);
    if (!d.note.empty()) std::cout << "  (" << d.note << ")";
    std::cout << "\n";
  }
  std::cout << converged << " of " << rows.size() << " converged\n";
}

void run_check_theorem1(const Common& c, const Globals& g) {
  const RunConfig cfg = load_config(c, g);
  const auto fam = cfg.family();
  const Marginal& m = cfg.require_marginal();
  std::vector<SeriesDiagnostic> rows;
  for (const auto& id : cfg.conditions) rows.push_back(check_condition(id, m, fam, cfg.series));
  emit(output_path(c, g, cfg, "check-theorem1"), "check-theorem1", cfg, diagnostics_csv(rows));
  summarize(rows);
}

void run_lemma2(const Common& c, const Globals& g) {
  const RunConfig cfg = load_config(c, g);
  const Marginal& m = cfg.require_marginal();
  std::vector<SeriesDiagnostic> rows;
  for (const char* which : {"moment", "tail", "upper_mean"}) rows.push_back(lemma2_series(which, m, cfg.p, cfg.r, cfg.series));
  emit(output_path(c, g, cfg, "lemma2"), "lemma2", cfg, diagnostics_csv(rows));
  summarize(rows);
}

void run_lemma4(const Common& c, const Globals& g) {
  const RunConfig cfg = load_config(c, g);
  const auto fam = cfg.family();
  const Marginal& m = cfg.require_marginal();
  std::vector<SeriesDiagnostic> rows;
  for (const char* which : {"block_moment", "block_tail_log", "block_tail_llog", "block_ratio"}) {
    rows.push_back(lemma4_series(which, m, fam.p, fam.r, fam.s, cfg.series));
  }
  emit(output_path(c, g, cfg, "lemma4"), "lemma4", cfg, diagnostics_csv(rows));
  summarize(rows);
}

void run_lemma3(const Common& c, const Globals& g, QuadratureSpec q, std::optional<double> x) {
  const RunConfig cfg = load_config(c, g);
  std::vector<double> xs;
  if (x) xs.push_back(*x);
  else
    for (int i = 0; i <= 40; ++i) xs.push_back(0.25 * i);
  std::ostringstream os;
  os << "a,b,r,x,value,scaled_value,bound_ratio,abs_error\n";
  for (double xi : xs) {
    q.x = xi;
    const auto res = lemma3_integral(q);
    os << format_double(q.a) << ',' << format_double(q.b) << ',' << format_double(q.r) << ',' << format_double(xi)
       << ',' << format_double(res.value) << ',' << format_double(res.scaled_value) << ','
       << format_double(res.bound_ratio) << ',' << format_double(res.abs_error) << '\n';
  }
  emit(output_path(c, g, cfg, "lemma3"), "lemma3", cfg, os.str());
}

void run_verify_ineq(const Common& c, const Globals& g, double s_lo, double t_len, std::uint64_t dims,
                     std::uint64_t block_size) {
  const RunConfig cfg = load_config(c, g);
  const auto sim = cfg.sim(g.threads);
  if (block_size == 0 || dims == 0 || dims % block_size != 0) {
    throw ValidationError("--dims must be a positive multiple of --block-size");
  }
  BlockLayout layout;
  for (std::uint64_t b = 0; b <= dims; b += block_size) layout.bounds.push_back(b);
  layout.count = layout.bounds.size() - 1;
  const TruncationWindow window(s_lo, t_len);
  std::ostringstream os;
  os << "method,lhs,rhs,lhs_se,rhs_se,ratio,ratio_se\n";
  const auto mc = empirical_moment_inequality(sim, window, cfg.r, layout);
  os << "monte_carlo," << format_double(mc.lhs) << ',' << format_double(mc.rhs) << ',' << format_double(mc.lhs_se)
     << ',' << format_double(mc.rhs_se) << ',' << format_double(mc.ratio) << ',' << format_double(mc.ratio_se)
     << '\n';
  if (sim.model.joint && cfg.r == 2.0 && dims <= sim.model.joint->dims()) {
    const auto ex = moment_inequality_exact(*sim.model.joint, window, layout);
    os << "exact," << format_double(ex.lhs) << ',' << format_double(ex.rhs) << ",0,0,"
       << format_double(ex.rhs > 0.0 ? ex.lhs / ex.rhs : 0.0) << ",0\n";
  }
  emit(output_path(c, g, cfg, "verify-ineq"), "verify-ineq", cfg, os.str());
}

void run_simulate(const Common& c, const Globals& g) {
  const RunConfig cfg = load_config(c, g);
  const auto st = simulate(cfg.sim(g.threads));
  const auto out = output_path(c, g, cfg, "simulate");
  emit(out, "simulate", cfg, quantiles_csv(st));
  emit(sibling(out, "events"), "simulate", cfg, events_csv(st));
}

void run_compare(const Common& c, const Globals& g) {
  const RunConfig cfg = load_config(c, g);
  const auto rows = compare_normalizers(cfg.sim(g.threads));
  emit(output_path(c, g, cfg, "compare"), "compare", cfg, comparison_csv(rows));
}

void add_common(CLI::App* sub, Common& c, bool config_required) {
  auto* opt = sub->add_option("--config", c.config, "Run configuration file")->check(CLI::ExistingFile);
  if (config_required) opt->required();
  sub->add_option("--out", c.out, "Output CSV path (default <dir>/<prefix>_<command>.csv)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical companion for NQD strong laws: sequences, hypothesis checks, lemmas and simulation"};
  app.require_subcommand(1);
  app.footer(std::string("Output directory: --out-dir, then output.dir in the config, then $") + kOutputDirEnv +
             ", then the working directory.\nExit codes: 0 ok, 1 validation error, 2 numeric failure.");
  Globals g;
  app.add_option("--threads", g.threads, "Worker threads for path-level work")->check(CLI::Range(1u, 1024u));
  app.add_option("--seed", g.seed, "Override simulate.seed");
  app.add_option("--out-dir", g.out_dir, "Default output directory");

  Common c;
  std::optional<double> p, r, s, x;
  std::uint64_t n = 100;
  QuadratureSpec q;
  double s_lo = 0.0, t_len = 1.0;
  std::uint64_t dims = 16, block_size = 1;

  auto* seq = app.add_subcommand("sequences", "Tables of a_n, b_n, c_n, d_n and l_k, m_k, Lambda_k");
  add_common(seq, c, false);
  seq->add_option("--p", p, "Exponent p in (1, 2)");
  seq->add_option("--r", r, "Moment order r > p");
  seq->add_option("--s", s, "Block exponent s in (0, 1)");
  seq->add_option("--n", n, "Rows to emit")->capture_default_str();

  auto* dec = app.add_subcommand("decompose", "Thresholds and component means of the truncation split");
  add_common(dec, c, true);
  dec->add_option("--n", n, "Rows to emit")->capture_default_str();

  auto* chk = app.add_subcommand("check-theorem1", "Certify hypotheses (a)-(h)");
  add_common(chk, c, true);
  auto* l2 = app.add_subcommand("lemma2", "Certify the prefix moment sums");
  add_common(l2, c, true);
  auto* l4 = app.add_subcommand("lemma4", "Certify the block sums and the block ratio trend");
  add_common(l4, c, true);

  auto* l3 = app.add_subcommand("lemma3", "Exponential-tail integral on a grid of x");
  add_common(l3, c, false);
  l3->add_option("--a", q.a, "Power a > 0")->capture_default_str();
  l3->add_option("--b", q.b, "Rate b > 0")->capture_default_str();
  l3->add_option("--r", q.r, "Log exponent r")->capture_default_str();
  l3->add_option("--x", x, "Single lower limit (default grid 0, 0.25, ..., 10)");
  l3->add_option("--abs-tol", q.abs_tol, "Absolute tolerance")->capture_default_str();
  l3->add_option("--rel-tol", q.rel_tol, "Relative tolerance")->capture_default_str();

  auto* vin = app.add_subcommand("verify-ineq", "Monte-Carlo moment inequality on truncated block sums");
  add_common(vin, c, true);
  vin->add_option("--s-lo", s_lo, "Window start")->capture_default_str();
  vin->add_option("--t-len", t_len, "Window length")->capture_default_str();
  vin->add_option("--dims", dims, "Variables covered by the blocks")->capture_default_str();
  vin->add_option("--block-size", block_size, "Variables per block")->capture_default_str();

  auto* simc = app.add_subcommand("simulate", "Normalized deviation quantiles and block events");
  add_common(simc, c, true);
  auto* cmp = app.add_subcommand("compare", "Median deviation under b_n and the power normalizer");
  add_common(cmp, c, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*seq) run_sequences(c, g, p, r, s, n);
    else if (*dec) run_decompose(c, g, n);
    else if (*chk) run_check_theorem1(c, g);
    else if (*l2) run_lemma2(c, g);
    else if (*l4) run_lemma4(c, g);
    else if (*l3) run_lemma3(c, g, q, x);
    else if (*vin) run_verify_ineq(c, g, s_lo, t_len, dims, block_size);
    else if (*simc) run_simulate(c, g);
    else if (*cmp) run_compare(c, g);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
