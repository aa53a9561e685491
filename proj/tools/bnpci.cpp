// bnpci — Bayesian nonparametric conditional (in)dependence testing.
//
//   bnpci test   --data f.csv --x a --y b --z c      one test, JSON result
//   bnpci graph  --data f.csv --given c              all pairs, DOT or JSON
//   bnpci synth  --model 1..4 --n N --seed S --out f synthetic benchmark CSV
//   bnpci sweep  --data f.csv --x a --y b --z c --c-grid 0.5,1,2
//
// Exit codes: 0 ok, 2 argument error, 3 data error. BNPCI_THREADS caps the
// worker count for pairwise graphs. Outputs are byte-identical across reruns
// with the same inputs and seed.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bnpci/bnpci.hpp"
#include "bnpci/report.hpp"

namespace {

using bnpci::bftest::TestConfig;
using bnpci::partition::Scheme;

struct ModelFlags {
  double c = 1.0;
  double rho = 0.5;
  double prior_h1 = 0.5;
  std::optional<int> depth;
  Scheme scheme = Scheme::dyadic;
};

void add_model_flags(CLI::App* sub, ModelFlags& f) {
  sub->add_option("--c", f.c, "concentration scale (alpha_j = c j^2)")
      ->capture_default_str();
  sub->add_option("--rho", f.rho, "stop probability of the Z-refinement, (0,1]")
      ->capture_default_str();
  sub->add_option("--prior-h1", f.prior_h1, "prior P(dependent)")
      ->capture_default_str();
  sub->add_option("--depth", f.depth, "partition depth (default ceil(log2 N))");
  sub->add_option("--scheme", f.scheme, "rescaling scheme")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, Scheme>{{"dyadic", Scheme::dyadic},
                                        {"quantile", Scheme::quantile}}))
      ->default_str("dyadic");
}

TestConfig make_config(const ModelFlags& f, std::optional<std::uint64_t> seed) {
  TestConfig cfg;
  cfg.set_c(f.c);
  cfg.rho = f.rho;
  cfg.prior_h1 = f.prior_h1;
  cfg.depth = f.depth;
  cfg.scheme = f.scheme;
  cfg.seed = seed;
  return cfg;
}

bnpci::datahub::RescaleMethod rescale_for(Scheme s) {
  return s == Scheme::quantile ? bnpci::datahub::RescaleMethod::gaussian_cdf
                               : bnpci::datahub::RescaleMethod::minmax;
}

int env_threads() {
  if (const char* s = std::getenv("BNPCI_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(s, &end, 10);
    if (end && *end == '\0' && v > 0) return static_cast<int>(v);
    std::cerr << "warning: ignoring invalid BNPCI_THREADS='" << s << "'\n";
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void print_csv_row(const char* kind, double c, double rho,
                   const bnpci::bftest::TestResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                kind, c, rho, r.log_phi_x, r.log_phi_y, r.log_phi_xy, r.log_bf,
                r.posterior_h1);
  std::cout << buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian nonparametric conditional (in)dependence testing"};
  app.require_subcommand(1);

  // --- test ---
  auto* test = app.add_subcommand("test", "posterior probability that X and Y "
                                          "are dependent given Z");
  std::string t_data, t_x, t_y, t_z, t_format = "json";
  ModelFlags t_flags;
  std::optional<double> t_cx, t_cy, t_cxy;
  std::optional<std::size_t> t_n;
  std::optional<std::uint64_t> t_seed;
  test->add_option("--data", t_data, "input CSV")->required();
  test->add_option("--x", t_x, "X column")->required();
  test->add_option("--y", t_y, "Y column")->required();
  test->add_option("--z", t_z, "conditioning column")->required();
  add_model_flags(test, t_flags);
  test->add_option("--c-x", t_cx, "c for the X|Z model (overrides --c)");
  test->add_option("--c-y", t_cy, "c for the Y|Z model (overrides --c)");
  test->add_option("--c-xy", t_cxy, "c for the XY|Z model (overrides --c)");
  auto* t_seed_opt = test->add_option("--seed", t_seed, "subsample seed");
  test->add_option("--n", t_n, "subsample to N rows (needs --seed)")
      ->needs(t_seed_opt);
  test->add_option("--format", t_format, "output format")
      ->check(CLI::IsMember({"json"}));

  // --- graph ---
  auto* graph = app.add_subcommand("graph", "pairwise dependence graph "
                                            "conditioned on one column");
  std::string g_data, g_given, g_format = "dot";
  std::vector<std::string> g_vars;
  ModelFlags g_flags;
  std::optional<std::size_t> g_n;
  std::optional<std::uint64_t> g_seed;
  graph->add_option("--data", g_data, "input CSV")->required();
  graph->add_option("--given", g_given, "conditioning column")->required();
  graph->add_option("--vars", g_vars, "columns to pair (default: all others)")
      ->delimiter(',');
  add_model_flags(graph, g_flags);
  auto* g_seed_opt = graph->add_option("--seed", g_seed, "subsample seed");
  graph->add_option("--n", g_n, "subsample to N rows (needs --seed)")
      ->needs(g_seed_opt);
  graph->add_option("--format", g_format, "output format")
      ->check(CLI::IsMember({"dot", "json"}));

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark set");
  int s_model = 1;
  std::size_t s_n = 0;
  std::uint64_t s_seed = 0;
  std::string s_out;
  synth->add_option("--model", s_model, "1 all indep, 2 Z-explains, 3 coupled, "
                                        "4 coupled minority")
      ->required()
      ->check(CLI::Range(1, 4));
  synth->add_option("--n", s_n, "rows")->required();
  synth->add_option("--seed", s_seed, "RNG seed")->required();
  synth->add_option("--out", s_out, "output CSV path ('-' for stdout)")->required();

  // --- sweep ---
  auto* sweep = app.add_subcommand("sweep", "evidence over a hyperparameter grid");
  std::string w_data, w_x, w_y, w_z;
  std::vector<double> w_c_grid, w_rho_grid;
  ModelFlags w_flags;
  std::optional<std::size_t> w_n;
  std::optional<std::uint64_t> w_seed;
  sweep->add_option("--data", w_data, "input CSV")->required();
  sweep->add_option("--x", w_x, "X column")->required();
  sweep->add_option("--y", w_y, "Y column")->required();
  sweep->add_option("--z", w_z, "conditioning column")->required();
  sweep->add_option("--c-grid", w_c_grid, "c values")->required()->delimiter(',');
  sweep->add_option("--rho-grid", w_rho_grid, "rho values (default: just --rho)")
      ->delimiter(',');
  add_model_flags(sweep, w_flags);
  auto* w_seed_opt = sweep->add_option("--seed", w_seed, "subsample seed");
  sweep->add_option("--n", w_n, "subsample to N rows (needs --seed)")
      ->needs(w_seed_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    namespace datahub = bnpci::datahub;
    namespace bftest = bnpci::bftest;
    namespace report = bnpci::report;

    if (app.got_subcommand(test)) {
      TestConfig cfg = make_config(t_flags, t_seed);
      if (t_cx) cfg.c_x = *t_cx;
      if (t_cy) cfg.c_y = *t_cy;
      if (t_cxy) cfg.c_xy = *t_cxy;
      bftest::validate(cfg);

      datahub::Dataset ds;
      const std::vector<std::string> cols{t_x, t_y, t_z};
      try {
        ds = datahub::load_csv(t_data, cols, rescale_for(t_flags.scheme));
      } catch (const bnpci::AllRowsDroppedError& e) {
        std::cerr << "warning: all " << e.dropped_rows
                  << " data rows were dropped; reporting the prior\n";
        ds.names = cols;
        ds.columns.assign(cols.size(), {});
        ds.dropped_rows = e.dropped_rows;
      }
      if (t_n) ds = datahub::subsample(ds, *t_n, *t_seed);
      const auto r = bftest::run_test(ds, t_x, t_y, t_z, cfg);
      std::cout << report::to_json(r, ds.dropped_rows).dump(2) << '\n';
      return 0;
    }

    if (app.got_subcommand(graph)) {
      const TestConfig cfg = make_config(g_flags, g_seed);
      bftest::validate(cfg);

      std::vector<std::string> vars = g_vars;
      if (vars.empty()) {
        for (const auto& name : datahub::csv_header(g_data))
          if (name != g_given) vars.push_back(name);
      }
      std::vector<std::string> cols = vars;
      cols.push_back(g_given);
      auto ds = datahub::load_csv(g_data, cols, rescale_for(g_flags.scheme));
      if (g_n) ds = datahub::subsample(ds, *g_n, *g_seed);

      const auto g = bftest::run_pairwise(ds, g_given, vars, cfg, env_threads());
      if (g_format == "json")
        std::cout << report::to_json(g, ds.dropped_rows).dump(2) << '\n';
      else
        std::cout << report::to_dot(g);
      return 0;
    }

    if (app.got_subcommand(synth)) {
      const auto ds = datahub::generate({s_model, s_n, s_seed});
      if (s_out == "-") {
        datahub::write_csv(ds, std::cout);
      } else {
        std::ofstream out(s_out, std::ios::binary);
        if (!out) throw bnpci::DataError("cannot open '" + s_out + "' for writing");
        datahub::write_csv(ds, out);
        if (!out.flush()) throw bnpci::DataError("short write to '" + s_out + "'");
      }
      return 0;
    }

    if (app.got_subcommand(sweep)) {
      std::vector<double> rho_grid = w_rho_grid;
      if (rho_grid.empty()) rho_grid.push_back(w_flags.rho);
      for (double c : w_c_grid) {
        TestConfig probe = make_config(w_flags, w_seed);
        probe.set_c(c);
        bftest::validate(probe);
      }
      for (double rho : rho_grid) {
        TestConfig probe = make_config(w_flags, w_seed);
        probe.rho = rho;
        bftest::validate(probe);
      }

      const std::vector<std::string> w_cols{w_x, w_y, w_z};
      auto ds = datahub::load_csv(w_data, w_cols, rescale_for(w_flags.scheme));
      if (w_n) ds = datahub::subsample(ds, *w_n, *w_seed);

      const auto run_at = [&](double c, double rho) {
        TestConfig cfg = make_config(w_flags, w_seed);
        cfg.set_c(c);
        cfg.rho = rho;
        return bftest::run_test(ds, w_x, w_y, w_z, cfg);
      };

      std::cout << "kind,c,rho,log_phi_x,log_phi_y,log_phi_xy,log_bf,"
                   "posterior_h1\n";
      for (double c : w_c_grid)
        for (double rho : rho_grid) print_csv_row("grid", c, rho, run_at(c, rho));

      // argmax per constituent model over the c grid, at the base rho
      std::vector<bftest::TestResult> base;
      base.reserve(w_c_grid.size());
      for (double c : w_c_grid) base.push_back(run_at(c, w_flags.rho));
      const auto argmax = [&](auto&& phi_of) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < base.size(); ++i) {
          const double cur = phi_of(base[i]), inc = phi_of(base[best]);
          if (cur > inc || (cur == inc && w_c_grid[i] < w_c_grid[best])) best = i;
        }
        return best;
      };
      const std::size_t bx = argmax([](const auto& r) { return r.log_phi_x; });
      const std::size_t by = argmax([](const auto& r) { return r.log_phi_y; });
      const std::size_t bxy = argmax([](const auto& r) { return r.log_phi_xy; });
      print_csv_row("argmax_x", w_c_grid[bx], w_flags.rho, base[bx]);
      print_csv_row("argmax_y", w_c_grid[by], w_flags.rho, base[by]);
      print_csv_row("argmax_xy", w_c_grid[bxy], w_flags.rho, base[bxy]);
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const bnpci::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
