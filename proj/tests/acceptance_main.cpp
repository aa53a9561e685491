// End-to-end gate over the library's released claims. Each criterion prints
// one [PASS]/[FAIL] line with its pinned tolerance; the process exit status
// is the number of failed criteria, so CTest fails if any claim regresses.

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bnpci/bftest.hpp"
#include "bnpci/condopt.hpp"
#include "bnpci/datahub.hpp"
#include "bnpci/partition.hpp"
#include "bnpci/tpt.hpp"
#include "json.hpp"
#include "support/oracle.hpp"
#include "support/proc.hpp"
#include "support/tempfile.hpp"

namespace {

using bnpci::partition::PartitionTree;
using bnpci::partition::Point;
using Clock = std::chrono::steady_clock;

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Relative gap in log space, with an absolute floor of 1 so values near zero
// (empty/singleton datasets give exactly 0) compare on an absolute scale.
double rel_gap(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

bool bitwise_equal(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %2d %-28s %s\n", pass ? "PASS" : "FAIL", id, name,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1fs", s);
  return buf;
}

// 1. The closed form and the telescoping form of the truncated-Polya-tree
//    marginal likelihood agree to 1e-10 relative on 200 randomized datasets
//    (N <= 50, depth <= 6, 1-D and 2-D, c in {0.5, 1, 2}), in under 10 s.
void criterion_formula_cross_check() {
  const auto t0 = Clock::now();
  bnpci::datahub::Rng rng(9001);
  const double cs[] = {0.5, 1.0, 2.0};
  int agree = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = rng.below(51);
    const int depth = 1 + static_cast<int>(rng.below(6));
    const bnpci::tpt::TptParams params{cs[rep % 3], depth};
    double tele = 0.0, closed = 0.0;
    if (rep % 2 == 0) {
      std::vector<Point<1>> pts(n);
      for (auto& p : pts) p = {rng.uniform01()};
      auto tree = PartitionTree<1>::dyadic(depth);
      if (rep % 4 == 2) tree = tree.separating_prune(pts);
      tele = bnpci::tpt::log_marginal_likelihood_telescoping(
          params, tree, std::span<const Point<1>>(pts));
      closed = bnpci::tpt::log_marginal_likelihood_closed_form(
          params, tree, std::span<const Point<1>>(pts));
    } else {
      std::vector<Point<2>> pts(n);
      for (auto& p : pts) p = {rng.uniform01(), rng.uniform01()};
      auto tree = PartitionTree<2>::dyadic(depth);
      if (rep % 4 == 3) tree = tree.separating_prune(pts);
      tele = bnpci::tpt::log_marginal_likelihood_telescoping(
          params, tree, std::span<const Point<2>>(pts));
      closed = bnpci::tpt::log_marginal_likelihood_closed_form(
          params, tree, std::span<const Point<2>>(pts));
    }
    const double gap = rel_gap(tele, closed);
    worst = std::max(worst, gap);
    if (gap <= 1e-10) ++agree;
  }
  const double dt = seconds_since(t0);
  std::ostringstream os;
  os << agree << "/200 datasets within 1e-10 rel (worst gap " << worst << "); "
     << fmt_seconds(dt) << " (limit 10s)";
  report(1, "marginal-likelihood forms", agree == 200 && dt < 10.0, os.str());
}

// 2. The conditional recursion matches brute-force enumeration over every
//    stopping configuration to 1e-12 relative on 100 randomized problems
//    with Z-tree depth <= 3, in under 30 s.
void criterion_recursion_vs_enumeration() {
  const auto t0 = Clock::now();
  bnpci::datahub::Rng rng(9002);
  const double rhos[] = {0.3, 0.5, 0.9};
  const double cs[] = {0.5, 1.0, 2.0};
  int agree = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int jz = 1 + static_cast<int>(rng.below(3));
    const int jr = 1 + static_cast<int>(rng.below(3));
    const std::size_t n = 2 + rng.below(23);
    const double rho = rhos[rep % 3];
    std::vector<double> z(n);
    for (auto& v : z) v = rng.uniform01();
    auto z_tree = PartitionTree<1>::dyadic(jz);
    if (rep % 2 == 1) {
      std::vector<Point<1>> zp(n);
      for (std::size_t i = 0; i < n; ++i) zp[i] = {z[i]};
      z_tree = z_tree.separating_prune(zp);
    }
    double got = 0.0, want = 0.0;
    if (rep % 3 == 2) {
      std::vector<Point<2>> r(n);
      for (auto& p : r) p = {rng.uniform01(), rng.uniform01()};
      const auto spec = bnpci::condopt::make_spec<2>({cs[rep % 2], jr}, z_tree, rho);
      got = bnpci::condopt::log_phi(spec, z, std::span<const Point<2>>(r)).first;
      want = oracle::enumerate_phi(spec, z, std::span<const Point<2>>(r));
    } else {
      std::vector<Point<1>> r(n);
      for (auto& p : r) p = {rng.uniform01()};
      const auto spec = bnpci::condopt::make_spec<1>({cs[rep % 3], jr}, z_tree, rho);
      got = bnpci::condopt::log_phi(spec, z, std::span<const Point<1>>(r)).first;
      want = oracle::enumerate_phi(spec, z, std::span<const Point<1>>(r));
    }
    const double gap = rel_gap(got, want);
    worst = std::max(worst, gap);
    if (gap <= 1e-12) ++agree;
  }
  const double dt = seconds_since(t0);
  std::ostringstream os;
  os << agree << "/100 problems within 1e-12 rel (worst gap " << worst << "); "
     << fmt_seconds(dt) << " (limit 30s)";
  report(2, "recursion vs enumeration", agree == 100 && dt < 30.0, os.str());
}

// 3. Both marginal-likelihood forms match the per-node conjugate oracle to
//    1e-10 on 100 randomized problems, and the two-point hand value
//    logML({0.3, 0.7}; depth 1, c 1) equals log(2/3).
void criterion_conjugate_oracle() {
  bnpci::datahub::Rng rng(9003);
  const double cs[] = {0.5, 1.0, 2.0};
  int agree = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = rng.below(31);
    const double c = cs[rep % 3];
    double tele = 0.0, closed = 0.0, want = 0.0;
    if (rep % 2 == 0) {
      const int depth = 1 + static_cast<int>(rng.below(6));
      const bnpci::tpt::TptParams params{c, depth};
      std::vector<Point<1>> pts(n);
      for (auto& p : pts) p = {rng.uniform01()};
      auto tree = PartitionTree<1>::dyadic(depth);
      if (rep % 4 == 2) tree = tree.separating_prune(pts);
      tele = bnpci::tpt::log_marginal_likelihood_telescoping(
          params, tree, std::span<const Point<1>>(pts));
      closed = bnpci::tpt::log_marginal_likelihood_closed_form(
          params, tree, std::span<const Point<1>>(pts));
      want = oracle::node_conjugate_ml(params, tree, std::span<const Point<1>>(pts));
    } else {
      const int depth = 1 + static_cast<int>(rng.below(4));
      const bnpci::tpt::TptParams params{c, depth};
      std::vector<Point<2>> pts(n);
      for (auto& p : pts) p = {rng.uniform01(), rng.uniform01()};
      auto tree = PartitionTree<2>::dyadic(depth);
      if (rep % 4 == 3) tree = tree.separating_prune(pts);
      tele = bnpci::tpt::log_marginal_likelihood_telescoping(
          params, tree, std::span<const Point<2>>(pts));
      closed = bnpci::tpt::log_marginal_likelihood_closed_form(
          params, tree, std::span<const Point<2>>(pts));
      want = oracle::node_conjugate_ml(params, tree, std::span<const Point<2>>(pts));
    }
    const double gap = std::max(rel_gap(tele, want), rel_gap(closed, want));
    worst = std::max(worst, gap);
    if (gap <= 1e-10) ++agree;
  }
  const std::vector<Point<1>> hand = {{0.3}, {0.7}};
  const double got = bnpci::tpt::log_marginal_likelihood_telescoping(
      bnpci::tpt::TptParams{1.0, 1}, PartitionTree<1>::dyadic(1),
      std::span<const Point<1>>(hand));
  const double hand_gap = std::abs(got - std::log(2.0 / 3.0));
  std::ostringstream os;
  os << agree << "/100 problems within 1e-10 rel (worst gap " << worst
     << "); hand value log(2/3) off by " << hand_gap;
  report(3, "conjugate-node oracle", agree == 100 && hand_gap <= 1e-10, os.str());
}

// 4. With zero or one usable row and equal hypothesis priors the reported
//    posterior is exactly 0.5 (the prior), bit for bit.
void criterion_prior_reversion() {
  bnpci::bftest::TestConfig cfg;
  const std::vector<double> none;
  const std::vector<double> one_x = {0.4}, one_y = {0.6}, one_z = {0.5};
  bool ok = true;
  const auto r0 = bnpci::bftest::run_test(none, none, none, "x", "y", "z", cfg);
  ok = ok && r0.posterior_h1 == 0.5 && r0.log_bf == 0.0;
  const auto r1 = bnpci::bftest::run_test(one_x, one_y, one_z, "x", "y", "z", cfg);
  ok = ok && r1.posterior_h1 == 0.5 && r1.log_bf == 0.0;
  bnpci::bftest::TestConfig other;
  other.set_c(2.0);
  other.rho = 0.7;
  const auto r2 = bnpci::bftest::run_test(one_x, one_y, one_z, "x", "y", "z", other);
  ok = ok && r2.posterior_h1 == 0.5 && r2.log_bf == 0.0;
  std::ostringstream os;
  os << "N=0 and N=1 give posterior " << r0.posterior_h1 << ", " << r1.posterior_h1
     << ", " << r2.posterior_h1 << " (need exactly 0.5)";
  report(4, "prior reversion at N<=1", ok, os.str());
}

double g_model3_median_large = 0.0;  // shared with the Occam-tendency check

// 5. At N = 10^4 with defaults (c 1, rho 0.5, depth = ceil(log2 N)) the
//    median posterior over seeds 1..20 is < 0.05 for the conditionally
//    independent generators (models 1-2) and > 0.95 for the conditionally
//    dependent ones (models 3-4); every single run finishes in < 60 s.
void criterion_large_sample_consistency() {
  const bnpci::bftest::TestConfig cfg;
  std::array<double, 4> med{};
  double max_run = 0.0;
  for (int model = 1; model <= 4; ++model) {
    std::vector<double> post;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto ds = bnpci::datahub::generate({model, 10000, seed});
      const auto t0 = Clock::now();
      const auto r = bnpci::bftest::run_test(ds, "x", "y", "z", cfg);
      max_run = std::max(max_run, seconds_since(t0));
      post.push_back(r.posterior_h1);
    }
    med[model - 1] = median(post);
  }
  g_model3_median_large = med[2];
  const bool ok = med[0] < 0.05 && med[1] < 0.05 && med[2] > 0.95 &&
                  med[3] > 0.95 && max_run < 60.0;
  std::ostringstream os;
  os << "N=10^4 medians over 20 seeds: m1=" << med[0] << " m2=" << med[1]
     << " m3=" << med[2] << " m4=" << med[3]
     << " (need <0.05, <0.05, >0.95, >0.95); slowest run "
     << fmt_seconds(max_run) << " (limit 60s)";
  report(5, "consistency at N=10^4", ok, os.str());
}

// 6. Small samples lean toward independence: for model 3 the median posterior
//    over 50 seeds at N = 100 sits below its N = 10^4 value.
void criterion_small_sample_occam() {
  const bnpci::bftest::TestConfig cfg;
  std::vector<double> post;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto ds = bnpci::datahub::generate({3, 100, seed});
    post.push_back(bnpci::bftest::run_test(ds, "x", "y", "z", cfg).posterior_h1);
  }
  const double small = median(post);
  const bool ok = small < g_model3_median_large;
  std::ostringstream os;
  os << "model-3 median posterior " << small << " at N=100 vs "
     << g_model3_median_large << " at N=10^4 (need strictly smaller)";
  report(6, "small-sample lean to H0", ok, os.str());
}

// 7. With stop probability 1 the conditional evidence collapses bitwise to
//    the unconditional marginal likelihood of the pooled responses.
void criterion_rho_collapse() {
  bnpci::datahub::Rng rng(9007);
  int agree = 0;
  const int reps = 20;
  for (int rep = 0; rep < reps; ++rep) {
    const int jz = 1 + static_cast<int>(rng.below(3));
    const int jr = 1 + static_cast<int>(rng.below(3));
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> z(n);
    for (auto& v : z) v = rng.uniform01();
    auto z_tree = PartitionTree<1>::dyadic(jz);
    if (rep % 2 == 1) {
      std::vector<Point<1>> zp(n);
      for (std::size_t i = 0; i < n; ++i) zp[i] = {z[i]};
      z_tree = z_tree.separating_prune(zp);
    }
    bool same = false;
    if (rep % 3 == 2) {
      std::vector<Point<2>> r(n);
      for (auto& p : r) p = {rng.uniform01(), rng.uniform01()};
      const auto spec = bnpci::condopt::make_spec<2>({1.0, jr}, z_tree, 1.0);
      const double phi =
          bnpci::condopt::log_phi(spec, z, std::span<const Point<2>>(r)).first;
      const double ml = bnpci::tpt::log_marginal_likelihood_telescoping(
          spec.response_params, spec.response_tree, std::span<const Point<2>>(r));
      same = bitwise_equal(phi, ml);
    } else {
      std::vector<Point<1>> r(n);
      for (auto& p : r) p = {rng.uniform01()};
      const auto spec = bnpci::condopt::make_spec<1>({1.0, jr}, z_tree, 1.0);
      const double phi =
          bnpci::condopt::log_phi(spec, z, std::span<const Point<1>>(r)).first;
      const double ml = bnpci::tpt::log_marginal_likelihood_telescoping(
          spec.response_params, spec.response_tree, std::span<const Point<1>>(r));
      same = bitwise_equal(phi, ml);
    }
    if (same) ++agree;
  }
  std::ostringstream os;
  os << agree << "/" << reps << " problems collapse bitwise at rho=1";
  report(7, "rho=1 collapse", agree == reps, os.str());
}

// 8. Swapping the X and Y columns leaves the log Bayes factor bitwise
//    unchanged across 50 randomized runs.
void criterion_swap_symmetry() {
  const double cs[] = {0.5, 1.0, 2.0};
  const double rhos[] = {0.5, 0.8};
  int agree = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto ds = bnpci::datahub::generate(
        {1 + rep % 4, 30 + static_cast<std::size_t>(rep) * 3,
         static_cast<std::uint64_t>(2000 + rep)});
    bnpci::bftest::TestConfig cfg;
    cfg.set_c(cs[rep % 3]);
    cfg.rho = rhos[rep % 2];
    const auto a = bnpci::bftest::run_test(ds, "x", "y", "z", cfg);
    const auto b = bnpci::bftest::run_test(ds, "y", "x", "z", cfg);
    if (bitwise_equal(a.log_bf, b.log_bf) &&
        bitwise_equal(a.posterior_h1, b.posterior_h1))
      ++agree;
  }
  std::ostringstream os;
  os << agree << "/50 swapped runs leave log BF bitwise unchanged";
  report(8, "X/Y swap symmetry", agree == 50, os.str());
}

// 9. Stop-probability insensitivity: at N = 10^3 on models 2 and 3, each
//    evidence term moves less over rho in {0.3..0.7} than over {0.05,0.5,0.95}.
void criterion_rho_insensitivity() {
  const std::vector<double> narrow = {0.3, 0.4, 0.5, 0.6, 0.7};
  const std::vector<double> wide = {0.05, 0.5, 0.95};
  bool ok = true;
  std::ostringstream os;
  for (int model : {2, 3}) {
    const auto ds = bnpci::datahub::generate({model, 1000, 7});
    const auto spread = [&](const std::vector<double>& rhos) {
      std::array<double, 3> lo{}, hi{};
      lo.fill(std::numeric_limits<double>::infinity());
      hi.fill(-std::numeric_limits<double>::infinity());
      for (double rho : rhos) {
        bnpci::bftest::TestConfig cfg;
        cfg.rho = rho;
        const auto r = bnpci::bftest::run_test(ds, "x", "y", "z", cfg);
        const std::array<double, 3> phi = {r.log_phi_x, r.log_phi_y, r.log_phi_xy};
        for (int k = 0; k < 3; ++k) {
          lo[k] = std::min(lo[k], phi[k]);
          hi[k] = std::max(hi[k], phi[k]);
        }
      }
      return std::array<double, 3>{hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]};
    };
    const auto ns = spread(narrow);
    const auto ws = spread(wide);
    for (int k = 0; k < 3; ++k) ok = ok && ns[k] < ws[k];
    os << "m" << model << " spreads narrow/wide: x " << ns[0] << "/" << ws[0]
       << ", y " << ns[1] << "/" << ws[1] << ", xy " << ns[2] << "/" << ws[2]
       << (model == 2 ? "; " : "");
  }
  report(9, "rho insensitivity", ok, os.str());
}

// 10. Graph workflow through the installed executable: five variables give
//     exactly the 10 unordered pairs in JSON, and the DOT view shows exactly
//     the pairs whose posterior is >= 0.005, labelled with two decimals.
void criterion_graph_workflow() {
  using bnpci::datahub::Dataset;
  using bnpci::datahub::RescaleMethod;
  const std::size_t n = 10000;
  const auto m3 = bnpci::datahub::generate({3, n, 401});
  bnpci::datahub::Rng rng(402);
  Dataset ds;
  ds.names = {"a", "b", "c", "d", "e", "z"};
  ds.columns.assign(6, {});
  for (std::size_t i = 0; i < n; ++i) {
    const double z = m3.columns[2][i];
    ds.columns[0].push_back(z * z);            // deterministic in z
    ds.columns[1].push_back(std::sqrt(z));     // deterministic in z
    ds.columns[2].push_back(m3.columns[0][i]); // coupled to d given z
    ds.columns[3].push_back(m3.columns[1][i]);
    ds.columns[4].push_back(rng.uniform01());  // free noise
    ds.columns[5].push_back(z);
  }
  ds.rescale.assign(6, {RescaleMethod::minmax, 0.0, 1.0});
  std::ostringstream csv;
  bnpci::datahub::write_csv(ds, csv);
  const testutil::TempFile file("acceptance_graph.csv", csv.str());

  const std::string exe = proc::quote(BNPCI_EXE_PATH);
  const std::string base =
      exe + " graph --data " + proc::quote(file.str()) + " --given z";
  const auto js = proc::run(base + " --format json");
  const auto dot = proc::run(base + " --format dot");

  bool ok = js.exit_code == 0 && dot.exit_code == 0;
  std::size_t n_pairs = 0, n_shown = 0, n_hidden = 0;
  bool edges_match = false, labels_match = true;
  if (ok) {
    const auto doc = nlohmann::json::parse(js.output);
    n_pairs = doc.at("pairs").size();
    ok = ok && n_pairs == 10;

    std::set<std::pair<std::string, std::string>> want_pairs;
    const std::vector<std::string> vars = {"a", "b", "c", "d", "e"};
    for (std::size_t i = 0; i < vars.size(); ++i)
      for (std::size_t j = i + 1; j < vars.size(); ++j)
        want_pairs.insert({vars[i], vars[j]});

    std::set<std::pair<std::string, std::string>> got_pairs, want_edges;
    std::vector<std::pair<std::pair<std::string, std::string>, double>> shown;
    for (const auto& p : doc.at("pairs")) {
      const std::pair<std::string, std::string> key = {p.at("x"), p.at("y")};
      got_pairs.insert(key);
      const double post = p.at("posterior_h1");
      if (post >= doc.at("threshold").get<double>()) {
        want_edges.insert(key);
        shown.push_back({key, post});
      }
    }
    ok = ok && got_pairs == want_pairs;

    std::set<std::pair<std::string, std::string>> dot_edges;
    std::istringstream lines(dot.output);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.find(" -- ") == std::string::npos) continue;
      std::vector<std::string> quoted;
      for (std::size_t at = line.find('"'); at != std::string::npos;) {
        const std::size_t end = line.find('"', at + 1);
        if (end == std::string::npos) break;
        quoted.push_back(line.substr(at + 1, end - at - 1));
        at = line.find('"', end + 1);
      }
      if (quoted.size() >= 2) dot_edges.insert({quoted[0], quoted[1]});
      for (const auto& s : shown) {
        if (quoted.size() >= 3 &&
            std::pair{quoted[0], quoted[1]} == s.first) {
          char want_label[16];
          std::snprintf(want_label, sizeof want_label, "%.2f", s.second);
          labels_match = labels_match && quoted[2] == want_label;
        }
      }
    }
    edges_match = dot_edges == want_edges;
    n_shown = want_edges.size();
    n_hidden = n_pairs - n_shown;
    ok = ok && edges_match && labels_match && n_shown >= 1 && n_hidden >= 1;
  }
  std::ostringstream os;
  os << n_pairs << " JSON pairs (need 10); DOT shows " << n_shown
     << " edge(s), hides " << n_hidden
     << " below 0.005 threshold (edge sets " << (edges_match ? "" : "DO NOT ")
     << "match, labels " << (labels_match ? "match)" : "DO NOT match)");
  report(10, "graph workflow via CLI", ok, os.str());
}

template <typename Fn>
void guarded(int id, const char* name, Fn fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  std::printf("acceptance gate: %s\n", BNPCI_EXE_PATH);
  guarded(1, "marginal-likelihood forms", criterion_formula_cross_check);
  guarded(2, "recursion vs enumeration", criterion_recursion_vs_enumeration);
  guarded(3, "conjugate-node oracle", criterion_conjugate_oracle);
  guarded(4, "prior reversion at N<=1", criterion_prior_reversion);
  guarded(5, "consistency at N=10^4", criterion_large_sample_consistency);
  guarded(6, "small-sample lean to H0", criterion_small_sample_occam);
  guarded(7, "rho=1 collapse", criterion_rho_collapse);
  guarded(8, "X/Y swap symmetry", criterion_swap_symmetry);
  guarded(9, "rho insensitivity", criterion_rho_insensitivity);
  guarded(10, "graph workflow via CLI", criterion_graph_workflow);
  std::printf("%d/10 criteria passed\n", 10 - g_failures);
  return g_failures;
}
