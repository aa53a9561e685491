#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "condopt.hpp"
#include "datahub.hpp"
#include "errors.hpp"
#include "partition.hpp"

// The conditional (in)dependence test. Three conditional evidences share one
// Z-partition:
//
//   log BF = log Phi_X|Z + log Phi_Y|Z - log Phi_XY|Z
//
// (positive favors conditional independence) and
//
//   P(H1 | data) = 1 / (1 + exp(log BF) * P(H0)/P(H1)).
//
// All columns must already live on [0,1]; datahub handles rescaling.

namespace bnpci::bftest {

using partition::Point;
using partition::Scheme;

enum class Model { x_given_z, y_given_z, xy_given_z };

struct TestConfig {
  double c_x = 1.0;  // concentration scale per constituent model
  double c_y = 1.0;
  double c_xy = 1.0;
  double rho = 0.5;       // stop probability of the Z-refinement, (0,1]
  double prior_h1 = 0.5;  // P(dependent); P(independent) = 1 - prior_h1
  std::optional<int> depth;  // overrides the ceil(log2 N) depth rule everywhere
  Scheme scheme = Scheme::dyadic;          // provenance: how columns were rescaled
  std::optional<std::uint64_t> seed;       // provenance: subsample seed

  void set_c(double c) { c_x = c_y = c_xy = c; }
};

struct TestResult {
  double log_phi_x = 0.0;
  double log_phi_y = 0.0;
  double log_phi_xy = 0.0;
  double log_bf = 0.0;
  double posterior_h1 = 0.5;
  // provenance
  double prior_h0 = 0.5, prior_h1 = 0.5;
  double c_x = 1.0, c_y = 1.0, c_xy = 1.0, rho = 0.5;
  int depth_z = 1, depth_response = 1;
  Scheme scheme = Scheme::dyadic;
  std::size_t n = 0;
  std::string x_name, y_name, z_name;
  std::optional<std::uint64_t> seed;
};

// Depth rule: ceil(log2 n), at least 1.
inline int default_depth(std::size_t n) {
  return n <= 2 ? 1 : static_cast<int>(std::bit_width(n - 1));
}

inline void validate(const TestConfig& cfg) {
  for (double c : {cfg.c_x, cfg.c_y, cfg.c_xy})
    if (!(c > 0.0) || !std::isfinite(c))
      throw std::invalid_argument("TestConfig: c must be finite and > 0");
  if (!(cfg.rho > 0.0) || !(cfg.rho <= 1.0))
    throw std::invalid_argument("TestConfig: rho must lie in (0, 1]");
  if (!(cfg.prior_h1 > 0.0) || !(cfg.prior_h1 < 1.0))
    throw std::invalid_argument("TestConfig: prior_h1 must lie in (0, 1)");
  if (cfg.depth &&
      (*cfg.depth < 1 || *cfg.depth > partition::PartitionTree<2>::max_supported_depth))
    throw std::invalid_argument("TestConfig: depth out of range");
}

// Stable logistic transform of the Bayes factor. t = 0 with equal priors maps
// to exactly 0.5.
inline double posterior_h1_from_log_bf(double log_bf, double prior_h1) {
  if (!(prior_h1 > 0.0) || !(prior_h1 < 1.0))
    throw std::invalid_argument("posterior_h1_from_log_bf: prior_h1 in (0,1)");
  const double t = log_bf + (std::log(1.0 - prior_h1) - std::log(prior_h1));
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

namespace detail {

inline void check_unit_column(std::span<const double> col, const std::string& name) {
  for (double v : col)
    if (!(v >= 0.0 && v <= 1.0))
      throw DataError("column '" + name + "' has values outside [0,1]; rescale first");
}

template <int D>
double conditional_log_phi(double c, int depth, const partition::PartitionTree<1>& z_tree,
                           double rho, std::span<const double> z,
                           std::span<const Point<D>> responses) {
  const condopt::CondModelSpec<D> spec{
      tpt::TptParams{c, depth}, partition::PartitionTree<D>::dyadic(depth), z_tree, rho};
  return condopt::log_phi<D>(spec, z, responses).first;
}

inline std::vector<Point<1>> as_points(std::span<const double> col) {
  std::vector<Point<1>> out(col.size());
  for (std::size_t i = 0; i < col.size(); ++i) out[i] = {col[i]};
  return out;
}

inline std::vector<Point<2>> as_points(std::span<const double> a,
                                       std::span<const double> b) {
  std::vector<Point<2>> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = {a[i], b[i]};
  return out;
}

inline partition::PartitionTree<1> pruned_z_tree(std::span<const double> z, int depth) {
  const auto zp = as_points(z);
  return partition::PartitionTree<1>::dyadic(depth).separating_prune(
      std::span<const Point<1>>(zp));
}

// Run fn(0..n-1) on up to `threads` workers; results must be written to
// per-index slots so the outcome does not depend on scheduling.
template <typename Fn>
void for_each_index(std::size_t n, int threads, Fn&& fn) {
  const int workers =
      std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

inline TestResult run_test(std::span<const double> x, std::span<const double> y,
                           std::span<const double> z, const std::string& x_name,
                           const std::string& y_name, const std::string& z_name,
                           const TestConfig& cfg) {
  validate(cfg);
  if (x.size() != y.size() || x.size() != z.size())
    throw DataError("run_test: columns must have equal length");
  detail::check_unit_column(x, x_name);
  detail::check_unit_column(y, y_name);
  detail::check_unit_column(z, z_name);

  const std::size_t n = x.size();
  const int depth = cfg.depth.value_or(default_depth(n));

  TestResult r;
  r.prior_h1 = cfg.prior_h1;
  r.prior_h0 = 1.0 - cfg.prior_h1;
  r.c_x = cfg.c_x;
  r.c_y = cfg.c_y;
  r.c_xy = cfg.c_xy;
  r.rho = cfg.rho;
  r.depth_z = depth;
  r.depth_response = depth;
  r.scheme = cfg.scheme;
  r.n = n;
  r.x_name = x_name;
  r.y_name = y_name;
  r.z_name = z_name;
  r.seed = cfg.seed;

  if (n > 0) {
    const auto z_tree = detail::pruned_z_tree(z, depth);
    const auto xp = detail::as_points(x);
    const auto yp = detail::as_points(y);
    const auto xyp = detail::as_points(x, y);
    r.log_phi_x = detail::conditional_log_phi<1>(cfg.c_x, depth, z_tree, cfg.rho, z,
                                                 std::span<const Point<1>>(xp));
    r.log_phi_y = detail::conditional_log_phi<1>(cfg.c_y, depth, z_tree, cfg.rho, z,
                                                 std::span<const Point<1>>(yp));
    r.log_phi_xy = detail::conditional_log_phi<2>(cfg.c_xy, depth, z_tree, cfg.rho, z,
                                                  std::span<const Point<2>>(xyp));
  }
  r.log_bf = r.log_phi_x + r.log_phi_y - r.log_phi_xy;
  r.posterior_h1 = posterior_h1_from_log_bf(r.log_bf, cfg.prior_h1);
  return r;
}

inline TestResult run_test(const datahub::Dataset& ds, const std::string& x_name,
                           const std::string& y_name, const std::string& z_name,
                           const TestConfig& cfg) {
  return run_test(ds.column(x_name), ds.column(y_name), ds.column(z_name), x_name,
                  y_name, z_name, cfg);
}

struct DependenceGraph {
  std::vector<std::string> vars;  // sorted
  std::string given;
  double threshold = 0.005;  // display cutoff on posterior_h1 (inclusive)
  struct PairResult {
    std::string a, b;  // a < b
    TestResult result;
  };
  std::vector<PairResult> pairs;  // sorted by (a, b)
};

// All unordered pairs of vars, each tested conditionally on `given` over one
// shared Z-partition. Marginal evidences are computed once per variable
// (using c_x; a per-role c would break pair symmetry) and reused across
// pairs, which leaves every reported number bitwise identical to a standalone
// run_test of that pair.
inline DependenceGraph run_pairwise(const datahub::Dataset& ds, const std::string& given,
                                    std::span<const std::string> vars,
                                    const TestConfig& cfg, int threads = 1) {
  validate(cfg);
  std::vector<std::string> names(vars.begin(), vars.end());
  if (names.empty()) {
    for (const auto& n : ds.names)
      if (n != given) names.push_back(n);
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end())
    throw std::invalid_argument("run_pairwise: duplicate variable names");
  if (names.size() < 2)
    throw std::invalid_argument("run_pairwise: need at least two variables");
  for (const auto& n : names)
    if (n == given) throw std::invalid_argument("run_pairwise: '" + n +
                                                "' is the conditioning variable");

  const auto& z = ds.column(given);
  detail::check_unit_column(z, given);
  const std::size_t n_rows = ds.rows();
  const int depth = cfg.depth.value_or(default_depth(n_rows));
  const auto z_tree =
      n_rows > 0 ? detail::pruned_z_tree(z, depth)
                 : partition::PartitionTree<1>::dyadic(depth);

  const std::size_t k = names.size();
  std::vector<std::span<const double>> cols(k);
  for (std::size_t i = 0; i < k; ++i) {
    cols[i] = ds.column(names[i]);
    detail::check_unit_column(cols[i], names[i]);
    if (cols[i].size() != n_rows) throw DataError("run_pairwise: ragged columns");
  }

  std::vector<double> phi_single(k, 0.0);
  if (n_rows > 0)
    detail::for_each_index(k, threads, [&](std::size_t i) {
      const auto pts = detail::as_points(cols[i]);
      phi_single[i] = detail::conditional_log_phi<1>(
          cfg.c_x, depth, z_tree, cfg.rho, z, std::span<const Point<1>>(pts));
    });

  std::vector<std::pair<std::size_t, std::size_t>> index_pairs;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) index_pairs.emplace_back(i, j);

  std::vector<double> phi_pair(index_pairs.size(), 0.0);
  if (n_rows > 0)
    detail::for_each_index(index_pairs.size(), threads, [&](std::size_t t) {
      const auto [i, j] = index_pairs[t];
      const auto pts = detail::as_points(cols[i], cols[j]);
      phi_pair[t] = detail::conditional_log_phi<2>(
          cfg.c_xy, depth, z_tree, cfg.rho, z, std::span<const Point<2>>(pts));
    });

  DependenceGraph g;
  g.vars = names;
  g.given = given;
  for (std::size_t t = 0; t < index_pairs.size(); ++t) {
    const auto [i, j] = index_pairs[t];
    TestResult r;
    r.prior_h1 = cfg.prior_h1;
    r.prior_h0 = 1.0 - cfg.prior_h1;
    r.c_x = cfg.c_x;
    r.c_y = cfg.c_x;  // marginals share one c in pairwise mode
    r.c_xy = cfg.c_xy;
    r.rho = cfg.rho;
    r.depth_z = depth;
    r.depth_response = depth;
    r.scheme = cfg.scheme;
    r.n = n_rows;
    r.x_name = names[i];
    r.y_name = names[j];
    r.z_name = given;
    r.seed = cfg.seed;
    r.log_phi_x = phi_single[i];
    r.log_phi_y = phi_single[j];
    r.log_phi_xy = phi_pair[t];
    r.log_bf = r.log_phi_x + r.log_phi_y - r.log_phi_xy;
    r.posterior_h1 = posterior_h1_from_log_bf(r.log_bf, cfg.prior_h1);
    g.pairs.push_back({names[i], names[j], std::move(r)});
  }
  return g;
}

// Concentration-scale selection: the grid element maximizing the conditional
// evidence of one constituent model, ties resolved toward the smallest c.
inline double select_c(std::span<const double> x, std::span<const double> y,
                       std::span<const double> z, Model model,
                       std::span<const double> c_grid, const TestConfig& cfg) {
  validate(cfg);
  if (c_grid.empty()) throw std::invalid_argument("select_c: empty grid");
  for (double c : c_grid)
    if (!(c > 0.0) || !std::isfinite(c))
      throw std::invalid_argument("select_c: grid values must be finite and > 0");
  if (x.size() != y.size() || x.size() != z.size())
    throw DataError("select_c: columns must have equal length");

  const std::size_t n = x.size();
  const int depth = cfg.depth.value_or(default_depth(n));
  if (n == 0) {  // every grid point gives log Phi = 0
    double best = c_grid[0];
    for (double c : c_grid) best = std::min(best, c);
    return best;
  }
  detail::check_unit_column(x, "x");
  detail::check_unit_column(y, "y");
  detail::check_unit_column(z, "z");
  const auto z_tree = detail::pruned_z_tree(z, depth);

  const auto eval = [&](double c) {
    switch (model) {
      case Model::x_given_z: {
        const auto pts = detail::as_points(x);
        return detail::conditional_log_phi<1>(c, depth, z_tree, cfg.rho, z,
                                              std::span<const Point<1>>(pts));
      }
      case Model::y_given_z: {
        const auto pts = detail::as_points(y);
        return detail::conditional_log_phi<1>(c, depth, z_tree, cfg.rho, z,
                                              std::span<const Point<1>>(pts));
      }
      default: {
        const auto pts = detail::as_points(x, y);
        return detail::conditional_log_phi<2>(c, depth, z_tree, cfg.rho, z,
                                              std::span<const Point<2>>(pts));
      }
    }
  };

  bool have = false;
  double best_phi = 0.0, best_c = 0.0;
  for (double c : c_grid) {
    const double phi = eval(c);
    if (!have || phi > best_phi || (phi == best_phi && c < best_c)) {
      have = true;
      best_phi = phi;
      best_c = c;
    }
  }
  return best_c;
}

}  // namespace bnpci::bftest
