#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "logspace.hpp"
#include "partition.hpp"

// Truncated Polya tree over a recursive partition: each internal node splits
// its mass among its children with Dirichlet(alpha_j, ..., alpha_j) weights at
// level j, alpha_j = c * j^2, down to a truncation depth J where mass spreads
// uniformly. Everything here works in logs.
//
// Two equivalent routes to the marginal likelihood of a dataset:
//  * telescoping:  prod_{i>=2} prod_j (2^d a_j + 2^d n_j(X_i)) / (2^d a_j + n_{j-1}(X_i)),
//    where n_j(X_i) counts earlier points sharing X_i's level-j block — the
//    sequential predictive form;
//  * closed form:  per-node Dirichlet-multinomial normalizer ratios times the
//    leaf volume term 2^{dJN} — conjugacy applied node by node.
// They agree to floating-point error; the test suite pins that equivalence.

namespace bnpci::tpt {

using partition::NodeWord;
using partition::NodeWordHash;
using partition::PartitionTree;
using partition::Point;

struct TptParams {
  double c = 1.0;  // concentration scale; larger c shrinks harder to uniform
  int depth = 1;   // truncation depth J

  double alpha(int level) const {
    return c * static_cast<double>(level) * static_cast<double>(level);
  }
};

inline void validate(const TptParams& p) {
  if (!(p.c > 0.0) || !std::isfinite(p.c))
    throw std::invalid_argument("TptParams: c must be finite and > 0");
  if (p.depth < 1) throw std::invalid_argument("TptParams: depth must be >= 1");
}

template <int D>
void validate(const TptParams& p, const PartitionTree<D>& tree) {
  validate(p);
  if (p.depth > tree.max_depth())
    throw std::invalid_argument("TptParams: depth exceeds the tree's max_depth");
}

namespace detail {

template <int D>
std::vector<std::uint64_t> leaf_keys(const PartitionTree<D>& tree,
                                     std::span<const Point<D>> pts) {
  std::vector<std::uint64_t> keys;
  keys.reserve(pts.size());
  const int jt = tree.max_depth();
  for (const auto& p : pts) keys.push_back(tree.unit_index(tree.to_unit(p), jt));
  return keys;
}

// Per-point leaf depths clamped to depth_cap; empty result means "uniformly
// depth_cap" (full tree fast path).
template <int D>
std::vector<int> leaf_caps(const PartitionTree<D>& tree,
                           std::span<const std::uint64_t> keys, int depth_cap) {
  if (!tree.pruned()) return {};
  std::vector<int> caps;
  caps.reserve(keys.size());
  for (auto k : keys) caps.push_back(std::min(tree.leaf_level(k), depth_cap));
  return caps;
}

inline double level_factor(double alpha, double td, double nj, double nparent) {
  return std::log(td * (alpha + nj)) - std::log(td * alpha + nparent);
}

// Sum of log level factors for one point given counts over some reference set
// (the preceding points for the telescoping form, the whole dataset for the
// predictive density). count_at(j, prefix) -> points of the reference set in
// the level-j block named by prefix; parent0 is the size of the reference set.
// Once a parent count hits zero every deeper factor is exactly one, so the
// loop stops — this is what makes full-depth evaluation on separating-pruned
// data equivalent to evaluating the pruned product itself.
template <typename CountFn>
double point_log_predictive(const TptParams& params, int dims, int tree_depth,
                            std::uint64_t key, int cap, double parent0,
                            CountFn&& count_at) {
  const double td = static_cast<double>(1 << dims);
  double s = 0.0;
  double parent = parent0;
  for (int j = 1; j <= cap; ++j) {
    if (parent == 0.0) break;
    const std::uint64_t prefix = key >> (dims * (tree_depth - j));
    const double nj = count_at(j, prefix);
    s += level_factor(params.alpha(j), td, nj, parent);
    parent = nj;
  }
  return s;
}

// Telescoping marginal likelihood over pre-located points. keys are packed
// node indices at tree_depth; caps are per-point leaf depths (empty = uniform
// params.depth). Counts build incrementally in data order, so the result is
// bit-deterministic for a fixed input order.
inline double telescoped_log_ml_keys(const TptParams& params, int dims,
                                     int tree_depth,
                                     std::span<const std::uint64_t> keys,
                                     std::span<const int> caps) {
  const std::size_t n = keys.size();
  if (n <= 1) return 0.0;
  std::vector<std::unordered_map<std::uint64_t, std::int32_t>> counts(
      static_cast<std::size_t>(params.depth));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int cap = caps.empty() ? params.depth : caps[i];
    if (i > 0)
      total += point_log_predictive(
          params, dims, tree_depth, keys[i], cap, static_cast<double>(i),
          [&](int j, std::uint64_t prefix) {
            const auto& m = counts[static_cast<std::size_t>(j - 1)];
            const auto it = m.find(prefix);
            return it == m.end() ? 0.0 : static_cast<double>(it->second);
          });
    for (int j = 1; j <= cap; ++j)
      ++counts[static_cast<std::size_t>(j - 1)][keys[i] >> (dims * (tree_depth - j))];
  }
  return total;
}

}  // namespace detail

// Data counts for every tree node on a point's path, level 1..max_depth
// (capped at each point's leaf for pruned trees). Level 0 is the total.
template <int D>
class CountCache {
 public:
  CountCache(const PartitionTree<D>& tree, std::span<const Point<D>> data)
      : depth_(tree.max_depth()), total_(data.size()),
        levels_(static_cast<std::size_t>(depth_)) {
    const auto keys = detail::leaf_keys(tree, data);
    for (auto k : keys) {
      const int cap = tree.pruned() ? tree.leaf_level(k) : depth_;
      for (int j = 1; j <= cap; ++j)
        ++levels_[static_cast<std::size_t>(j - 1)][k >> (D * (depth_ - j))];
    }
  }

  int depth() const { return depth_; }
  std::size_t total() const { return total_; }

  std::int64_t count(int level, std::uint64_t index) const {
    if (level == 0) return static_cast<std::int64_t>(total_);
    const auto& m = levels_[static_cast<std::size_t>(level - 1)];
    const auto it = m.find(index);
    return it == m.end() ? 0 : it->second;
  }
  std::int64_t count(const NodeWord<D>& w) const { return count(w.level(), w.index()); }

  const std::unordered_map<std::uint64_t, std::int32_t>& level(int j) const {
    return levels_[static_cast<std::size_t>(j - 1)];
  }

 private:
  int depth_;
  std::size_t total_;
  std::vector<std::unordered_map<std::uint64_t, std::int32_t>> levels_;
};

// Branching probabilities: for each internal node, one probability per child.
template <int D>
using BranchingProbs =
    std::unordered_map<NodeWord<D>, std::array<double, (1 << D)>, NodeWordHash<D>>;

// Log density of a single draw given concrete branching probabilities: the
// log-probability of x's path plus the log inverse leaf volume. A zero
// probability anywhere on the path gives -inf. theta must cover every
// internal node on the path.
template <int D>
double log_density(const TptParams& params, const PartitionTree<D>& tree,
                   const BranchingProbs<D>& theta, const Point<D>& x) {
  validate(params, tree);
  const int jt = tree.max_depth();
  const std::uint64_t key = tree.unit_index(tree.to_unit(x), jt);
  const int cap =
      tree.pruned() ? std::min(tree.leaf_level(key), params.depth) : params.depth;
  double s = D * cap * std::numbers::ln2;
  for (int j = 1; j <= cap; ++j) {
    const NodeWord<D> parent(j - 1, key >> (D * (jt - j + 1)));
    const auto digit =
        static_cast<unsigned>(key >> (D * (jt - j))) & ((1u << D) - 1u);
    const double th = theta.at(parent)[digit];
    if (!(th > 0.0)) return kNegInf;
    s += std::log(th);
  }
  return s;
}

// Marginal likelihood, sequential form. Sums in (data order, level order);
// empty and singleton datasets give exactly 0.
template <int D>
double log_marginal_likelihood_telescoping(const TptParams& params,
                                           const PartitionTree<D>& tree,
                                           std::span<const Point<D>> data) {
  validate(params, tree);
  const auto keys = detail::leaf_keys(tree, data);
  const auto caps = detail::leaf_caps(tree, keys, params.depth);
  return detail::telescoped_log_ml_keys(params, D, tree.max_depth(), keys, caps);
}

// Marginal likelihood, conjugate form: for every internal node holding data,
// the log ratio of Dirichlet normalizers at posterior vs prior counts, plus
// the leaf volume term d*J*log 2 per observation (per-leaf depth on pruned
// trees). Nodes are visited level by level in sorted index order.
template <int D>
double log_marginal_likelihood_closed_form(const TptParams& params,
                                           const PartitionTree<D>& tree,
                                           std::span<const Point<D>> data) {
  validate(params, tree);
  if (data.size() <= 1) {
    // A lone observation contributes alpha-ratio factors that cancel against
    // its leaf volume exactly; keep the degenerate cases identical to the
    // telescoping form.
    return 0.0;
  }
  constexpr int arity = 1 << D;
  const double td = static_cast<double>(arity);
  const CountCache<D> cache(tree, data);

  double total = 0.0;
  std::vector<std::uint64_t> nodes;
  for (int level = 0; level < params.depth; ++level) {
    nodes.clear();
    if (level == 0) {
      nodes.push_back(0);
    } else {
      for (const auto& [k, cnt] : cache.level(level)) {
        (void)cnt;
        nodes.push_back(k);
      }
      std::sort(nodes.begin(), nodes.end());
    }
    const double a = params.alpha(level + 1);
    const double base = std::lgamma(td * a) - td * std::lgamma(a);
    for (const auto idx : nodes) {
      if (!tree.is_internal(level, idx)) continue;
      const auto node_n = cache.count(level, idx);
      if (node_n == 0) continue;
      double s = base - std::lgamma(td * a + static_cast<double>(node_n));
      for (int digit = 0; digit < arity; ++digit)
        s += std::lgamma(
            a + static_cast<double>(cache.count(
                    level + 1, (idx << D) | static_cast<std::uint64_t>(digit))));
      total += s;
    }
  }

  if (!tree.pruned()) {
    total += static_cast<double>(D) * params.depth *
             static_cast<double>(data.size()) * std::numbers::ln2;
  } else {
    const auto keys = detail::leaf_keys(tree, data);
    for (auto k : keys)
      total += static_cast<double>(D) * std::min(tree.leaf_level(k), params.depth) *
               std::numbers::ln2;
  }
  return total;
}

// One-step-ahead predictive density at x given data summarized by a
// CountCache built over the same tree. With no data this is the uniform base
// density (log 0). Shares its per-level factor arithmetic with the
// telescoping form, so log ML(data + {x}) = log ML(data) + this, bitwise,
// when the same counts back both.
template <int D>
double log_predictive_density(const TptParams& params, const PartitionTree<D>& tree,
                              const CountCache<D>& cache, const Point<D>& x) {
  validate(params, tree);
  if (cache.depth() != tree.max_depth())
    throw std::invalid_argument("log_predictive_density: cache depth mismatch");
  const int jt = tree.max_depth();
  const std::uint64_t key = tree.unit_index(tree.to_unit(x), jt);
  const int cap =
      tree.pruned() ? std::min(tree.leaf_level(key), params.depth) : params.depth;
  return detail::point_log_predictive(
      params, D, jt, key, cap, static_cast<double>(cache.total()),
      [&](int j, std::uint64_t prefix) {
        return static_cast<double>(cache.count(j, prefix));
      });
}

template <int D>
double log_predictive_density(const TptParams& params, const PartitionTree<D>& tree,
                              std::span<const Point<D>> data, const Point<D>& x) {
  const CountCache<D> cache(tree, data);
  return log_predictive_density(params, tree, cache, x);
}

}  // namespace bnpci::tpt
