#pragma once

// Brute-force reference implementations for the test suite. These must stay
// independent of the fast code: they may use the partition structures
// (node words, axis blocks) but not the tpt/condopt evaluators they certify.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "bnpci/condopt.hpp"
#include "bnpci/logspace.hpp"
#include "bnpci/partition.hpp"
#include "bnpci/tpt.hpp"

namespace oracle {

using bnpci::partition::NodeWord;
using bnpci::partition::PartitionTree;
using bnpci::partition::Point;

struct OracleScaleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

template <int D>
bool inside(const PartitionTree<D>& tree, const NodeWord<D>& node,
            const Point<D>& p) {
  for (int axis = 0; axis < D; ++axis) {
    const auto block = tree.axis_block(node, axis);
    const double v = p[static_cast<std::size_t>(axis)];
    if (v < block.lower) return false;
    if (block.upper_closed ? v > block.upper : v >= block.upper) return false;
  }
  return true;
}

// Dirichlet-multinomial factor of one internal node: log of the ratio of
// normalizing constants at posterior vs prior counts.
inline double dirichlet_node_factor(double alpha, int arity,
                                    std::span<const std::int64_t> child_counts) {
  std::int64_t total = 0;
  double out = std::lgamma(static_cast<double>(arity) * alpha) -
               static_cast<double>(arity) * std::lgamma(alpha);
  for (const std::int64_t n : child_counts) {
    total += n;
    out += std::lgamma(alpha + static_cast<double>(n));
  }
  return out - std::lgamma(static_cast<double>(arity) * alpha +
                           static_cast<double>(total));
}

template <int D>
double conjugate_subtree(const bnpci::tpt::TptParams& params,
                         const PartitionTree<D>& tree, const NodeWord<D>& node,
                         const std::vector<Point<D>>& pts) {
  constexpr int arity = 1 << D;
  if (node.level() == tree.max_depth() || !tree.is_internal(node)) {
    // stopped: every point here sits on a leaf of height 2^(D*level)
    return static_cast<double>(pts.size()) * D * node.level() * std::numbers::ln2;
  }
  std::vector<std::vector<Point<D>>> split(arity);
  for (const auto& p : pts)
    for (int c = 0; c < arity; ++c)
      if (inside(tree, node.child(static_cast<unsigned>(c)), p)) {
        split[static_cast<std::size_t>(c)].push_back(p);
        break;
      }
  std::vector<std::int64_t> counts(arity);
  for (int c = 0; c < arity; ++c)
    counts[static_cast<std::size_t>(c)] =
        static_cast<std::int64_t>(split[static_cast<std::size_t>(c)].size());
  double out = dirichlet_node_factor(params.alpha(node.level() + 1), arity, counts);
  for (int c = 0; c < arity; ++c)
    if (!split[static_cast<std::size_t>(c)].empty())
      out += conjugate_subtree(params, tree, node.child(static_cast<unsigned>(c)),
                               split[static_cast<std::size_t>(c)]);
  return out;
}

}  // namespace detail

// TPT marginal likelihood by per-node conjugacy with interval-membership
// counting. Slow by design.
template <int D>
double node_conjugate_ml(const bnpci::tpt::TptParams& params,
                         const PartitionTree<D>& tree,
                         std::span<const Point<D>> data) {
  if (data.size() > 200)
    throw OracleScaleError("node_conjugate_ml: N > 200");
  if (params.depth > 8) throw OracleScaleError("node_conjugate_ml: J > 8");
  if (data.empty()) return 0.0;
  const std::vector<Point<D>> pts(data.begin(), data.end());
  return detail::conjugate_subtree(params, tree, NodeWord<D>::root(), pts);
}

// One way of stopping the Z-partition: the antichain of nodes where refinement
// stops, along with its log prior weight (log rho per voluntary stop,
// log(1-rho) per split; forced stops at leaves carry no factor).
struct StoppingConfiguration {
  std::vector<NodeWord<1>> stopped;
  double log_weight = 0.0;
};

inline std::vector<StoppingConfiguration> enumerate_stopping_configurations(
    const PartitionTree<1>& z_tree, double rho, const NodeWord<1>& node) {
  if (node.level() == z_tree.max_depth() || !z_tree.is_internal(node))
    return {{{node}, 0.0}};
  std::vector<StoppingConfiguration> out;
  out.push_back({{node}, std::log(rho)});
  const auto left = enumerate_stopping_configurations(z_tree, rho, node.child(0));
  const auto right = enumerate_stopping_configurations(z_tree, rho, node.child(1));
  for (const auto& l : left)
    for (const auto& r : right) {
      StoppingConfiguration cfg;
      cfg.stopped = l.stopped;
      cfg.stopped.insert(cfg.stopped.end(), r.stopped.begin(), r.stopped.end());
      cfg.log_weight = std::log1p(-rho) + l.log_weight + r.log_weight;
      out.push_back(std::move(cfg));
    }
  return out;
}

inline std::vector<StoppingConfiguration> enumerate_stopping_configurations(
    const PartitionTree<1>& z_tree, double rho) {
  if (z_tree.max_depth() > 3)
    throw OracleScaleError("enumeration needs Z-tree depth <= 3");
  return enumerate_stopping_configurations(z_tree, rho, NodeWord<1>::root());
}

// The conditional marginal likelihood by explicit enumeration: sum over every
// stopping configuration of its weight times the product of local marginal
// likelihoods of the stopped nodes' restricted responses.
template <int D>
double enumerate_phi(const bnpci::condopt::CondModelSpec<D>& spec,
                     std::span<const double> z,
                     std::span<const Point<D>> responses) {
  if (z.size() != responses.size())
    throw std::invalid_argument("enumerate_phi: column length mismatch");
  const auto configs = enumerate_stopping_configurations(spec.z_tree, spec.rho);

  std::unordered_map<std::uint64_t, double> phi0;
  const auto local = [&](const NodeWord<1>& a) {
    const std::uint64_t key =
        (static_cast<std::uint64_t>(a.level()) << 56) | a.index();
    if (const auto it = phi0.find(key); it != phi0.end()) return it->second;
    std::vector<Point<D>> sub;
    for (std::size_t i = 0; i < z.size(); ++i)
      if (detail::inside(spec.z_tree, a, Point<1>{z[i]})) sub.push_back(responses[i]);
    const double v = node_conjugate_ml<D>(spec.response_params, spec.response_tree,
                                          std::span<const Point<D>>(sub));
    return phi0.emplace(key, v).first->second;
  };

  std::vector<double> terms;
  terms.reserve(configs.size());
  for (const auto& cfg : configs) {
    double t = cfg.log_weight;
    for (const auto& a : cfg.stopped) t += local(a);
    terms.push_back(t);
  }
  return bnpci::log_sum_exp(std::span<const double>(terms));
}

}  // namespace oracle
