#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "logspace.hpp"
#include "partition.hpp"
#include "tpt.hpp"

// Conditional evidence via optionally-stopped partitioning of the
// conditioning variable Z. Every node A of the Z-partition carries
//
//   Phi0(A) = truncated-Polya-tree marginal likelihood of the responses whose
//             Z falls in A (1 when A holds fewer than two points), and
//   Phi(A)  = Phi0(A)                                  if A is a leaf,
//             rho * Phi0(A) + (1-rho) * Phi(A0)*Phi(A1) otherwise,
//
// i.e. the evidence marginalized over every way of stopping the Z-refinement.
// Phi(root) is the conditional marginal likelihood used by the test module.
//
// Nodes holding at most one point satisfy Phi = Phi0 = 1 identically (every
// deeper evidence term is also 1 and the rho-mixture of ones is one), so the
// recursion terminates there without descending.

namespace bnpci::condopt {

using partition::NodeWord;
using partition::PartitionTree;
using partition::Point;

template <int D>
struct CondModelSpec {
  tpt::TptParams response_params;        // response-model prior (c, depth)
  PartitionTree<D> response_tree;        // usually dyadic(response_params.depth)
  PartitionTree<1> z_tree;               // Z-partition, pruned/capped by the caller
  double rho = 0.5;                      // stop probability in (0,1]; 1 = diagnostic
};

template <int D>
CondModelSpec<D> make_spec(tpt::TptParams response_params, PartitionTree<1> z_tree,
                           double rho) {
  const int depth = response_params.depth;
  return CondModelSpec<D>{response_params, PartitionTree<D>::dyadic(depth),
                          std::move(z_tree), rho};
}

struct PhiEntry {
  NodeWord<1> node;
  double local_log_phi0 = 0.0;  // log Phi0(A)
  double mixed_log_phi = 0.0;   // log Phi(A)
  std::size_t n = 0;            // points with Z in A
};

// Diagnostic trace of the recursion, depth-first preorder. Subtrees cut short
// by the <=1-point rule appear as the single node where the cut happened.
struct PhiTable {
  std::vector<PhiEntry> entries;
};

template <int D>
void validate(const CondModelSpec<D>& spec) {
  tpt::validate(spec.response_params, spec.response_tree);
  if (!(spec.rho > 0.0) || !(spec.rho <= 1.0))
    throw std::invalid_argument("CondModelSpec: rho must lie in (0, 1]");
}

// Responses whose Z lands in node a, in their original order.
template <int D>
std::vector<Point<D>> restrict_responses(const PartitionTree<1>& z_tree,
                                         std::span<const double> z,
                                         std::span<const Point<D>> responses,
                                         const NodeWord<1>& a) {
  if (z.size() != responses.size())
    throw std::invalid_argument("restrict_responses: column length mismatch");
  std::vector<Point<D>> out;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z_tree.locate(Point<1>{z[i]}, a.level()).index() == a.index())
      out.push_back(responses[i]);
  return out;
}

// log Phi0(A): response-model evidence within one Z-node (telescoping form).
template <int D>
double local_log_phi0(const CondModelSpec<D>& spec, const NodeWord<1>& a,
                      std::span<const double> z, std::span<const Point<D>> responses) {
  validate(spec);
  const auto sub = restrict_responses<D>(spec.z_tree, z, responses, a);
  if (sub.size() <= 1) return 0.0;
  return tpt::log_marginal_likelihood_telescoping(
      spec.response_params, spec.response_tree, std::span<const Point<D>>(sub));
}

namespace detail {

template <int D>
struct Recursion {
  const CondModelSpec<D>& spec;
  const std::vector<std::uint64_t>& zkeys;   // packed Z indices at z-tree depth
  const std::vector<std::uint64_t>& rkeys;   // packed response indices
  const std::vector<int>& rcaps;             // per-point response leaf caps (may be empty)
  const std::function<double(const NodeWord<1>&)>& rho_at;
  PhiTable& table;
  int jz;
  int jr;

  double run(int level, std::uint64_t index, const std::vector<std::uint32_t>& idx) {
    const NodeWord<1> node(level, index);
    const std::size_t slot = table.entries.size();
    table.entries.push_back(PhiEntry{node, 0.0, 0.0, idx.size()});
    if (idx.size() <= 1) return 0.0;  // Phi = Phi0 = 1 exactly

    std::vector<std::uint64_t> keys;
    keys.reserve(idx.size());
    for (auto i : idx) keys.push_back(rkeys[i]);
    std::vector<int> caps;
    if (!rcaps.empty()) {
      caps.reserve(idx.size());
      for (auto i : idx) caps.push_back(rcaps[i]);
    }
    const double phi0 = tpt::detail::telescoped_log_ml_keys(
        spec.response_params, D, jr, keys, caps);

    double mixed;
    if (spec.z_tree.is_internal(level, index)) {
      std::vector<std::uint32_t> left, right;
      const int shift = jz - level - 1;
      for (auto i : idx)
        ((zkeys[i] >> shift) & 1u ? right : left).push_back(i);
      const double la = run(level + 1, index << 1, left);
      const double ra = run(level + 1, (index << 1) | 1u, right);
      const double rho = rho_at(node);
      // log( rho*Phi0 + (1-rho)*Phi(A0)*Phi(A1) ). With rho = 1 the second
      // operand is -inf and log_sum_exp returns the first unchanged, so the
      // diagnostic mode collapses to Phi0 bitwise.
      mixed = log_sum_exp(std::log(rho) + phi0, std::log1p(-rho) + la + ra);
    } else {
      mixed = phi0;
    }
    table.entries[slot].local_log_phi0 = phi0;
    table.entries[slot].mixed_log_phi = mixed;
    return mixed;
  }
};

// Per-node stop probability hook; the public interface uses a constant rho.
template <int D>
std::pair<double, PhiTable> log_phi_with(
    const CondModelSpec<D>& spec, std::span<const double> z,
    std::span<const Point<D>> responses,
    const std::function<double(const NodeWord<1>&)>& rho_at) {
  validate(spec);
  if (z.size() != responses.size())
    throw std::invalid_argument("log_phi: column length mismatch");

  const int jz = spec.z_tree.max_depth();
  std::vector<std::uint64_t> zkeys;
  zkeys.reserve(z.size());
  for (double v : z)
    zkeys.push_back(spec.z_tree.unit_index(spec.z_tree.to_unit(Point<1>{v}), jz));

  const auto rkeys = tpt::detail::leaf_keys(spec.response_tree, responses);
  const auto rcaps =
      tpt::detail::leaf_caps(spec.response_tree, rkeys, spec.response_params.depth);

  std::vector<std::uint32_t> all(z.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);

  PhiTable table;
  Recursion<D> rec{spec,  zkeys, rkeys, rcaps, rho_at,
                   table, jz,    spec.response_tree.max_depth()};
  const double root = rec.run(0, 0, all);
  return {root, std::move(table)};
}

}  // namespace detail

// log Phi(root) of the optional-stopping recursion plus its per-node trace.
template <int D>
std::pair<double, PhiTable> log_phi(const CondModelSpec<D>& spec,
                                    std::span<const double> z,
                                    std::span<const Point<D>> responses) {
  const double rho = spec.rho;
  const std::function<double(const NodeWord<1>&)> constant =
      [rho](const NodeWord<1>&) { return rho; };
  return detail::log_phi_with<D>(spec, z, responses, constant);
}

}  // namespace bnpci::condopt
