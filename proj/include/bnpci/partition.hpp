#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "errors.hpp"
#include "gaussian.hpp"

// Recursive binary partitions of the unit interval / unit square.
//
// Level-j blocks of the dyadic scheme on one axis are [k/2^j, (k+1)/2^j),
// k = 0..2^j-1, with the rightmost block closed so that 1.0 belongs to the
// partition. In two dimensions each node splits into four children, the
// product of the per-axis halvings.
//
// The quantile scheme reuses the same machinery after pushing each coordinate
// through a Gaussian CDF: block boundaries in raw space sit at the quantiles
// k/2^j of N(location, scale^2). The transform realization is exact; no
// quantile is ever computed on the forward path.
//
// Trees are immutable. A freshly built tree is "full": every node above
// max_depth is internal. separating_prune() derives a new tree whose internal
// nodes are exactly those containing at least two of the given points (and not
// at the depth cap); everything else becomes a leaf.

namespace bnpci::partition {

template <int D>
using Point = std::array<double, static_cast<std::size_t>(D)>;

enum class Scheme { dyadic, quantile };

struct QuantileSpec {
  double location = 0.0;
  double scale = 1.0;  // must be > 0
};

namespace detail {

// Insert a zero bit between consecutive bits of v (Morton spread).
inline std::uint64_t spread_bits(std::uint32_t v) {
  std::uint64_t x = v;
  x = (x | (x << 16)) & 0x0000FFFF0000FFFFull;
  x = (x | (x << 8)) & 0x00FF00FF00FF00FFull;
  x = (x | (x << 4)) & 0x0F0F0F0F0F0F0F0Full;
  x = (x | (x << 2)) & 0x3333333333333333ull;
  x = (x | (x << 1)) & 0x5555555555555555ull;
  return x;
}

inline std::uint32_t squash_bits(std::uint64_t x) {
  x &= 0x5555555555555555ull;
  x = (x | (x >> 1)) & 0x3333333333333333ull;
  x = (x | (x >> 2)) & 0x0F0F0F0F0F0F0F0Full;
  x = (x | (x >> 4)) & 0x00FF00FF00FF00FFull;
  x = (x | (x >> 8)) & 0x0000FFFF0000FFFFull;
  x = (x | (x >> 16)) & 0x00000000FFFFFFFFull;
  return static_cast<std::uint32_t>(x);
}

// Per-axis block index of u in [0,1] at the given level. Multiplication by a
// power of two is exact, so the half-open convention is honored exactly; the
// clamp makes the rightmost block closed.
inline std::uint64_t axis_block_index(double u, int level) {
  const std::uint64_t last = (std::uint64_t{1} << level) - 1;
  if (u >= 1.0) return last;
  const auto k = static_cast<std::uint64_t>(std::ldexp(u, level));
  return k > last ? last : k;
}

}  // namespace detail

// Address of a partition node: its depth and the base-2^D digit string of the
// path from the root, packed most-significant-first into an integer. For
// D == 2 each digit is (x_bit << 1) | y_bit, i.e. the index interleaves the
// two per-axis block indices x-major.
template <int D>
class NodeWord {
  static_assert(D == 1 || D == 2, "only 1- and 2-dimensional partitions");

 public:
  static constexpr int arity = 1 << D;

  NodeWord() = default;
  NodeWord(int level, std::uint64_t index) : level_(level), index_(index) {}

  static NodeWord root() { return NodeWord(0, 0); }

  int level() const { return level_; }
  std::uint64_t index() const { return index_; }

  NodeWord child(unsigned digit) const {
    return NodeWord(level_ + 1, (index_ << D) | digit);
  }
  NodeWord parent() const { return NodeWord(level_ - 1, index_ >> D); }
  NodeWord prefix(int level) const {
    return NodeWord(level, index_ >> (D * (level_ - level)));
  }

  // i-th digit of the path, i in [0, level).
  unsigned digit(int i) const {
    return static_cast<unsigned>(index_ >> (D * (level_ - 1 - i))) & (arity - 1);
  }

  // Block index along the given axis (axis 0 = x, 1 = y).
  std::uint64_t axis_index(int axis) const {
    if constexpr (D == 1) {
      return index_;
    } else {
      return detail::squash_bits(axis == 0 ? index_ >> 1 : index_);
    }
  }

  bool is_prefix_of(const NodeWord& other) const {
    return other.level_ >= level_ &&
           (other.index_ >> (D * (other.level_ - level_))) == index_;
  }

  std::string to_string() const {
    std::string s;
    s.reserve(static_cast<std::size_t>(level_));
    for (int i = 0; i < level_; ++i) s.push_back(static_cast<char>('0' + digit(i)));
    return s;
  }

  friend bool operator==(const NodeWord& a, const NodeWord& b) = default;
  friend bool operator<(const NodeWord& a, const NodeWord& b) {
    return a.level_ != b.level_ ? a.level_ < b.level_ : a.index_ < b.index_;
  }

 private:
  int level_ = 0;
  std::uint64_t index_ = 0;
};

template <int D>
struct NodeWordHash {
  std::size_t operator()(const NodeWord<D>& w) const {
    std::uint64_t h = w.index() * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(w.level()) + (h >> 32);
    return static_cast<std::size_t>(h * 0xC2B2AE3D27D4EB4Full);
  }
};

template <int D>
class PartitionTree {
  static_assert(D == 1 || D == 2);

 public:
  static constexpr int arity = 1 << D;
  // Node indices pack D bits per level into 62 usable bits.
  static constexpr int max_supported_depth = 62 / D;

  static PartitionTree dyadic(int max_depth) {
    check_depth(max_depth);
    return PartitionTree(Scheme::dyadic, max_depth, {});
  }

  static PartitionTree quantile(int max_depth, std::array<QuantileSpec, D> specs) {
    check_depth(max_depth);
    for (const auto& s : specs)
      if (!(s.scale > 0.0) || !std::isfinite(s.scale) || !std::isfinite(s.location))
        throw std::invalid_argument("PartitionTree: quantile scale must be finite and > 0");
    return PartitionTree(Scheme::quantile, max_depth, specs);
  }

  Scheme scheme() const { return scheme_; }
  int max_depth() const { return max_depth_; }
  bool pruned() const { return topology_ != nullptr; }

  // Map a raw point into [0,1]^D. Identity for the dyadic scheme (with a
  // domain check); Gaussian CDF per axis for the quantile scheme.
  Point<D> to_unit(const Point<D>& p) const {
    Point<D> u;
    for (int a = 0; a < D; ++a) {
      const double x = p[a];
      if (scheme_ == Scheme::dyadic) {
        if (!(x >= 0.0 && x <= 1.0))
          throw DomainError("point outside [0,1]^" + std::to_string(D));
        u[a] = x;
      } else {
        if (!std::isfinite(x))
          throw TransformDomainError("non-finite point under quantile transform");
        u[a] = normal_cdf((x - specs_[a].location) / specs_[a].scale);
      }
    }
    return u;
  }

  // Packed node index of the block containing a unit-space point.
  std::uint64_t unit_index(const Point<D>& u, int level) const {
    if constexpr (D == 1) {
      return detail::axis_block_index(u[0], level);
    } else {
      const auto ix = static_cast<std::uint32_t>(detail::axis_block_index(u[0], level));
      const auto iy = static_cast<std::uint32_t>(detail::axis_block_index(u[1], level));
      return (detail::spread_bits(ix) << 1) | detail::spread_bits(iy);
    }
  }

  NodeWord<D> locate(const Point<D>& p, int level) const {
    if (level < 0 || level > max_depth_)
      throw std::invalid_argument("locate: level out of range");
    return NodeWord<D>(level, unit_index(to_unit(p), level));
  }

  // True when (level, index) names an internal node of this tree. Nodes below
  // a leaf are not part of the tree; queries about them return "leaf".
  bool is_internal(int level, std::uint64_t index) const {
    if (level >= max_depth_) return false;
    if (!topology_) return true;
    const auto& set = (*topology_)[static_cast<std::size_t>(level)];
    return set.contains(index);
  }
  bool is_internal(const NodeWord<D>& w) const { return is_internal(w.level(), w.index()); }
  bool is_leaf(const NodeWord<D>& w) const { return !is_internal(w); }

  // Depth of the leaf whose block contains the point with the given packed
  // index at max_depth.
  int leaf_level(std::uint64_t deep_index) const {
    if (!topology_) return max_depth_;
    int level = 0;
    while (is_internal(level, deep_index >> (D * (max_depth_ - level)))) ++level;
    return level;
  }

  // Raw-space extent of a node along one axis. Unbounded ends of quantile
  // blocks come out as +-infinity.
  struct AxisBlock {
    double lower;
    double upper;
    bool upper_closed;
  };
  AxisBlock axis_block(const NodeWord<D>& w, int axis) const {
    const auto k = w.axis_index(axis);
    const int level = w.level();
    const double lo = std::ldexp(static_cast<double>(k), -level);
    const double hi = std::ldexp(static_cast<double>(k + 1), -level);
    const bool closed = k == (std::uint64_t{1} << level) - 1;
    if (scheme_ == Scheme::dyadic) return {lo, hi, closed};
    const auto& s = specs_[axis];
    return {s.location + s.scale * normal_quantile(lo),
            s.location + s.scale * normal_quantile(hi), closed};
  }

  // New tree over the same scheme in which a node stays internal iff it is
  // internal here, holds >= 2 of the given points, and has not reached
  // max_depth. Idempotent for a fixed point set; an empty set leaves only the
  // root leaf.
  PartitionTree separating_prune(std::span<const Point<D>> points) const {
    std::vector<std::uint64_t> keys;
    keys.reserve(points.size());
    for (const auto& p : points) keys.push_back(unit_index(to_unit(p), max_depth_));
    std::sort(keys.begin(), keys.end());

    auto topo = std::make_shared<std::vector<std::unordered_set<std::uint64_t>>>(
        static_cast<std::size_t>(max_depth_));
    mark_internal(*topo, keys, 0, keys.size(), 0, 0);
    PartitionTree out = *this;
    out.topology_ = std::move(topo);
    return out;
  }

 private:
  PartitionTree(Scheme scheme, int max_depth, std::array<QuantileSpec, D> specs)
      : scheme_(scheme), max_depth_(max_depth), specs_(specs) {}

  static void check_depth(int max_depth) {
    if (max_depth < 1) throw std::invalid_argument("PartitionTree: max_depth must be >= 1");
    if (max_depth > max_supported_depth)
      throw DepthOverflowError("PartitionTree: depth " + std::to_string(max_depth) +
                               " exceeds the addressable maximum " +
                               std::to_string(max_supported_depth) + " for d=" +
                               std::to_string(D));
  }

  void mark_internal(std::vector<std::unordered_set<std::uint64_t>>& topo,
                     const std::vector<std::uint64_t>& keys, std::size_t lo,
                     std::size_t hi, int level, std::uint64_t index) const {
    if (hi - lo < 2 || !is_internal(level, index)) return;
    topo[static_cast<std::size_t>(level)].insert(index);
    const int shift = D * (max_depth_ - level - 1);
    std::size_t at = lo;
    for (unsigned digit = 0; digit < arity && at < hi; ++digit) {
      const std::uint64_t child = (index << D) | digit;
      const auto end = std::partition_point(
          keys.begin() + static_cast<std::ptrdiff_t>(at),
          keys.begin() + static_cast<std::ptrdiff_t>(hi),
          [&](std::uint64_t k) { return (k >> shift) <= child; });
      const auto next = static_cast<std::size_t>(end - keys.begin());
      mark_internal(topo, keys, at, next, level + 1, child);
      at = next;
    }
  }

  Scheme scheme_;
  int max_depth_;
  std::array<QuantileSpec, D> specs_{};
  // Internal-node sets per level; null means "full tree". Shared so tree
  // copies are cheap and safe (trees are immutable once built).
  std::shared_ptr<const std::vector<std::unordered_set<std::uint64_t>>> topology_;
};

}  // namespace bnpci::partition
