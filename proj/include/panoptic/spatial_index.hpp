#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "panoptic/geometry.hpp"

namespace panoptic {

using TrackId = std::uint32_t;

namespace detail {
struct RTreeNode;
}

/// R-tree over track AABBs (Guttman, quadratic split).
class SpatialIndex {
 public:
  struct Params {
    std::size_t max_fanout = 8;
    std::size_t min_fill = 4;
    /// Below this many entries queries scan the id -> box table instead of the tree.
    std::size_t linear_scan_below = 16;
  };

  SpatialIndex();
  explicit SpatialIndex(Params params);
  ~SpatialIndex();
  SpatialIndex(SpatialIndex&&) noexcept;
  SpatialIndex& operator=(SpatialIndex&&) noexcept;
  SpatialIndex(const SpatialIndex&) = delete;
  SpatialIndex& operator=(const SpatialIndex&) = delete;

  /// Throws Error if `id` is already present.
  void insert(TrackId id, const Aabb& box);
  /// Returns false if `id` was not present.
  bool remove(TrackId id);
  /// Replaces the box of `id`, inserting it if absent.
  void update(TrackId id, const Aabb& box);

  bool contains(TrackId id) const { return boxes_.count(id) != 0; }
  std::size_t size() const { return boxes_.size(); }
  const std::map<TrackId, Aabb>& boxes() const { return boxes_; }

  /// Ids whose box intersects `box` inflated by `margin`, ascending.
  std::vector<TrackId> query(const Aabb& box, double margin = 0.0) const;
  /// Same as query() but always descends the tree.
  std::vector<TrackId> query_tree(const Aabb& box, double margin = 0.0) const;

  /// Structural audit: node boxes enclose their children, leaves share one
  /// depth, fill bounds hold below the root, and the leaves hold exactly the
  /// id set with matching boxes.
  bool check_invariants() const;
  std::size_t height() const;

 private:
  void insert_leaf_entry(TrackId id, const Aabb& box);

  Params params_;
  std::unique_ptr<detail::RTreeNode> root_;
  std::map<TrackId, Aabb> boxes_;
};

}  // namespace panoptic
