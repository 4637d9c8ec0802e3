#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "panoptic/geometry.hpp"
#include "panoptic/image.hpp"

namespace panoptic {

/// Instance identifier. 0 means "no instance".
using InstanceId = std::uint32_t;
inline constexpr InstanceId kNoInstance = 0;

struct TsdfConfig {
  double voxel_size = 0.02;
  double truncation = 0.08;
  double max_weight = 64.0;
  double depth_min = 0.1;
  double depth_max = 6.0;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Sparse instance-id -> observation count map, kept sorted by id.
class LabelHistogram {
 public:
  void add(InstanceId id, std::uint32_t count = 1);
  std::uint32_t count(InstanceId id) const;
  /// Highest count, lower id on ties; kNoInstance when empty.
  InstanceId argmax() const;
  bool empty() const { return entries_.empty(); }
  const std::vector<std::pair<InstanceId, std::uint32_t>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<InstanceId, std::uint32_t>> entries_;
};

struct Voxel {
  float d = 0.0f;
  float w = 0.0f;
  std::array<float, 3> color{0.0f, 0.0f, 0.0f};
  InstanceId label = kNoInstance;
  LabelHistogram hist;
};

struct VoxelKey {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = static_cast<std::uint32_t>(k.x) * 73856093ULL;
    h ^= static_cast<std::uint32_t>(k.y) * 19349663ULL;
    h ^= static_cast<std::uint32_t>(k.z) * 83492791ULL;
    return static_cast<std::size_t>(h);
  }
};

/// Block-sparse voxel storage. A voxel exists only once integration has
/// written to it; blocks are 8^3 slots allocated on first touch.
class VoxelGrid {
 public:
  static constexpr int kBlockSide = 8;
  static constexpr int kBlockVoxels = kBlockSide * kBlockSide * kBlockSide;

  explicit VoxelGrid(TsdfConfig config = {});
  VoxelGrid(VoxelGrid&&) noexcept = default;
  VoxelGrid& operator=(VoxelGrid&&) noexcept = default;

  const TsdfConfig& config() const { return config_; }
  std::size_t size() const { return size_; }

  VoxelKey key_of(const Vec3& p) const;
  /// World position of the voxel center: (key + 0.5) * voxel_size.
  Vec3 center(const VoxelKey& key) const;

  const Voxel* find(const VoxelKey& key) const;
  Voxel* find(const VoxelKey& key);
  /// Returns the voxel, creating a default one if needed.
  Voxel& touch(const VoxelKey& key);

  /// Visits every existing voxel in unspecified order.
  template <typename F>
  void for_each(F&& fn) const;
  /// Visits existing voxels whose keys lie in [lo, hi] (inclusive).
  template <typename F>
  void for_each_in(const VoxelKey& lo, const VoxelKey& hi, F&& fn);
  template <typename F>
  void for_each_in(const VoxelKey& lo, const VoxelKey& hi, F&& fn) const;

  /// Keys of all existing voxels in ascending (x, y, z) order.
  std::vector<VoxelKey> sorted_keys() const;

  /// Starts a new integration pass; returns its stamp.
  std::uint32_t next_stamp() { return ++stamp_; }
  /// Marks `key` as visited in pass `stamp`; false if it already was.
  bool mark_visited(const VoxelKey& key, std::uint32_t stamp);

  /// Number of voxels currently labeled `id`.
  std::size_t label_count(InstanceId id) const;
  /// Keeps label_count() in step with a voxel whose label changed.
  void note_relabel(InstanceId from, InstanceId to);

 private:
  struct Block {
    std::array<Voxel, kBlockVoxels> voxels;
    std::array<std::uint32_t, kBlockVoxels> visited{};
    std::array<bool, kBlockVoxels> occupied{};
  };

  static VoxelKey block_of(const VoxelKey& key);
  static int slot_of(const VoxelKey& key);
  Block& block_for(const VoxelKey& block_key);

  TsdfConfig config_;
  std::unordered_map<VoxelKey, std::unique_ptr<Block>, VoxelKeyHash> blocks_;
  std::size_t size_ = 0;
  std::uint32_t stamp_ = 0;
  std::unordered_map<InstanceId, std::size_t> label_counts_;
};

struct IntegrationReport {
  std::size_t voxels_updated = 0;
};

struct SurfacePoint {
  Vec3 position;
  Rgb color;
};

/// Projective TSDF fusion of one frame: voxels within the truncation band of
/// each valid depth pixel are updated by running weighted average.
IntegrationReport integrate_frame(VoxelGrid& grid, const DepthImage& depth, const RgbImage& color,
                                  const Pose& pose, const Intrinsics& intr);

/// Adds one observation of `id` to every existing voxel with |d| <= truncation
/// whose center lies in `obb`. Returns the number of voxels touched.
std::size_t update_labels(VoxelGrid& grid, const Obb& obb, InstanceId id);

/// Near-surface voxel: |d| < voxel_size.
bool is_surface(const Voxel& voxel, double voxel_size);

/// Voxels labeled `id` anywhere in the map, over the volume of `obb` in voxels
/// (capped at 1). Zero for a zero-volume box.
double support_ratio(const VoxelGrid& grid, const Obb& obb, InstanceId id);

/// Centers and colors of the surface voxels labeled `id`, in key order.
std::vector<SurfacePoint> extract_instance_points(const VoxelGrid& grid, InstanceId id);

/// Binary map snapshot ("PMAP" v1, little-endian).
void save_map_snapshot(const VoxelGrid& grid, const std::filesystem::path& path);
VoxelGrid load_map_snapshot(const std::filesystem::path& path);

// --- template definitions -------------------------------------------------

template <typename F>
void VoxelGrid::for_each(F&& fn) const {
  for (const auto& [bkey, block] : blocks_) {
    for (int s = 0; s < kBlockVoxels; ++s) {
      if (!block->occupied[s]) continue;
      const VoxelKey key{bkey.x * kBlockSide + s % kBlockSide,
                         bkey.y * kBlockSide + (s / kBlockSide) % kBlockSide,
                         bkey.z * kBlockSide + s / (kBlockSide * kBlockSide)};
      fn(key, block->voxels[s]);
    }
  }
}

template <typename F>
void VoxelGrid::for_each_in(const VoxelKey& lo, const VoxelKey& hi, F&& fn) {
  const VoxelKey blo = block_of(lo), bhi = block_of(hi);
  for (std::int32_t bz = blo.z; bz <= bhi.z; ++bz) {
    for (std::int32_t by = blo.y; by <= bhi.y; ++by) {
      for (std::int32_t bx = blo.x; bx <= bhi.x; ++bx) {
        auto it = blocks_.find({bx, by, bz});
        if (it == blocks_.end()) continue;
        Block& block = *it->second;
        const std::int32_t x0 = std::max(lo.x, bx * kBlockSide), x1 = std::min(hi.x, bx * kBlockSide + kBlockSide - 1);
        const std::int32_t y0 = std::max(lo.y, by * kBlockSide), y1 = std::min(hi.y, by * kBlockSide + kBlockSide - 1);
        const std::int32_t z0 = std::max(lo.z, bz * kBlockSide), z1 = std::min(hi.z, bz * kBlockSide + kBlockSide - 1);
        for (std::int32_t z = z0; z <= z1; ++z) {
          for (std::int32_t y = y0; y <= y1; ++y) {
            for (std::int32_t x = x0; x <= x1; ++x) {
              const VoxelKey key{x, y, z};
              const int s = slot_of(key);
              if (block.occupied[s]) fn(key, block.voxels[s]);
            }
          }
        }
      }
    }
  }
}

template <typename F>
void VoxelGrid::for_each_in(const VoxelKey& lo, const VoxelKey& hi, F&& fn) const {
  const_cast<VoxelGrid*>(this)->for_each_in(lo, hi, [&](const VoxelKey& key, Voxel& voxel) {
    fn(key, static_cast<const Voxel&>(voxel));
  });
}

}  // namespace panoptic
