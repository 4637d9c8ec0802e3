#include "panoptic/tsdf.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"
#include "panoptic/errors.hpp"

namespace panoptic {

void TsdfConfig::validate() const {
  if (!(voxel_size > 0.0)) throw ConfigError("tsdf.voxel_size must be > 0");
  if (!(truncation >= voxel_size)) throw ConfigError("tsdf.truncation must be >= voxel_size");
  if (!(max_weight > 0.0)) throw ConfigError("tsdf.max_weight must be > 0");
  if (!(depth_min < depth_max)) throw ConfigError("tsdf.depth_min must be < tsdf.depth_max");
}

void LabelHistogram::add(InstanceId id, std::uint32_t count) {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                             [](const auto& e, InstanceId key) { return e.first < key; });
  if (it != entries_.end() && it->first == id) {
    it->second += count;
  } else {
    entries_.insert(it, {id, count});
  }
}

std::uint32_t LabelHistogram::count(InstanceId id) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                             [](const auto& e, InstanceId key) { return e.first < key; });
  return (it != entries_.end() && it->first == id) ? it->second : 0;
}

InstanceId LabelHistogram::argmax() const {
  InstanceId best = kNoInstance;
  std::uint32_t best_count = 0;
  // Entries are sorted by id, so a strict comparison keeps the lower id on ties.
  for (const auto& [id, count] : entries_) {
    if (count > best_count) {
      best = id;
      best_count = count;
    }
  }
  return best;
}

VoxelGrid::VoxelGrid(TsdfConfig config) : config_(config) { config_.validate(); }

VoxelKey VoxelGrid::key_of(const Vec3& p) const {
  const Vec3 q = p / config_.voxel_size;
  return {static_cast<std::int32_t>(std::floor(q.x())), static_cast<std::int32_t>(std::floor(q.y())),
          static_cast<std::int32_t>(std::floor(q.z()))};
}

Vec3 VoxelGrid::center(const VoxelKey& key) const {
  return Vec3(key.x + 0.5, key.y + 0.5, key.z + 0.5) * config_.voxel_size;
}

VoxelKey VoxelGrid::block_of(const VoxelKey& key) {
  return {key.x >> 3, key.y >> 3, key.z >> 3};
}

int VoxelGrid::slot_of(const VoxelKey& key) {
  return (key.x & 7) + kBlockSide * ((key.y & 7) + kBlockSide * (key.z & 7));
}

VoxelGrid::Block& VoxelGrid::block_for(const VoxelKey& block_key) {
  auto& slot = blocks_[block_key];
  if (!slot) slot = std::make_unique<Block>();
  return *slot;
}

const Voxel* VoxelGrid::find(const VoxelKey& key) const {
  auto it = blocks_.find(block_of(key));
  if (it == blocks_.end()) return nullptr;
  const int s = slot_of(key);
  return it->second->occupied[s] ? &it->second->voxels[s] : nullptr;
}

Voxel* VoxelGrid::find(const VoxelKey& key) {
  return const_cast<Voxel*>(static_cast<const VoxelGrid*>(this)->find(key));
}

Voxel& VoxelGrid::touch(const VoxelKey& key) {
  Block& block = block_for(block_of(key));
  const int s = slot_of(key);
  if (!block.occupied[s]) {
    block.occupied[s] = true;
    block.voxels[s] = Voxel{};
    ++size_;
  }
  return block.voxels[s];
}

bool VoxelGrid::mark_visited(const VoxelKey& key, std::uint32_t stamp) {
  Block& block = block_for(block_of(key));
  const int s = slot_of(key);
  if (block.visited[s] == stamp) return false;
  block.visited[s] = stamp;
  return true;
}

std::size_t VoxelGrid::label_count(InstanceId id) const {
  auto it = label_counts_.find(id);
  return it == label_counts_.end() ? 0 : it->second;
}

void VoxelGrid::note_relabel(InstanceId from, InstanceId to) {
  if (from != kNoInstance) {
    auto it = label_counts_.find(from);
    if (it != label_counts_.end() && --it->second == 0) label_counts_.erase(it);
  }
  if (to != kNoInstance) ++label_counts_[to];
}

std::vector<VoxelKey> VoxelGrid::sorted_keys() const {
  std::vector<VoxelKey> keys;
  keys.reserve(size_);
  for_each([&](const VoxelKey& key, const Voxel&) { keys.push_back(key); });
  std::sort(keys.begin(), keys.end());
  return keys;
}

namespace {
// Grazing-ray filter: depth-jump radius in pixels and the largest depth change
// per pixel footprint that still counts as a facing surface.
constexpr int kEdgeRadius = 3;
constexpr double kMaxSlope = 4.0;
}  // namespace

IntegrationReport integrate_frame(VoxelGrid& grid, const DepthImage& depth, const RgbImage& color,
                                  const Pose& pose, const Intrinsics& intr) {
  if (depth.width() != intr.width || depth.height() != intr.height) {
    throw FormatError("depth image size does not match intrinsics");
  }
  const bool has_color = !color.empty();
  if (has_color && (color.width() != intr.width || color.height() != intr.height)) {
    throw FormatError("color image size does not match intrinsics");
  }

  const TsdfConfig& cfg = grid.config();
  const double tau = cfg.truncation;
  const Pose world_to_cam = pose.inverse();
  const std::uint32_t stamp = grid.next_stamp();
  auto valid = [&](double d) { return d >= cfg.depth_min && d <= cfg.depth_max; };
  const int samples = std::max(1, static_cast<int>(std::floor(2.0 * tau / cfg.voxel_size + 1e-9)));
  const double layer = 2.0 * tau / samples;

  // Pixels near a silhouette or on a steeply inclined surface are skipped:
  // their rays graze the object and would plant a false surface behind the rim.
  auto grazing = [&](int u, int v) {
    const double z = depth.at(u, v);
    const double limit = kMaxSlope * z / intr.fx;
    const int du[4] = {1, -1, 0, 0}, dv[4] = {0, 0, 1, -1};
    for (int r = 1; r <= kEdgeRadius; ++r) {
      for (int k = 0; k < 4; ++k) {
        const int uu = u + r * du[k], vv = v + r * dv[k];
        if (uu < 0 || vv < 0 || uu >= intr.width || vv >= intr.height) continue;
        const double zn = depth.at(uu, vv);
        if (!valid(zn) || std::abs(zn - z) > r * limit) return true;
      }
    }
    return false;
  };
  IntegrationReport report;
  auto fuse_voxel = [&](const VoxelKey& key) {
    const Vec3 cam = world_to_cam.apply(grid.center(key));
    if (cam.z() <= 0.0) return;
    const long u = std::lround(intr.fx * cam.x() / cam.z() + intr.cx);
    const long v = std::lround(intr.fy * cam.y() / cam.z() + intr.cy);
    if (u < 0 || v < 0 || u >= intr.width || v >= intr.height) return;
    const double observed = depth.at(static_cast<int>(u), static_cast<int>(v));
    if (!valid(observed)) return;
    if (grazing(static_cast<int>(u), static_cast<int>(v))) return;

    double sdf = observed - cam.z();
    if (sdf < -tau) return;
    Voxel* voxel = grid.find(key);
    if (sdf > tau) {
      // Free space beyond the band only refreshes voxels that already exist.
      if (!voxel) return;
      sdf = tau;
    }
    if (!voxel) voxel = &grid.touch(key);

    const double w_old = voxel->w;
    const double w_sum = w_old + 1.0;
    voxel->d = static_cast<float>((w_old * voxel->d + sdf) / w_sum);
    if (has_color) {
      const Rgb& rgb = color.at(static_cast<int>(u), static_cast<int>(v));
      for (int c = 0; c < 3; ++c) {
        voxel->color[c] = static_cast<float>((w_old * voxel->color[c] + rgb[c]) / w_sum);
      }
    }
    voxel->w = static_cast<float>(std::min(w_sum, cfg.max_weight));
    ++report.voxels_updated;
  };

  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const double z_surface = depth.at(u, v);
      if (!valid(z_surface)) continue;
      const Vec3 ray((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      // One sample per voxel-thick layer of the band, so a ray touches at
      // most 2*tau/voxel_size voxels.
      for (int i = 0; i < samples; ++i) {
        const double z = z_surface - tau + (i + 0.5) * layer;
        if (z <= 0.0) continue;
        const VoxelKey key = grid.key_of(pose.apply(z * ray));
        if (grid.mark_visited(key, stamp)) fuse_voxel(key);
      }
    }
  }
  return report;
}

std::size_t update_labels(VoxelGrid& grid, const Obb& obb, InstanceId id) {
  const Aabb box = obb_to_aabb(obb);
  const double tau = grid.config().truncation;
  std::size_t touched = 0;
  grid.for_each_in(grid.key_of(box.min), grid.key_of(box.max), [&](const VoxelKey& key, Voxel& voxel) {
    if (std::abs(voxel.d) > tau || !obb.contains(grid.center(key))) return;
    voxel.hist.add(id);
    const InstanceId label = voxel.hist.argmax();
    if (label != voxel.label) grid.note_relabel(voxel.label, label);
    voxel.label = label;
    ++touched;
  });
  return touched;
}

bool is_surface(const Voxel& voxel, double voxel_size) { return std::abs(voxel.d) < voxel_size; }

double support_ratio(const VoxelGrid& grid, const Obb& obb, InstanceId id) {
  const double vs = grid.config().voxel_size;
  const double volume = obb.volume();
  if (!(volume > 0.0)) return 0.0;
  const double cells = std::max(1.0, std::ceil(volume / (vs * vs * vs) - 1e-9));
  return std::min(1.0, static_cast<double>(grid.label_count(id)) / cells);
}

std::vector<SurfacePoint> extract_instance_points(const VoxelGrid& grid, InstanceId id) {
  std::vector<std::pair<VoxelKey, const Voxel*>> hits;
  if (id == kNoInstance) return {};
  const double vs = grid.config().voxel_size;
  grid.for_each([&](const VoxelKey& key, const Voxel& voxel) {
    if (voxel.label == id && is_surface(voxel, vs)) hits.emplace_back(key, &voxel);
  });
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<SurfacePoint> points;
  points.reserve(hits.size());
  for (const auto& [key, voxel] : hits) {
    Rgb rgb;
    for (int c = 0; c < 3; ++c) {
      rgb[c] = static_cast<std::uint8_t>(std::clamp(std::lround(voxel->color[c]), 0L, 255L));
    }
    points.push_back({grid.center(key), rgb});
  }
  return points;
}

namespace {
constexpr std::uint32_t kSnapshotVersion = 1;
}

void save_map_snapshot(const VoxelGrid& grid, const std::filesystem::path& path) {
  detail::ByteWriter out;
  const std::vector<VoxelKey> keys = grid.sorted_keys();
  out.bytes("PMAP");
  out.u32(kSnapshotVersion);
  out.f32(static_cast<float>(grid.config().voxel_size));
  out.f32(static_cast<float>(grid.config().truncation));
  out.u64(keys.size());
  for (const VoxelKey& key : keys) {
    const Voxel& voxel = *grid.find(key);
    out.i32(key.x);
    out.i32(key.y);
    out.i32(key.z);
    out.f32(voxel.d);
    out.f32(voxel.w);
    for (int c = 0; c < 3; ++c) {
      out.u8(static_cast<std::uint8_t>(std::clamp(std::lround(voxel.color[c]), 0L, 255L)));
    }
    out.u32(voxel.label);
    const auto& entries = voxel.hist.entries();
    out.u16(static_cast<std::uint16_t>(std::min<std::size_t>(entries.size(), 0xFFFF)));
    for (std::size_t i = 0; i < entries.size() && i < 0xFFFF; ++i) {
      out.u32(entries[i].first);
      out.u32(entries[i].second);
    }
  }
  out.save(path);
}

VoxelGrid load_map_snapshot(const std::filesystem::path& path) {
  auto in = detail::ByteReader::from_file(path);
  if (in.bytes(4) != "PMAP") in.fail("bad magic");
  if (const auto version = in.u32(); version != kSnapshotVersion) {
    in.fail("unsupported version " + std::to_string(version));
  }
  TsdfConfig cfg;
  cfg.voxel_size = in.f32();
  cfg.truncation = in.f32();
  if (!(cfg.voxel_size > 0.0) || !(cfg.truncation >= cfg.voxel_size)) in.fail("bad voxel size / truncation");
  VoxelGrid grid(cfg);
  const std::uint64_t count = in.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    VoxelKey key;
    key.x = in.i32();
    key.y = in.i32();
    key.z = in.i32();
    Voxel& voxel = grid.touch(key);
    voxel.d = in.f32();
    voxel.w = in.f32();
    for (int c = 0; c < 3; ++c) voxel.color[c] = in.u8();
    voxel.label = in.u32();
    grid.note_relabel(kNoInstance, voxel.label);
    const std::uint16_t n = in.u16();
    for (std::uint16_t j = 0; j < n; ++j) {
      const InstanceId id = in.u32();
      const std::uint32_t c = in.u32();
      voxel.hist.add(id, c);
    }
  }
  if (in.remaining() != 0) in.fail("trailing bytes after voxel records");
  return grid;
}

}  // namespace panoptic
