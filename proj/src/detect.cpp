#include "panoptic/detect.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "panoptic/errors.hpp"

namespace panoptic {
namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

// Uniform hash grid with cell size eps: all eps-neighbors of a point lie in
// the 27 cells around its own.
class NeighborGrid {
 public:
  NeighborGrid(const std::vector<Vec3>& points, double eps) : points_(points), eps_(eps), eps2_(eps * eps) {
    cells_.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) cells_[cell_of(points[i])].push_back(i);
  }

  void neighbors(std::size_t i, std::vector<std::size_t>& out) const {
    out.clear();
    const Vec3& p = points_[i];
    const CellKey c = cell_of(p);
    for (std::int64_t dz = -1; dz <= 1; ++dz) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == cells_.end()) continue;
          for (std::size_t j : it->second) {
            if ((points_[j] - p).squaredNorm() <= eps2_) out.push_back(j);
          }
        }
      }
    }
    std::sort(out.begin(), out.end());
  }

 private:
  CellKey cell_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / eps_)), static_cast<std::int64_t>(std::floor(p.y() / eps_)),
            static_cast<std::int64_t>(std::floor(p.z() / eps_))};
  }

  const std::vector<Vec3>& points_;
  double eps_;
  double eps2_;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellKeyHash> cells_;
};

}  // namespace

void DetectConfig::validate() const {
  if (!(dbscan_eps > 0.0)) throw ConfigError("detect.dbscan_eps must be > 0");
  if (dbscan_min_pts < 1) throw ConfigError("detect.dbscan_min_pts must be >= 1");
  if (pixel_stride < 1) throw ConfigError("detect.pixel_stride must be >= 1");
  if (min_cluster_points < 0) throw ConfigError("detect.min_cluster_points must be >= 0");
}

std::vector<Vec3> lift_mask(const InstanceMask& mask, const DepthImage& depth, const Pose& pose,
                            const Intrinsics& intr, const DetectConfig& cfg) {
  if (mask.mask.width() != depth.width() || mask.mask.height() != depth.height()) {
    throw FormatError("mask and depth sizes differ");
  }
  std::vector<Vec3> points;
  const int stride = std::max(cfg.pixel_stride, 1);
  for (int v = 0; v < depth.height(); v += stride) {
    for (int u = 0; u < depth.width(); u += stride) {
      if (!mask.mask.at(u, v)) continue;
      if (auto p = back_project({static_cast<double>(u), static_cast<double>(v)}, depth.at(u, v), intr, pose)) {
        points.push_back(*p);
      }
    }
  }
  return points;
}

DbscanResult dbscan(const std::vector<Vec3>& points, double eps, int min_pts) {
  if (!(eps > 0.0) || min_pts < 1) throw Error("dbscan requires eps > 0 and min_pts >= 1");
  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  const std::size_t need = static_cast<std::size_t>(min_pts);

  DbscanResult result;
  const NeighborGrid grid(points, eps);
  std::vector<int> label(points.size(), kUnvisited);
  std::vector<std::size_t> hood, queue;

  for (std::size_t i = 0; i < points.size(); ++i) {
    if (label[i] != kUnvisited) continue;
    grid.neighbors(i, hood);
    if (hood.size() < need) {
      label[i] = kNoise;
      continue;
    }
    const int cluster = static_cast<int>(result.clusters.size());
    auto& members = result.clusters.emplace_back();
    label[i] = cluster;
    members.push_back(i);
    queue.assign(hood.begin(), hood.end());
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t j = queue[head];
      if (label[j] == kNoise) {
        label[j] = cluster;  // border point
        members.push_back(j);
        continue;
      }
      if (label[j] != kUnvisited) continue;
      label[j] = cluster;
      members.push_back(j);
      grid.neighbors(j, hood);
      if (hood.size() >= need) queue.insert(queue.end(), hood.begin(), hood.end());
    }
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (label[i] == kNoise) result.noise.push_back(i);
  }
  return result;
}

FrameDetections detect_frame(const std::vector<InstanceMask>& masks, const DepthImage& depth, const Pose& pose,
                             const Intrinsics& intr, const DetectConfig& cfg) {
  FrameDetections out;
  for (const InstanceMask& mask : masks) {
    ++out.counters.masks_in;
    if (mask.confidence < cfg.mask_conf_min) {
      ++out.counters.masks_low_confidence;
      continue;
    }
    std::vector<Vec3> points = lift_mask(mask, depth, pose, intr, cfg);
    if (points.empty()) {
      ++out.counters.masks_without_depth;
      continue;
    }
    const DbscanResult clusters = dbscan(points, cfg.dbscan_eps, cfg.dbscan_min_pts);
    for (const auto& members : clusters.clusters) {
      if (members.size() < static_cast<std::size_t>(cfg.min_cluster_points)) {
        ++out.counters.clusters_too_small;
        continue;
      }
      Detection det;
      det.points.reserve(members.size());
      for (std::size_t idx : members) det.points.push_back(points[idx]);
      try {
        ObbFit fit = fit_obb(det.points);
        det.obb = fit.obb;
        det.stats = fit.stats;
      } catch (const DegenerateClusterError&) {
        ++out.counters.clusters_degenerate;
        continue;
      }
      det.embedding = mask.embedding;
      det.confidence = mask.confidence;
      det.point_count = det.points.size();
      out.detections.push_back(std::move(det));
    }
  }
  return out;
}

}  // namespace panoptic
