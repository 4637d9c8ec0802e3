#include "panoptic/tracker.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <span>

#include "panoptic/errors.hpp"

namespace panoptic {
namespace {

// The 26 directions from the cube center to its face centers, edge midpoints
// and corners.
const std::vector<Vec3>& support_directions() {
  static const std::vector<Vec3> dirs = [] {
    std::vector<Vec3> out;
    for (int x = -1; x <= 1; ++x) {
      for (int y = -1; y <= 1; ++y) {
        for (int z = -1; z <= 1; ++z) {
          if (x || y || z) out.push_back(Vec3(x, y, z).normalized());
        }
      }
    }
    return out;
  }();
  return dirs;
}

// Tightest box with the given axes around `points`.
Obb box_on_axes(const Mat3& axes, const std::vector<Vec3>& points) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3& p : points) {
    const Vec3 q = axes.transpose() * p;
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  Obb out;
  out.rotation = axes;
  out.center = axes * (0.5 * (lo + hi));
  out.extents = hi - lo;
  return out;
}

}  // namespace

double TrackerConfig::gate() const { return match_cost_max.value_or(0.9 * (w_v + w_s * std::numbers::sqrt2)); }

void TrackerConfig::validate() const {
  if (!(w_v >= 0.0) || !(w_s >= 0.0) || !(w_v + w_s > 0.0)) {
    throw ConfigError("track.w_v and track.w_s must be nonnegative with a positive sum");
  }
  if (miss_limit < 1) throw ConfigError("track.miss_limit must be >= 1");
  if (!(query_margin >= 0.0)) throw ConfigError("track.query_margin must be >= 0");
  if (!(gate() > 0.0)) throw ConfigError("track.match_cost_max must be > 0");
  if (iou_resolution < 1) throw ConfigError("track.iou_resolution must be >= 1");
}

double pair_cost(const Track& track, const Detection& det, const TrackerConfig& cfg) {
  const double v = 1.0 - obb_iou(track.obb, det.obb, cfg.iou_resolution);
  const double s = bank_distance(track.bank, det.embedding);
  return cfg.w_v * v + cfg.w_s * s;
}

CostMatrix cost_matrix(const std::vector<const Track*>& tracks, const std::vector<Detection>& dets,
                       const TrackerConfig& cfg) {
  CostMatrix m(static_cast<Eigen::Index>(tracks.size()), static_cast<Eigen::Index>(dets.size()));
  const double gate = cfg.gate();
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    for (std::size_t j = 0; j < dets.size(); ++j) {
      const double c = pair_cost(*tracks[i], dets[j], cfg);
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c > gate ? kForbidden : c;
    }
  }
  return m;
}

Association associate(const TrackMap& tracks, const std::vector<Detection>& dets, const SpatialIndex& index,
                      const TrackerConfig& cfg) {
  Association out;
  std::vector<std::vector<TrackId>> candidates(dets.size());
  std::set<TrackId> pool;
  for (std::size_t j = 0; j < dets.size(); ++j) {
    candidates[j] = index.query(obb_to_aabb(dets[j].obb), cfg.query_margin);
    pool.insert(candidates[j].begin(), candidates[j].end());
  }

  const std::vector<TrackId> rows(pool.begin(), pool.end());
  std::vector<const Track*> row_tracks;
  row_tracks.reserve(rows.size());
  for (TrackId id : rows) row_tracks.push_back(&tracks.at(id));

  const double gate = cfg.gate();
  CostMatrix m = CostMatrix::Constant(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dets.size()),
                                      kForbidden);
  for (std::size_t j = 0; j < dets.size(); ++j) {
    for (TrackId id : candidates[j]) {
      const auto i = static_cast<Eigen::Index>(std::lower_bound(rows.begin(), rows.end(), id) - rows.begin());
      const double c = pair_cost(*row_tracks[static_cast<std::size_t>(i)], dets[j], cfg);
      if (c <= gate) m(i, static_cast<Eigen::Index>(j)) = c;
    }
  }

  std::vector<bool> row_used(rows.size(), false), det_used(dets.size(), false);
  for (const auto& [i, j] : hungarian(m)) {
    out.matches.emplace_back(rows[i], j);
    row_used[i] = true;
    det_used[j] = true;
  }
  for (std::size_t j = 0; j < dets.size(); ++j) {
    if (!det_used[j]) out.new_dets.push_back(j);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!row_used[i]) out.lost.push_back(rows[i]);
  }
  return out;
}

std::vector<Vec3> extreme_points(const std::vector<Vec3>& previous, std::span<const Vec3> points) {
  const std::vector<Vec3>& dirs = support_directions();
  std::vector<Vec3> out = previous;
  if (out.size() != dirs.size()) {
    if (points.empty()) return out;
    out.assign(dirs.size(), points.front());
  }
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    double best = dirs[k].dot(out[k]);
    for (const Vec3& p : points) {
      const double s = dirs[k].dot(p);
      if (s > best) {
        best = s;
        out[k] = p;
      }
    }
  }
  return out;
}

Track make_track(TrackId id, const Detection& det, FrameIndex frame) {
  Track track;
  track.id = id;
  track.stats = det.stats;
  track.obb = det.obb;
  if (!det.points.empty()) {
    track.support = extreme_points({}, det.points);
    track.obb = box_on_axes(det.obb.rotation, track.support);
  }
  track.last_seen = frame;
  track.created_at = frame;
  return track;
}

Aabb update_geometry(Track& track, const Detection& det, FrameIndex frame, const TrackerConfig&) {
  track.stats = merge_stats(track.stats, det.stats);
  const Mat3 axes = principal_axes(track.stats.covariance());
  if (det.points.empty()) {
    const auto corners = det.obb.corners();
    track.support = extreme_points(track.support, corners);
  } else {
    track.support = extreme_points(track.support, det.points);
  }
  std::vector<Vec3> hull = track.support;
  if (hull.empty()) {
    const auto corners = track.obb.corners();
    hull.assign(corners.begin(), corners.end());
  }
  track.obb = box_on_axes(axes, hull);
  track.miss_count = 0;
  track.last_seen = frame;
  return track.aabb();
}

void update_semantics(Track& track, const Detection& det, const SemanticsConfig& sem) {
  if (det.embedding.size() == 0) return;
  track.bank = bank_update(track.bank, det.embedding, det.confidence, sem);
}

Aabb update_track(Track& track, const Detection& det, FrameIndex frame, const TrackerConfig& cfg,
                  const SemanticsConfig& sem) {
  const Aabb box = update_geometry(track, det, frame, cfg);
  update_semantics(track, det, sem);
  return box;
}

std::vector<TrackId> prune(TrackMap& tracks, SpatialIndex& index, const Frustum& frustum, const VoxelGrid& grid,
                           const TrackerConfig& cfg) {
  std::vector<TrackId> removed;
  for (auto& [id, track] : tracks) {
    if (!frustum.contains(track.obb.center)) continue;
    const double support = support_ratio(grid, track.obb, id);
    track.low_support_streak = support < cfg.supp_min ? track.low_support_streak + 1 : 0;
    const bool stale = track.miss_count >= cfg.miss_limit || track.low_support_streak >= cfg.miss_limit;
    if (stale && !(bank_confidence(track.bank) > cfg.conf_exempt)) removed.push_back(id);
  }
  for (TrackId id : removed) {
    tracks.erase(id);
    index.remove(id);
  }
  return removed;
}

Tracker::Tracker(TrackerConfig cfg, SemanticsConfig sem) : cfg_(cfg), sem_(sem) {
  cfg_.validate();
  sem_.validate();
}

Association Tracker::associate(const std::vector<Detection>& dets) const {
  return panoptic::associate(tracks_, dets, index_, cfg_);
}

std::vector<std::pair<TrackId, std::size_t>> Tracker::apply_geometry(const Association& assoc,
                                                                     const std::vector<Detection>& dets,
                                                                     const Frustum& frustum, FrameIndex frame) {
  std::vector<std::pair<TrackId, std::size_t>> used;
  for (const auto& [id, j] : assoc.matches) {
    Track& track = tracks_.at(id);
    index_.update(id, update_geometry(track, dets[j], frame, cfg_));
    used.emplace_back(id, j);
  }
  for (std::size_t j : assoc.new_dets) {
    Track track = make_track(next_id_++, dets[j], frame);
    index_.insert(track.id, track.aabb());
    used.emplace_back(track.id, j);
    tracks_.emplace(track.id, std::move(track));
  }
  for (TrackId id : assoc.lost) {
    Track& track = tracks_.at(id);
    if (frustum.contains(track.obb.center)) ++track.miss_count;
  }
  return used;
}

void Tracker::apply_semantics(const std::vector<std::pair<TrackId, std::size_t>>& used,
                              const std::vector<Detection>& dets) {
  for (const auto& [id, j] : used) update_semantics(tracks_.at(id), dets[j], sem_);
}

std::vector<TrackId> Tracker::prune(const Frustum& frustum, const VoxelGrid& grid) {
  return panoptic::prune(tracks_, index_, frustum, grid, cfg_);
}

void Tracker::restore(TrackMap tracks, TrackId next_id) {
  tracks_ = std::move(tracks);
  index_ = SpatialIndex();
  for (const auto& [id, track] : tracks_) {
    index_.insert(id, track.aabb());
    next_id = std::max(next_id, id + 1);
  }
  next_id_ = next_id;
}

}  // namespace panoptic
