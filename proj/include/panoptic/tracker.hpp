#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "panoptic/detect.hpp"
#include "panoptic/geometry.hpp"
#include "panoptic/hungarian.hpp"
#include "panoptic/semantics.hpp"
#include "panoptic/spatial_index.hpp"
#include "panoptic/tsdf.hpp"

namespace panoptic {

using FrameIndex = std::int64_t;

struct Track {
  TrackId id = 0;
  Obb obb;
  ObbStats stats;
  EmbeddingBank bank;
  /// Extreme observed points along a fixed set of directions; the box is
  /// fitted around them whenever the axes change.
  std::vector<Vec3> support;
  int miss_count = 0;
  int low_support_streak = 0;
  FrameIndex last_seen = 0;
  FrameIndex created_at = 0;

  Aabb aabb() const { return obb_to_aabb(obb); }
};

using TrackMap = std::map<TrackId, Track>;

struct TrackerConfig {
  double w_v = 1.0;
  double w_s = 0.5;
  /// Pairs costing more are forbidden; unset means 0.9 * (w_v + w_s * sqrt(2)).
  std::optional<double> match_cost_max;
  int miss_limit = 5;
  double query_margin = 0.1;
  double supp_min = 0.2;
  double conf_exempt = 0.9;
  int iou_resolution = 48;

  double gate() const;
  void validate() const;
};

/// w_v * (1 - IoU) + w_s * (distance from the detection embedding to the bank).
double pair_cost(const Track& track, const Detection& det, const TrackerConfig& cfg);

/// Rows are `tracks`, columns `dets`; entries above the gate are kForbidden.
CostMatrix cost_matrix(const std::vector<const Track*>& tracks, const std::vector<Detection>& dets,
                       const TrackerConfig& cfg);

struct Association {
  std::vector<std::pair<TrackId, std::size_t>> matches;  // (track, detection index)
  std::vector<std::size_t> new_dets;
  std::vector<TrackId> lost;  // candidates left unmatched
};

/// Candidate retrieval through the index, then one joint assignment over the
/// union of candidates. A track may only take a detection whose query
/// returned it.
Association associate(const TrackMap& tracks, const std::vector<Detection>& dets, const SpatialIndex& index,
                      const TrackerConfig& cfg);

/// A new track seeded from one detection.
Track make_track(TrackId id, const Detection& det, FrameIndex frame);

/// Extreme points of `previous` and `points` along the 26 directions of the
/// cube's faces, edges and corners.
std::vector<Vec3> extreme_points(const std::vector<Vec3>& previous, std::span<const Vec3> points);

/// Merges the detection's statistics, takes the axes from the merged
/// covariance and fits the box around the track's extreme points grown by
/// the detection's points (its box corners if it carries none). Returns the
/// new AABB for the index.
Aabb update_geometry(Track& track, const Detection& det, FrameIndex frame, const TrackerConfig& cfg);
void update_semantics(Track& track, const Detection& det, const SemanticsConfig& sem);
Aabb update_track(Track& track, const Detection& det, FrameIndex frame, const TrackerConfig& cfg,
                  const SemanticsConfig& sem);

/// Lifecycle check for tracks whose center is in view. Removes and returns
/// ids that have missed or lacked support for miss_limit evaluations, unless
/// their bank confidence exceeds conf_exempt.
std::vector<TrackId> prune(TrackMap& tracks, SpatialIndex& index, const Frustum& frustum, const VoxelGrid& grid,
                           const TrackerConfig& cfg);

/// Single-owner track state: association, refinement, spawning and pruning.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {}, SemanticsConfig sem = {});

  Association associate(const std::vector<Detection>& dets) const;
  /// Applies matches, spawns tracks for new detections and counts misses for
  /// lost tracks in view. Returns (track, detection) for every detection used.
  std::vector<std::pair<TrackId, std::size_t>> apply_geometry(const Association& assoc,
                                                              const std::vector<Detection>& dets,
                                                              const Frustum& frustum, FrameIndex frame);
  void apply_semantics(const std::vector<std::pair<TrackId, std::size_t>>& used, const std::vector<Detection>& dets);
  std::vector<TrackId> prune(const Frustum& frustum, const VoxelGrid& grid);

  const TrackMap& tracks() const { return tracks_; }
  const SpatialIndex& index() const { return index_; }
  const TrackerConfig& config() const { return cfg_; }
  TrackId next_id() const { return next_id_; }

  /// Replaces the state, e.g. from a snapshot.
  void restore(TrackMap tracks, TrackId next_id);

 private:
  TrackerConfig cfg_;
  SemanticsConfig sem_;
  TrackMap tracks_;
  SpatialIndex index_;
  TrackId next_id_ = 1;
};

}  // namespace panoptic
