#pragma once

#include <cstddef>
#include <vector>

#include "panoptic/geometry.hpp"
#include "panoptic/image.hpp"
#include "panoptic/semantics.hpp"

namespace panoptic {

/// One 2D instance proposal from the segmentation front end.
struct InstanceMask {
  MaskImage mask;  // nonzero = inside
  double confidence = 0.0;
  Embedding embedding;
};

struct DetectConfig {
  double mask_conf_min = 0.5;
  double dbscan_eps = 0.05;
  int dbscan_min_pts = 10;
  int min_cluster_points = 50;
  int pixel_stride = 2;

  void validate() const;
};

/// A 3D object hypothesis lifted from one mask cluster in one frame.
struct Detection {
  Obb obb;
  ObbStats stats;
  Embedding embedding;
  double confidence = 0.0;
  std::size_t point_count = 0;
  /// The cluster's world points; valid for the frame only.
  std::vector<Vec3> points;
};

struct DbscanResult {
  std::vector<std::vector<std::size_t>> clusters;
  std::vector<std::size_t> noise;
};

struct DetectCounters {
  std::size_t masks_in = 0;
  std::size_t masks_low_confidence = 0;
  std::size_t masks_without_depth = 0;
  std::size_t clusters_too_small = 0;
  std::size_t clusters_degenerate = 0;
};

struct FrameDetections {
  std::vector<Detection> detections;
  DetectCounters counters;
};

/// World points of the stride-sampled masked pixels with valid depth.
std::vector<Vec3> lift_mask(const InstanceMask& mask, const DepthImage& depth, const Pose& pose,
                            const Intrinsics& intr, const DetectConfig& cfg);

/// DBSCAN with Euclidean distance (neighborhoods include the point itself,
/// boundary inclusive). Clusters are grown breadth-first from the lowest
/// unvisited core index; a border point joins the first cluster to reach it.
DbscanResult dbscan(const std::vector<Vec3>& points, double eps, int min_pts);

FrameDetections detect_frame(const std::vector<InstanceMask>& masks, const DepthImage& depth, const Pose& pose,
                             const Intrinsics& intr, const DetectConfig& cfg);

}  // namespace panoptic
