#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "panoptic/semantics.hpp"
#include "panoptic/tracker.hpp"
#include "panoptic/tsdf.hpp"

namespace panoptic {

struct RankedInstance {
  TrackId id = 0;
  double score = 0.0;
};

/// Either the best `top_k` instances or all instances scoring above `threshold`.
struct RetrievalMode {
  std::optional<std::size_t> top_k;
  std::optional<double> threshold;
};

/// Tracks ranked by bank similarity to `query`, descending, lower id first on
/// ties. Tracks with empty banks are skipped.
std::vector<RankedInstance> retrieve(const TrackMap& tracks, const Embedding& query, const RetrievalMode& mode);

struct Label {
  std::string name;
  Embedding embedding;
};
using LabelBank = std::vector<Label>;

struct Classification {
  std::size_t label = 0;  // index into the label bank
  double score = 0.0;
};

/// Best label per track; the earlier label wins ties. Empty-bank tracks are
/// left out.
std::map<TrackId, Classification> classify_instances(const TrackMap& tracks, const LabelBank& labels);

/// Sorted, duplicate-free voxel set.
using VoxelSet = std::vector<VoxelKey>;

VoxelSet make_voxel_set(std::vector<VoxelKey> keys);
double voxel_iou(const VoxelSet& a, const VoxelSet& b);

struct PredictedInstance {
  VoxelSet voxels;
  double score = 0.0;
  int class_id = -1;
};

struct GtInstance {
  std::uint32_t id = 0;
  int class_id = 0;
  VoxelSet voxels;
};

/// Class-agnostic average precision at one IoU threshold with greedy matching
/// in descending score order and all-point interpolation. Throws MetricError
/// for empty ground truth or a threshold outside (0, 1).
double eval_instance_ap(const std::vector<PredictedInstance>& preds, const std::vector<GtInstance>& gt,
                        double iou_threshold);

/// Per-class AP averaged over the classes present in `gt`; predictions count
/// only toward their own class. Classes in `excluded` are skipped.
double eval_mean_ap(const std::vector<PredictedInstance>& preds, const std::vector<GtInstance>& gt,
                    double iou_threshold, const std::vector<int>& excluded = {});

struct SemanticMetrics {
  double miou = 0.0;
  double macc = 0.0;
  double fmiou = 0.0;
  double fmacc = 0.0;
};

/// Per-point labels; negative values mean "no class". Classes absent from
/// both sides are ignored, and accuracy terms cover classes present in `gt`.
/// Throws MetricError on empty or mismatched input.
SemanticMetrics eval_semantic(const std::vector<int>& pred, const std::vector<int>& gt,
                              const std::vector<int>& excluded = {});

}  // namespace panoptic
