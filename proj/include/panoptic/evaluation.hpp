#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "panoptic/query.hpp"
#include "panoptic/synth.hpp"
#include "panoptic/tracker.hpp"
#include "panoptic/tsdf.hpp"

namespace panoptic {

/// labels.txt (one name per line) paired with labels.emb rows.
LabelBank read_label_bank(const std::filesystem::path& dir);

/// Ground truth on the reconstructed surface: each surface voxel belongs to
/// the object whose analytic surface is nearest, if within two voxels.
std::vector<GtInstance> gt_instances_on_map(const VoxelGrid& grid, const std::vector<SynthObject>& objects);

/// Surface voxels labeled by each live track, scored by bank confidence and
/// classified against `labels` (class_id is the label index, -1 if unknown).
std::vector<PredictedInstance> predicted_instances(const VoxelGrid& grid, const TrackMap& tracks,
                                                   const LabelBank& labels);

struct EvalOptions {
  std::vector<double> iou_thresholds{0.25, 0.5};
  std::vector<int> excluded_classes;
};

struct EvalResult {
  std::vector<std::pair<double, double>> map;  // (threshold, mAP)
  SemanticMetrics semantic;
  double top1 = 0.0;
  std::size_t gt_instances = 0;
  std::size_t predicted_instances = 0;
};

/// Instance mAP per threshold, semantic metrics over ground-truth surface
/// voxels, and Top-1 classification of the best-overlapping prediction for
/// each ground-truth instance. Ground-truth class ids index `labels`.
EvalResult evaluate(const VoxelGrid& grid, const TrackMap& tracks, const LabelBank& labels,
                    const std::vector<SynthObject>& objects, const EvalOptions& options = {});

}  // namespace panoptic
